#include "bscaling/cli.hpp"

#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "CLI11.hpp"
#include "bscaling/baselines.hpp"
#include "bscaling/core.hpp"
#include "bscaling/csv.hpp"
#include "bscaling/error.hpp"
#include "bscaling/inference.hpp"
#include "bscaling/model_io.hpp"
#include "bscaling/regression.hpp"
#include "bscaling/simlab.hpp"

namespace bscaling {

namespace {

std::string one_line(std::string s) {
  for (char& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
    if (c == '"') c = '\'';
  }
  return s;
}

void report(std::ostream& err, ErrorKind kind, const std::string& msg) {
  err << "error kind=" << to_string(kind) << " exit=" << exit_code(kind) << " msg=\"" << one_line(msg)
      << "\"\n";
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) {
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

CsvTable read_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Usage, "cannot open '" + path + "'");
  return read_csv(in);
}

/// Numeric sub-table holding the named columns (all columns when empty).
NumericTable select_columns(const CsvTable& table, const std::vector<std::string>& names) {
  if (names.empty()) return to_numeric(table);
  std::vector<std::size_t> idx;
  for (const std::string& name : names) {
    auto it = std::find(table.header.begin(), table.header.end(), name);
    if (it == table.header.end()) throw Error(ErrorKind::Parse, "missing column '" + name + "'");
    idx.push_back(static_cast<std::size_t>(it - table.header.begin()));
  }
  CsvTable sub;
  sub.header = names;
  for (const auto& row : table.rows) {
    std::vector<std::string> r;
    for (std::size_t j : idx) r.push_back(row[j]);
    sub.rows.push_back(std::move(r));
  }
  return to_numeric(sub);
}

FusionInput make_input(const NumericTable& t) {
  FusionInput input{t.data, t.header};
  input.validate();
  return input;
}

/// Writes to the file when a path is given, otherwise to `fallback`.
class Sink {
 public:
  Sink(const std::string& path, std::ostream& fallback) {
    if (!path.empty()) {
      file_ = std::make_unique<std::ofstream>(path);
      if (!*file_) throw Error(ErrorKind::Usage, "cannot write '" + path + "'");
    }
    os_ = file_ ? file_.get() : &fallback;
  }
  std::ostream& operator*() { return *os_; }

 private:
  std::unique_ptr<std::ofstream> file_;
  std::ostream* os_;
};

}  // namespace

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  try {
    const auto dots = text.find("..");
    if (dots != std::string::npos) {
      const int lo = std::stoi(text.substr(0, dots));
      const int hi = std::stoi(text.substr(dots + 2));
      if (hi < lo) throw Error(ErrorKind::Usage, "empty range '" + text + "'");
      for (int v = lo; v <= hi; ++v) out.push_back(v);
    } else {
      for (const std::string& part : split(text, ',')) out.push_back(std::stoi(part));
    }
  } catch (const std::logic_error&) {
    throw Error(ErrorKind::Usage, "expected an integer list like 11..25 or 3,5,7, got '" + text + "'");
  }
  if (out.empty()) throw Error(ErrorKind::Usage, "empty integer list");
  return out;
}

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(args, out, err);
}

int run_cli(const std::vector<std::string>& args_in, std::ostream& out, std::ostream& err) {
  CLI::App app{"B-scaling data fusion"};
  app.name("bscaling");
  app.require_subcommand(1);

  // fit
  std::string fit_input, fit_out, fit_columns, fit_select;
  int fit_k0 = 11, fit_order = 4;
  double fit_ridge = 0.0;
  bool fit_no_meta = false;
  auto* fit = app.add_subcommand("fit", "Fit B-scaling on a CSV of measurements");
  fit->add_option("--input", fit_input, "CSV with a header row")->required();
  fit->add_option("--knots", fit_k0, "Number of knot intervals k0");
  fit->add_option("--order", fit_order, "Spline order m");
  fit->add_option("--select-knots", fit_select, "Choose k0 by minimal B-variance over a grid (e.g. 11..25)");
  fit->add_option("--ridge", fit_ridge, "Relative ridge for ill-conditioned covariance (0: exact range restriction)");
  fit->add_option("--columns", fit_columns, "Comma-separated measurement columns (default: all)");
  fit->add_option("--out", fit_out, "Model JSON path")->required();
  fit->add_flag("--no-meta", fit_no_meta, "Omit the timestamp");

  // predict / transforms / bvar
  std::string pr_model, pr_input, pr_out;
  auto* predict = app.add_subcommand("predict", "Append the B-mean column to a CSV");
  predict->add_option("--model", pr_model)->required();
  predict->add_option("--input", pr_input)->required();
  predict->add_option("--out", pr_out, "Output CSV (default: stdout)");
  auto* transforms = app.add_subcommand("transforms", "Per-measurement transformed values");
  transforms->add_option("--model", pr_model)->required();
  transforms->add_option("--input", pr_input)->required();
  transforms->add_option("--out", pr_out);
  auto* bvar = app.add_subcommand("bvar", "Per-row and aggregate B-variance");
  bvar->add_option("--model", pr_model)->required();
  bvar->add_option("--input", pr_input)->required();
  bvar->add_option("--out", pr_out);

  // select-knots
  std::string sk_input, sk_grid = "11..25", sk_out, sk_columns;
  int sk_order = 4;
  auto* select = app.add_subcommand("select-knots", "Table of (k0, B-variance, d_min)");
  select->add_option("--input", sk_input)->required();
  select->add_option("--grid", sk_grid);
  select->add_option("--order", sk_order);
  select->add_option("--columns", sk_columns);
  select->add_option("--out", sk_out);

  // infer
  std::string inf_model, inf_input, inf_at, inf_out;
  double inf_level = 0.95;
  Index inf_max_dim = kDefaultMaxInferenceDim;
  auto* infer = app.add_subcommand("infer", "Prediction intervals for the B-mean");
  infer->add_option("--model", inf_model)->required();
  infer->add_option("--input", inf_input, "Training CSV the model was fitted on")->required();
  infer->add_option("--at", inf_at, "CSV of new rows")->required();
  infer->add_option("--level", inf_level)->check(CLI::Range(0.0, 1.0));
  infer->add_option("--max-dim", inf_max_dim, "Largest working dimension allowed");
  infer->add_option("--out", inf_out);

  // simulate
  SimConfig sim;
  std::string sim_latent = "uniform", sim_family = "logit", sim_out, sim_latent_out;
  auto* simulate = app.add_subcommand("simulate", "Generate one simulated dataset");
  simulate->add_option("--n", sim.n);
  simulate->add_option("--k", sim.k);
  simulate->add_option("--latent", sim_latent, "uniform|normal");
  simulate->add_option("--family", sim_family, "logit|mixed");
  simulate->add_option("--noise-var", sim.noise_variance);
  simulate->add_option("--nu", sim.nu);
  simulate->add_option("--terms", sim.h, "Number of terms H in the measurement sum");
  simulate->add_option("--seed", sim.seed);
  simulate->add_option("--out", sim_out, "Measurements CSV (default: stdout)");
  simulate->add_option("--latent-out", sim_latent_out, "CSV with the latent column y");

  // bench
  SimConfig bench_base;
  std::string b_ns = "1000", b_ks = "10", b_latent = "uniform", b_family = "logit", b_grid = "11..25";
  std::string b_out, b_summary;
  int b_reps = 100, b_fixed = 0;
  unsigned b_threads = 0;
  bool b_no_meta = false;
  auto* bench = app.add_subcommand("bench", "Benchmark B-mean against PC_max and MDS");
  bench->add_option("--n", b_ns, "Sample sizes, e.g. 500,1000");
  bench->add_option("--k", b_ks, "Measurement counts, e.g. 7,10");
  bench->add_option("--reps", b_reps);
  bench->add_option("--latent", b_latent);
  bench->add_option("--family", b_family);
  bench->add_option("--noise-var", bench_base.noise_variance);
  bench->add_option("--nu", bench_base.nu);
  bench->add_option("--terms", bench_base.h);
  bench->add_option("--seed", bench_base.seed);
  bench->add_option("--grid", b_grid, "k0 grid for selection");
  bench->add_option("--fixed-k0", b_fixed, "Skip selection and use this k0");
  bench->add_option("--threads", b_threads, "Worker count (default: BSCALING_THREADS or hardware)");
  bench->add_option("--out", b_out, "Tidy CSV (default: stdout)");
  bench->add_option("--summary", b_summary, "Summary CSV");
  bench->add_flag("--no-meta", b_no_meta, "Omit runtime columns");

  // r2
  std::string r_fused, r_response, r_fused_col, r_response_col;
  bool r_log = false;
  auto* r2 = app.add_subcommand("r2", "Adjusted R^2 of (log) response on a fused score");
  r2->add_option("--fused", r_fused)->required();
  r2->add_option("--response", r_response)->required();
  r2->add_option("--fused-column", r_fused_col, "Default: bmean if present, else the last column");
  r2->add_option("--response-column", r_response_col, "Default: the first column");
  r2->add_flag("--log-response", r_log);

  std::vector<std::string> args(args_in.rbegin(), args_in.rend());
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    report(err, ErrorKind::Usage, e.what());
    return exit_code(ErrorKind::Usage);
  }

  try {
    if (*fit) {
      const CsvTable table = read_table(fit_input);
      const FusionInput input = make_input(select_columns(table, split(fit_columns, ',')));
      FitOptions opts;
      opts.order = fit_order;
      opts.ridge = fit_ridge;
      opts.k0 = fit_k0;
      std::vector<int> grid;
      if (!fit_select.empty()) {
        grid = parse_int_list(fit_select);
        opts.k0 = select_k0(input, grid, fit_order).best_k0;
      }
      FittedBScaling model = fit_bscaling(input, opts);
      model.k0_grid = grid.empty() ? std::vector<int>{opts.k0} : grid;
      save_model(model, fit_out, !fit_no_meta);
      out << "k0=" << model.k0 << "\n";
      out << "d_min=" << format_number(model.d_min) << "\n";
      out << "b_variance=" << format_number(model.b_variance) << "\n";
      for (const std::string& w : model.warnings) out << "warning: " << w << "\n";
    } else if (*predict || *transforms || *bvar) {
      const FittedBScaling model = load_model(pr_model);
      const CsvTable table = read_table(pr_input);
      const NumericTable t = select_columns(table, model.column_names);
      Sink sink(pr_out, out);
      if (*predict) {
        const Vector bmean = predict_bmean(model, t.data);
        std::vector<std::string> header = table.header;
        header.push_back("bmean");
        write_csv_row(*sink, header);
        for (std::size_t i = 0; i < table.rows.size(); ++i) {
          std::vector<std::string> row = table.rows[i];
          row.push_back(format_number(bmean(static_cast<Index>(i))));
          write_csv_row(*sink, row);
        }
      } else if (*transforms) {
        std::vector<std::string> header;
        for (const std::string& name : model.column_names) header.push_back("f_" + name);
        write_numeric_csv(*sink, header, component_transforms(model, t.data));
      } else {
        const BVariance bv = b_variance(model, FusionInput{t.data, t.header});
        write_numeric_csv(*sink, {"b_variance"}, bv.per_row);
        (pr_out.empty() ? err : out) << "aggregate_b_variance=" << format_number(bv.aggregate) << "\n";
      }
    } else if (*select) {
      const CsvTable table = read_table(sk_input);
      const FusionInput input = make_input(select_columns(table, split(sk_columns, ',')));
      const K0Selection sel = select_k0(input, parse_int_list(sk_grid), sk_order);
      Sink sink(sk_out, out);
      write_csv_row(*sink, {"k0", "b_variance", "d_min", "error"});
      for (const K0Row& row : sel.table) {
        const bool ok = row.error.empty();
        write_csv_row(*sink, {std::to_string(row.k0), ok ? format_number(row.b_variance) : "",
                              ok ? format_number(row.d_min) : "", row.error});
      }
      (sk_out.empty() ? err : out) << "best_k0=" << sel.best_k0 << "\n";
    } else if (*infer) {
      const FittedBScaling model = load_model(inf_model);
      const FusionInput input = make_input(select_columns(read_table(inf_input), model.column_names));
      const NumericTable at = select_columns(read_table(inf_at), model.column_names);
      const AsymptoticModel asy = build_asymptotic_model(model, input, inf_max_dim);
      Sink sink(inf_out, out);
      write_csv_row(*sink, {"mu_hat", "sigma_mu", "level", "lower", "upper", "n"});
      for (Index i = 0; i < at.data.rows(); ++i) {
        const PredictionCI ci = sigma_mu_ci(model, asy, at.data.row(i).transpose(), inf_level);
        write_csv_row(*sink, {format_number(ci.mu_hat), format_number(ci.sigma_mu),
                              format_number(ci.level), format_number(ci.lower),
                              format_number(ci.upper), std::to_string(ci.n)});
      }
    } else if (*simulate) {
      sim.latent = parse_latent(sim_latent);
      sim.family = parse_family(sim_family);
      sim.validate();
      const Vector y = gen_latent(sim);
      const Matrix w = gen_measurements(y, sim);
      std::vector<std::string> header;
      for (Index k = 0; k < sim.k; ++k) header.push_back("w" + std::to_string(k + 1));
      {
        Sink sink(sim_out, out);
        write_numeric_csv(*sink, header, w);
      }
      if (!sim_latent_out.empty()) {
        Sink sink(sim_latent_out, out);
        write_numeric_csv(*sink, {"y"}, y);
      }
    } else if (*bench) {
      bench_base.latent = parse_latent(b_latent);
      bench_base.family = parse_family(b_family);
      std::vector<SimConfig> settings;
      for (int n : parse_int_list(b_ns)) {
        for (int k : parse_int_list(b_ks)) {
          SimConfig c = bench_base;
          c.n = n;
          c.k = k;
          c.validate();
          settings.push_back(c);
        }
      }
      BenchOptions opts;
      opts.fixed_k0 = b_fixed;
      opts.threads = b_threads;
      const BenchReport rep =
          run_benchmark(settings, b_reps, b_fixed > 0 ? std::vector<int>{} : parse_int_list(b_grid), opts);
      {
        Sink sink(b_out, out);
        write_tidy_csv(*sink, rep);
      }
      if (!b_summary.empty()) {
        Sink sink(b_summary, out);
        write_summary_csv(*sink, rep, !b_no_meta);
      }
      if (rep.failures > 0) err << "info failures=" << rep.failures << "\n";
    } else if (*r2) {
      const NumericTable fused = to_numeric(read_table(r_fused));
      const NumericTable resp = to_numeric(read_table(r_response));
      Index fc = fused.data.cols() - 1;
      if (!r_fused_col.empty()) {
        fc = fused.column(r_fused_col);
      } else if (auto it = std::find(fused.header.begin(), fused.header.end(), "bmean"); it != fused.header.end()) {
        fc = it - fused.header.begin();
      }
      const Index rc = r_response_col.empty() ? 0 : resp.column(r_response_col);
      const RegressionFit f = adjusted_r2(fused.data.col(fc), resp.data.col(rc), r_log);
      out << "alpha0=" << format_number(f.alpha0) << "\n";
      out << "alpha1=" << format_number(f.alpha1) << "\n";
      out << "r2=" << format_number(f.r2) << "\n";
      out << "adj_r2=" << format_number(f.adj_r2) << "\n";
    }
  } catch (const Error& e) {
    report(err, e.kind(), e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    report(err, ErrorKind::Parse, e.what());
    return exit_code(ErrorKind::Parse);
  }
  return 0;
}

}  // namespace bscaling
