#include "bscaling/simlab.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <map>
#include <ostream>
#include <thread>
#include <tuple>

#include "bscaling/baselines.hpp"
#include "bscaling/core.hpp"
#include "bscaling/csv.hpp"
#include "bscaling/error.hpp"

namespace bscaling {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

template <class Fn>
void parallel_for(int count, unsigned threads, Fn&& fn) {
  if (threads <= 1 || count <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::jthread> workers;
  const unsigned used = std::min<unsigned>(threads, static_cast<unsigned>(count));
  for (unsigned t = 0; t < used; ++t) {
    workers.emplace_back([&] {
      for (int i = next++; i < count; i = next++) fn(i);
    });
  }
}

double moment_skewness(const std::vector<double>& x) {
  const double n = static_cast<double>(x.size());
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= n;
  double m2 = 0.0, m3 = 0.0;
  for (double v : x) {
    m2 += (v - mean) * (v - mean);
    m3 += (v - mean) * (v - mean) * (v - mean);
  }
  m2 /= n;
  m3 /= n;
  return m3 / std::pow(m2, 1.5);
}

double moment_excess_kurtosis(const std::vector<double>& x) {
  const double n = static_cast<double>(x.size());
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= n;
  double m2 = 0.0, m4 = 0.0;
  for (double v : x) {
    const double d2 = (v - mean) * (v - mean);
    m2 += d2;
    m4 += d2 * d2;
  }
  m2 /= n;
  m4 /= n;
  return m4 / (m2 * m2) - 3.0;
}

SummaryRow summarize(const TidyRow& key, std::vector<double> values) {
  SummaryRow s;
  s.n = key.n;
  s.k = key.k;
  s.latent = key.latent;
  s.family = key.family;
  s.noise_variance = key.noise_variance;
  s.method = key.method;
  s.count = static_cast<int>(values.size());
  std::sort(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.sd = values.size() > 1 ? std::sqrt(ss / static_cast<double>(values.size() - 1)) : 0.0;
  s.q1 = sorted_quantile(values, 0.25);
  s.median = sorted_quantile(values, 0.5);
  s.q3 = sorted_quantile(values, 0.75);
  return s;
}

}  // namespace

std::string_view to_string(Latent latent) {
  return latent == Latent::Uniform01 ? "uniform" : "normal";
}

std::string_view to_string(TransformFamily family) {
  return family == TransformFamily::LogitOnly ? "logit" : "mixed";
}

Latent parse_latent(std::string_view s) {
  if (s == "uniform") return Latent::Uniform01;
  if (s == "normal") return Latent::StdNormal;
  throw Error(ErrorKind::Usage, "unknown latent law '" + std::string(s) + "' (uniform|normal)");
}

TransformFamily parse_family(std::string_view s) {
  if (s == "logit") return TransformFamily::LogitOnly;
  if (s == "mixed") return TransformFamily::Mixed;
  throw Error(ErrorKind::Usage, "unknown transform family '" + std::string(s) + "' (logit|mixed)");
}

void SimConfig::validate() const {
  if (n < 1) throw Error(ErrorKind::Usage, "SimConfig: n must be >= 1");
  if (k < 2) throw Error(ErrorKind::Usage, "SimConfig: K must be >= 2");
  if (!(noise_variance >= 0.0)) throw Error(ErrorKind::Usage, "SimConfig: noise variance must be >= 0");
  if (h < 1) throw Error(ErrorKind::Usage, "SimConfig: H must be >= 1");
}

std::uint64_t derive_seed(std::uint64_t seed, Stream stream, std::uint64_t index) {
  return splitmix64(splitmix64(splitmix64(seed) ^ static_cast<std::uint64_t>(stream)) ^ index);
}

std::mt19937_64 make_rng(std::uint64_t seed, Stream stream, std::uint64_t index) {
  return std::mt19937_64(derive_seed(seed, stream, index));
}

double logit_link(double x) { return 1.0 / (1.0 + std::exp(20.0 * (x - 0.5))); }

double log_ratio_link(int t, double x) {
  constexpr double kFloor = 1e-12;
  if (std::abs(x) < kFloor) x = x < 0.0 ? -kFloor : kFloor;
  return std::log(std::abs(static_cast<double>(t) / x));
}

Vector delta_weights(double nu, int h) {
  Vector delta(h);
  for (int t = 1; t <= h; ++t) {
    delta(t - 1) = (t % 2 == 1 ? 1.0 : -1.0) * std::pow(static_cast<double>(t), -nu / 2.0);
  }
  return delta;
}

SimWorld draw_world(const SimConfig& cfg) {
  cfg.validate();
  auto rng = make_rng(cfg.seed, Stream::World);
  std::uniform_real_distribution<double> scale(-10.0, 10.0);
  std::uniform_real_distribution<double> zdist(-std::sqrt(3.0), std::sqrt(3.0));
  SimWorld world;
  world.scale.resize(cfg.k);
  world.z.resize(cfg.k, cfg.h);
  for (Index k = 0; k < cfg.k; ++k) {
    world.scale(k) = scale(rng);
    for (int t = 0; t < cfg.h; ++t) world.z(k, t) = zdist(rng);
  }
  world.delta = delta_weights(cfg.nu, cfg.h);
  return world;
}

Vector gen_latent(const SimConfig& cfg) {
  cfg.validate();
  auto rng = make_rng(cfg.seed, Stream::Latent);
  Vector y(cfg.n);
  if (cfg.latent == Latent::Uniform01) {
    std::uniform_real_distribution<double> d(0.0, 1.0);
    for (Index i = 0; i < cfg.n; ++i) y(i) = d(rng);
  } else {
    std::normal_distribution<double> d(0.0, 1.0);
    for (Index i = 0; i < cfg.n; ++i) y(i) = d(rng);
  }
  return y;
}

namespace {

double measure(double x, Index k, const SimConfig& cfg, const SimWorld& world) {
  const bool logit = cfg.family == TransformFamily::LogitOnly || k < (cfg.k + 1) / 2;
  double w = 0.0;
  for (int t = 1; t <= cfg.h; ++t) {
    const double g = logit ? logit_link(x) : log_ratio_link(t, x);
    w += world.scale(k) * world.z(k, t - 1) * world.delta(t - 1) * g;
  }
  return w;
}

}  // namespace

Matrix gen_measurements(const Vector& y, const SimConfig& cfg) {
  return gen_measurements(y, cfg, draw_world(cfg));
}

Matrix gen_measurements(const Vector& y, const SimConfig& cfg, const SimWorld& world) {
  cfg.validate();
  auto rng = make_rng(cfg.seed, Stream::Noise);
  std::normal_distribution<double> noise(0.0, std::sqrt(cfg.noise_variance));
  Matrix w(y.size(), cfg.k);
  for (Index i = 0; i < y.size(); ++i) {
    for (Index k = 0; k < cfg.k; ++k) {
      const double e = cfg.noise_variance > 0.0 ? noise(rng) : 0.0;
      w(i, k) = measure(y(i) + e, k, cfg, world);
    }
  }
  return w;
}

Vector measure_noiseless(double y, const SimConfig& cfg, const SimWorld& world) {
  Vector w(cfg.k);
  for (Index k = 0; k < cfg.k; ++k) w(k) = measure(y, k, cfg, world);
  return w;
}

unsigned thread_count_from_env() {
  if (const char* env = std::getenv("BSCALING_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

double BenchReport::mean_of(const std::string& method, Index n, Index k) const {
  for (const SummaryRow& s : summary) {
    if (s.method == method && s.n == n && s.k == k) return s.mean;
  }
  return std::nan("");
}

BenchReport run_benchmark(const std::vector<SimConfig>& settings, int reps,
                          const std::vector<int>& k0_grid, const BenchOptions& opts) {
  if (reps < 1) throw Error(ErrorKind::Usage, "run_benchmark: reps must be >= 1");
  if (k0_grid.empty() && opts.fixed_k0 <= 0) throw Error(ErrorKind::Usage, "run_benchmark: empty k0 grid");
  const unsigned threads = opts.threads > 0 ? opts.threads : thread_count_from_env();
  static const std::vector<std::string> kMethods{"bmean", "pc_max", "mds", "rho_max", "rho_bar0"};

  struct RepResult {
    bool ok = false;
    std::string error;
    std::vector<double> values;
    double seconds = 0.0;
  };

  BenchReport report;
  report.reps = reps;
  double total_seconds = 0.0;
  int fits = 0;
  for (const SimConfig& base : settings) {
    base.validate();
    std::vector<RepResult> results(static_cast<std::size_t>(reps));
    parallel_for(reps, threads, [&](int rep) {
      RepResult& res = results[static_cast<std::size_t>(rep)];
      try {
        SimConfig cfg = base;
        cfg.seed = derive_seed(base.seed, Stream::Replication, static_cast<std::uint64_t>(rep));
        const Vector y = gen_latent(cfg);
        const FusionInput input = FusionInput::from_matrix(gen_measurements(y, cfg));

        const auto start = std::chrono::steady_clock::now();
        const int k0 = opts.fixed_k0 > 0 ? opts.fixed_k0 : select_k0(input, k0_grid, opts.order).best_k0;
        const FittedBScaling model = fit_bscaling(input, k0, opts.order);
        res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

        const Vector bmean = predict_bmean(model, input.data);
        const PcaResult pca = pca_scores(input.data);
        const Vector mds = mds_embed_1d(input.data);
        const CorrReport corr = corr_metrics(input.data, {{"bmean", bmean}, {"mds", mds}}, y);
        res.values = {corr.per_method.at("bmean"), pc_max_corr(pca.scores, y),
                      corr.per_method.at("mds"), corr.rho_max, corr.rho_bar0};
        res.ok = true;
      } catch (const Error& e) {
        res.error = std::string(to_string(e.kind())) + ": " + e.what();
      }
    });

    std::map<std::string, std::vector<double>> by_method;
    for (int rep = 0; rep < reps; ++rep) {
      const RepResult& res = results[static_cast<std::size_t>(rep)];
      if (!res.ok) {
        ++report.failures;
        report.failure_messages.push_back(res.error);
        continue;
      }
      total_seconds += res.seconds;
      ++fits;
      for (std::size_t m = 0; m < kMethods.size(); ++m) {
        TidyRow row;
        row.n = base.n;
        row.k = base.k;
        row.latent = base.latent;
        row.family = base.family;
        row.noise_variance = base.noise_variance;
        row.method = kMethods[m];
        row.rep = rep;
        row.abs_corr = res.values[m];
        report.rows.push_back(row);
        by_method[kMethods[m]].push_back(row.abs_corr);
      }
    }
    for (const std::string& method : kMethods) {
      auto it = by_method.find(method);
      if (it == by_method.end()) continue;
      TidyRow key;
      key.n = base.n;
      key.k = base.k;
      key.latent = base.latent;
      key.family = base.family;
      key.noise_variance = base.noise_variance;
      key.method = method;
      report.summary.push_back(summarize(key, it->second));
    }
  }
  const int total = reps * static_cast<int>(settings.size());
  if (total > 0 && report.failures * 20 >= total) {
    throw Error(ErrorKind::SingularMatrix,
                "run_benchmark: " + std::to_string(report.failures) + " of " +
                    std::to_string(total) + " replications failed; first: " +
                    report.failure_messages.front());
  }
  report.mean_fit_seconds = fits > 0 ? total_seconds / fits : 0.0;
  return report;
}

void write_tidy_csv(std::ostream& os, const BenchReport& report) {
  write_csv_row(os, {"n", "K", "latent", "family", "noise_var", "method", "rep", "abs_corr"});
  for (const TidyRow& r : report.rows) {
    write_csv_row(os, {std::to_string(r.n), std::to_string(r.k), std::string(to_string(r.latent)),
                       std::string(to_string(r.family)), format_number(r.noise_variance), r.method,
                       std::to_string(r.rep), format_number(r.abs_corr)});
  }
}

void write_summary_csv(std::ostream& os, const BenchReport& report, bool with_meta) {
  std::vector<std::string> header{"n", "K", "latent", "family", "noise_var", "method",
                                  "count", "mean", "sd", "q1", "median", "q3"};
  if (with_meta) header.push_back("mean_fit_seconds");
  write_csv_row(os, header);
  for (const SummaryRow& s : report.summary) {
    std::vector<std::string> f{std::to_string(s.n), std::to_string(s.k),
                               std::string(to_string(s.latent)), std::string(to_string(s.family)),
                               format_number(s.noise_variance), s.method, std::to_string(s.count),
                               format_number(s.mean), format_number(s.sd), format_number(s.q1),
                               format_number(s.median), format_number(s.q3)};
    if (with_meta) f.push_back(format_number(report.mean_fit_seconds));
    write_csv_row(os, f);
  }
}

CoverageReport mc_coverage(const SimConfig& cfg, const Vector& w_new_in, int reps, double level,
                           const CoverageOptions& opts) {
  cfg.validate();
  if (reps < 1) throw Error(ErrorKind::Usage, "mc_coverage: reps must be >= 1");
  const SimWorld world = draw_world(cfg);

  // Reference fit: fixes rescaling and knots, and gives mu_B(w_new).
  SimConfig ref_cfg = cfg;
  ref_cfg.n = opts.reference_n;
  ref_cfg.seed = derive_seed(cfg.seed, Stream::Reference);
  const Vector y_ref = gen_latent(ref_cfg);
  const FusionInput ref_input = FusionInput::from_matrix(gen_measurements(y_ref, ref_cfg, world));
  const FittedBScaling reference = fit_bscaling(ref_input, opts.k0, opts.order);

  CoverageReport report;
  report.w_new = w_new_in.size() > 0
                     ? w_new_in
                     : measure_noiseless(cfg.latent == Latent::Uniform01 ? 0.5 : 0.0, cfg, world);
  report.mu_reference = predict_bmean(reference, report.w_new.transpose())(0);
  report.reps = reps;

  FitOptions fit_opts;
  fit_opts.order = opts.order;
  fit_opts.k0 = opts.k0;
  fit_opts.rescale = reference.rescale;
  fit_opts.knots = reference.knots;

  struct RepResult {
    bool ok = false;
    bool covered = false;
    double width = 0.0;
    double sigma = 0.0;
    double standardized = 0.0;
  };
  std::vector<RepResult> results(static_cast<std::size_t>(reps));
  const unsigned threads = opts.threads > 0 ? opts.threads : thread_count_from_env();
  parallel_for(reps, threads, [&](int rep) {
    RepResult& res = results[static_cast<std::size_t>(rep)];
    try {
      SimConfig rep_cfg = cfg;
      rep_cfg.seed = derive_seed(cfg.seed, Stream::Replication, static_cast<std::uint64_t>(rep));
      const Vector y = gen_latent(rep_cfg);
      const FusionInput input = FusionInput::from_matrix(gen_measurements(y, rep_cfg, world));
      FittedBScaling model = fit_bscaling(input, fit_opts);
      // The B-mean is identified up to sign; align with the reference.
      const Vector mine = predict_bmean(model, input.data);
      const Vector theirs = predict_bmean(reference, input.data);
      if ((mine.array() - mine.mean()).matrix().dot((theirs.array() - theirs.mean()).matrix()) < 0.0) {
        model = flip_sign(std::move(model));
      }
      const AsymptoticModel asy = build_asymptotic_model(model, input, opts.max_dim);
      const PredictionCI ci = sigma_mu_ci(model, asy, report.w_new, level);
      res.covered = ci.lower <= report.mu_reference && report.mu_reference <= ci.upper;
      res.width = ci.upper - ci.lower;
      res.sigma = ci.sigma_mu;
      res.standardized = ci.sigma_mu > 0.0
                             ? std::sqrt(static_cast<double>(cfg.n)) *
                                   (ci.mu_hat - report.mu_reference) / ci.sigma_mu
                             : 0.0;
      res.ok = true;
    } catch (const Error&) {
      res.ok = false;
    }
  });

  int ok = 0, covered = 0;
  for (const RepResult& r : results) {
    if (!r.ok) {
      ++report.failures;
      continue;
    }
    ++ok;
    covered += r.covered ? 1 : 0;
    report.mean_width += r.width;
    report.mean_sigma += r.sigma;
    report.standardized_errors.push_back(r.standardized);
  }
  if (ok == 0) throw Error(ErrorKind::SingularMatrix, "mc_coverage: every replication failed");
  report.coverage = static_cast<double>(covered) / ok;
  report.mean_width /= ok;
  report.mean_sigma /= ok;
  if (ok > 2) {
    report.skewness = moment_skewness(report.standardized_errors);
    report.excess_kurtosis = moment_excess_kurtosis(report.standardized_errors);
  }
  return report;
}

}  // namespace bscaling
