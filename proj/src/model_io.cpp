#include "bscaling/model_io.hpp"

#include <chrono>
#include <fstream>
#include <sstream>

#include "bscaling/error.hpp"
#include "json.hpp"

namespace bscaling {

using nlohmann::json;

namespace {

json to_array(const Vector& v) {
  json out = json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Vector from_array(const json& j) {
  Vector v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Index>(i)) = j[i].get<double>();
  return v;
}

const json& field(const json& j, const char* key) {
  if (!j.contains(key)) throw Error(ErrorKind::Parse, std::string("model file: missing field '") + key + "'");
  return j.at(key);
}

std::string utc_timestamp() {
  const auto now = std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now());
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

std::string model_to_json(const FittedBScaling& model, bool with_meta) {
  json j;
  j["format_version"] = kModelFormatVersion;
  j["columns"] = model.column_names;
  json rescale = json::array();
  for (const ColumnRange& c : model.rescale.columns) rescale.push_back({{"min", c.min}, {"max", c.max}});
  j["rescale"] = rescale;
  j["order"] = model.order;
  j["k0"] = model.k0;
  json knots = json::array();
  for (const KnotSet& ks : model.knots) knots.push_back(ks.breakpoints());
  j["knots"] = knots;
  j["coefficients"] = {{"values", to_array(model.a_hat)},
                       {"offsets", model.layout.offsets},
                       {"sizes", model.layout.sizes}};
  j["b_hat"] = to_array(model.b_hat);
  j["eigenvalues"] = to_array(model.eigenvalues);
  j["d_min"] = model.d_min;
  j["b_variance"] = model.b_variance;
  j["sign"] = model.sign > 0.0 ? "largest_abs_coefficient_positive" : "largest_abs_coefficient_positive_flipped";
  j["profiled"] = model.profiled;
  j["ridge_applied"] = model.ridge_applied;
  j["fit"] = {{"n", model.n_train}, {"k0_grid", model.k0_grid}, {"warnings", model.warnings}};
  if (with_meta) j["meta"] = {{"created", utc_timestamp()}};
  return j.dump(2) + "\n";
}

FittedBScaling model_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Parse, std::string("model file: ") + e.what());
  }
  try {
    const int version = field(j, "format_version").get<int>();
    if (version != kModelFormatVersion) {
      throw Error(ErrorKind::Parse, "model file: unsupported format_version " + std::to_string(version));
    }
    FittedBScaling m;
    m.column_names = field(j, "columns").get<std::vector<std::string>>();
    for (const json& c : field(j, "rescale")) {
      m.rescale.columns.push_back({field(c, "min").get<double>(), field(c, "max").get<double>()});
    }
    m.order = field(j, "order").get<int>();
    m.k0 = field(j, "k0").get<int>();
    for (const json& bp : field(j, "knots")) m.knots.emplace_back(m.order, bp.get<std::vector<double>>());
    const json& coef = field(j, "coefficients");
    m.a_hat = from_array(field(coef, "values"));
    m.layout = BlockLayout::from_sizes(field(coef, "sizes").get<std::vector<Index>>());
    if (field(coef, "offsets").get<std::vector<Index>>() != m.layout.offsets) {
      throw Error(ErrorKind::Parse, "model file: coefficient offsets disagree with block sizes");
    }
    m.b_hat = from_array(field(j, "b_hat"));
    m.eigenvalues = from_array(field(j, "eigenvalues"));
    m.d_min = field(j, "d_min").get<double>();
    m.b_variance = field(j, "b_variance").get<double>();
    m.sign = field(j, "sign").get<std::string>() == "largest_abs_coefficient_positive" ? 1.0 : -1.0;
    m.profiled = field(j, "profiled").get<bool>();
    m.ridge_applied = field(j, "ridge_applied").get<double>();
    const json& fit = field(j, "fit");
    m.n_train = field(fit, "n").get<Index>();
    m.k0_grid = field(fit, "k0_grid").get<std::vector<int>>();
    m.warnings = field(fit, "warnings").get<std::vector<std::string>>();

    const std::size_t k = m.column_names.size();
    if (m.rescale.columns.size() != k || m.knots.size() != k || m.layout.sizes.size() != k) {
      throw Error(ErrorKind::Parse, "model file: per-column fields disagree on the column count");
    }
    if (m.layout.total != m.a_hat.size()) {
      throw Error(ErrorKind::Parse, "model file: coefficient count disagrees with block sizes");
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (m.knots[c].basis_count() != m.layout.sizes[c]) {
        throw Error(ErrorKind::Parse, "model file: knots of column " + std::to_string(c + 1) +
                                          " disagree with its block size");
      }
    }
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Parse, std::string("model file: ") + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::DomainError) throw Error(ErrorKind::Parse, std::string("model file: ") + e.what());
    throw;
  }
}

void save_model(const FittedBScaling& model, const std::string& path, bool with_meta) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Usage, "cannot write '" + path + "'");
  out << model_to_json(model, with_meta);
  if (!out) throw Error(ErrorKind::Usage, "write failed for '" + path + "'");
}

FittedBScaling load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Usage, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return model_from_json(ss.str());
}

}  // namespace bscaling
