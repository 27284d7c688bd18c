#pragma once

// CSV datasets, JSON run configuration, model-tier design matrices and the
// held-out deviance statistic.

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "json.hpp"
#include "sicglmm/covariance.hpp"
#include "sicglmm/errors.hpp"
#include "sicglmm/family.hpp"
#include "sicglmm/sic.hpp"
#include "sicglmm/simulation.hpp"

namespace sicglmm {

using Json = nlohmann::ordered_json;

// ---------------------------------------------------------------- numbers

/// Shortest text with 17 significant digits ("%.17g"), which round-trips.
inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, const std::string& context) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (!s.empty() && s.front() == '+') ++first;
  const auto res = std::from_chars(first, last, v);
  if (s.empty() || res.ec != std::errc() || res.ptr != last)
    throw ValidationError(context + ": '" + std::string(s) + "' is not a number");
  return v;
}

// ---------------------------------------------------------------- csv

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::optional<std::size_t> column(std::string_view name) const {
    for (std::size_t j = 0; j < header.size(); ++j)
      if (header[j] == name) return j;
    return std::nullopt;
  }
};

namespace detail {
inline std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && (s[a] == ' ' || s[a] == '\t' || s[a] == '\r')) ++a;
  while (b > a && (s[b - 1] == ' ' || s[b - 1] == '\t' || s[b - 1] == '\r')) --b;
  s = s.substr(a, b - a);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return std::string(s);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(',', start);
    out.push_back(trim(std::string_view(line).substr(start, pos == std::string::npos ? std::string::npos : pos - start)));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}
}  // namespace detail

inline CsvTable read_csv(std::istream& in, const std::string& source) {
  CsvTable t;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    auto fields = detail::split_csv_line(line);
    if (!have_header) {
      t.header = std::move(fields);
      for (std::size_t j = 0; j < t.header.size(); ++j) {
        if (t.header[j].empty()) throw ValidationError(source + ": header has an empty column name");
        for (std::size_t k = 0; k < j; ++k)
          if (t.header[k] == t.header[j]) throw ValidationError(source + ": duplicate column '" + t.header[j] + "'");
      }
      have_header = true;
      continue;
    }
    if (fields.size() != t.header.size()) {
      std::ostringstream os;
      os << source << ": line " << lineno << " has " << fields.size() << " fields, header has " << t.header.size();
      throw ValidationError(os.str());
    }
    t.rows.push_back(std::move(fields));
  }
  if (!have_header) throw ValidationError(source + ": file is empty (a header row is required)");
  return t;
}

inline CsvTable read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  return read_csv(in, path);
}

// ---------------------------------------------------------------- config

enum class ModelTier { intercept, main_effects, quadratic };

inline std::string_view to_string(ModelTier t) {
  switch (t) {
    case ModelTier::intercept: return "intercept";
    case ModelTier::main_effects: return "main_effects";
    case ModelTier::quadratic: return "quadratic";
  }
  return "unknown";
}

inline ModelTier parse_tier(std::string_view s) {
  if (s == "intercept") return ModelTier::intercept;
  if (s == "main_effects" || s == "main-effects") return ModelTier::main_effects;
  if (s == "quadratic") return ModelTier::quadratic;
  throw ValidationError("unknown model_tier '" + std::string(s) + "' (expected intercept, main_effects or quadratic)");
}

struct ValidateConfig {
  int splits = 10;
  Index n_train = 80;
  Index n_test = 20;
  std::vector<ModelTier> tiers{ModelTier::intercept, ModelTier::main_effects, ModelTier::quadratic};
};

struct SimulateConfig {
  SimConfig base{};
  std::vector<double> beta1_values{0.0};
};

struct VerifyConfig {
  int identity_instances = 100;
  int poisson_instances = 12;
  int binomial_instances = 12;
  int gaussian_instances = 6;
  Index max_n = 8;
  int order = 0;  // 0: default per dimension
};

struct RunConfig {
  Family family = Family::poisson;
  double gaussian_variance = 1.0;
  std::vector<std::string> covariates;
  ModelTier tier = ModelTier::intercept;
  bool estimate_omega = false;
  MaternParams omega{};
  std::optional<VectorXd> beta;
  SicOptions sic{};
  NelderMeadOptions optimizer{};
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  ValidateConfig validate{};
  SimulateConfig simulate{};
  VerifyConfig verify{};
};

namespace detail {

inline void check_keys(const Json& obj, std::initializer_list<std::string_view> allowed, const std::string& where) {
  if (!obj.is_object()) throw ValidationError("config: '" + where + "' must be an object");
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw ValidationError("config: unknown key '" + (where.empty() ? key : where + "." + key) + "'");
  }
}

inline double get_number(const Json& j, const std::string& key) {
  if (!j.is_number()) throw ValidationError("config: '" + key + "' must be a number");
  return j.get<double>();
}

inline std::int64_t get_integer(const Json& j, const std::string& key) {
  if (!j.is_number_integer() && !j.is_number_unsigned()) throw ValidationError("config: '" + key + "' must be an integer");
  return j.get<std::int64_t>();
}

inline std::string get_string(const Json& j, const std::string& key) {
  if (!j.is_string()) throw ValidationError("config: '" + key + "' must be a string");
  return j.get<std::string>();
}

inline std::vector<double> get_numbers(const Json& j, const std::string& key) {
  std::vector<double> out;
  if (j.is_number()) return {j.get<double>()};
  if (!j.is_array()) throw ValidationError("config: '" + key + "' must be a number or an array of numbers");
  for (const auto& e : j) out.push_back(get_number(e, key));
  return out;
}

inline MaternParams parse_matern(const Json& j, const std::string& where) {
  check_keys(j, {"omega1", "omega2", "omega3"}, where);
  MaternParams p;
  if (j.contains("omega1")) p.omega1 = get_number(j["omega1"], where + ".omega1");
  if (j.contains("omega2")) p.omega2 = get_number(j["omega2"], where + ".omega2");
  if (j.contains("omega3")) p.omega3 = get_number(j["omega3"], where + ".omega3");
  p.validate();
  return p;
}

inline void parse_sic(const Json& j, SicOptions& s) {
  check_keys(j, {"tol", "max_iter", "damping", "path"}, "sic");
  if (j.contains("tol")) s.tol = get_number(j["tol"], "sic.tol");
  if (j.contains("max_iter")) s.max_iter = static_cast<int>(get_integer(j["max_iter"], "sic.max_iter"));
  if (j.contains("damping")) s.damping = get_number(j["damping"], "sic.damping");
  if (j.contains("path")) {
    const auto p = get_string(j["path"], "sic.path");
    if (p == "automatic") s.path = SolvePath::automatic;
    else if (p == "observation") s.path = SolvePath::observation_space;
    else if (p == "effect") s.path = SolvePath::effect_space;
    else throw ValidationError("config: sic.path must be automatic, observation or effect");
  }
  s.validate();
}

inline std::vector<ModelTier> parse_tiers(const Json& j) {
  if (!j.is_array() || j.empty()) throw ValidationError("config: 'validate.tiers' must be a non-empty array");
  std::vector<ModelTier> out;
  for (const auto& e : j) out.push_back(parse_tier(get_string(e, "validate.tiers")));
  return out;
}

}  // namespace detail

/// Schema-checked run configuration. Unknown keys are rejected by name.
inline RunConfig parse_config(const Json& j) {
  using namespace detail;
  check_keys(j,
             {"family", "gaussian_variance", "covariates", "model_tier", "matern", "beta", "sic", "optimizer", "seed",
              "output_dir", "validate", "simulate", "verify"},
             "");
  RunConfig c;
  if (j.contains("family")) c.family = parse_family(get_string(j["family"], "family"));
  if (j.contains("gaussian_variance")) {
    c.gaussian_variance = get_number(j["gaussian_variance"], "gaussian_variance");
    if (!(c.gaussian_variance > 0.0)) throw ValidationError("config: gaussian_variance must be positive");
  }
  if (j.contains("covariates")) {
    if (!j["covariates"].is_array()) throw ValidationError("config: 'covariates' must be an array of column names");
    for (const auto& e : j["covariates"]) c.covariates.push_back(get_string(e, "covariates"));
  }
  if (j.contains("model_tier")) c.tier = parse_tier(get_string(j["model_tier"], "model_tier"));
  if (j.contains("matern")) {
    const Json& m = j["matern"];
    if (m.is_string()) {
      if (m.get<std::string>() != "estimate") throw ValidationError("config: 'matern' must be an object or \"estimate\"");
      c.estimate_omega = true;
    } else {
      c.omega = parse_matern(m, "matern");
    }
  }
  if (j.contains("beta")) {
    const auto b = get_numbers(j["beta"], "beta");
    c.beta = Eigen::Map<const VectorXd>(b.data(), static_cast<Index>(b.size()));
  }
  if (j.contains("sic")) parse_sic(j["sic"], c.sic);
  if (j.contains("optimizer")) {
    const Json& o = j["optimizer"];
    check_keys(o, {"max_evaluations", "diameter_tol", "initial_step"}, "optimizer");
    if (o.contains("max_evaluations"))
      c.optimizer.max_evaluations = static_cast<int>(get_integer(o["max_evaluations"], "optimizer.max_evaluations"));
    if (o.contains("diameter_tol")) c.optimizer.diameter_tol = get_number(o["diameter_tol"], "optimizer.diameter_tol");
    if (o.contains("initial_step")) c.optimizer.initial_step = get_number(o["initial_step"], "optimizer.initial_step");
    if (c.optimizer.max_evaluations < 1 || !(c.optimizer.diameter_tol > 0) || !(c.optimizer.initial_step > 0))
      throw ValidationError("config: optimizer settings must be positive");
  }
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned() && !(j["seed"].is_number_integer() && j["seed"].get<std::int64_t>() >= 0))
      throw ValidationError("config: 'seed' must be a nonnegative integer");
    c.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("output_dir")) c.output_dir = get_string(j["output_dir"], "output_dir");
  if (j.contains("validate")) {
    const Json& v = j["validate"];
    check_keys(v, {"splits", "n_train", "n_test", "tiers"}, "validate");
    if (v.contains("splits")) c.validate.splits = static_cast<int>(get_integer(v["splits"], "validate.splits"));
    if (v.contains("n_train")) c.validate.n_train = get_integer(v["n_train"], "validate.n_train");
    if (v.contains("n_test")) c.validate.n_test = get_integer(v["n_test"], "validate.n_test");
    if (v.contains("tiers")) c.validate.tiers = parse_tiers(v["tiers"]);
    if (c.validate.splits < 1) throw ValidationError("config: validate.splits must be >= 1");
    if (c.validate.n_train < 1 || c.validate.n_test < 1)
      throw ValidationError("config: validate.n_train and validate.n_test must be >= 1");
  }
  if (j.contains("simulate")) {
    const Json& s = j["simulate"];
    check_keys(s,
               {"n", "n_star", "beta0", "beta1", "omega", "replications", "side_length", "scenarios",
                "max_failure_fraction"},
               "simulate");
    SimConfig& b = c.simulate.base;
    if (s.contains("n")) b.n = get_integer(s["n"], "simulate.n");
    if (s.contains("n_star")) b.n_star = get_integer(s["n_star"], "simulate.n_star");
    if (s.contains("beta0")) b.beta0 = get_number(s["beta0"], "simulate.beta0");
    if (s.contains("beta1")) {
      c.simulate.beta1_values = get_numbers(s["beta1"], "simulate.beta1");
      if (c.simulate.beta1_values.empty()) throw ValidationError("config: simulate.beta1 must not be empty");
    }
    if (s.contains("omega")) b.omega = parse_matern(s["omega"], "simulate.omega");
    if (s.contains("replications")) b.replications = static_cast<int>(get_integer(s["replications"], "simulate.replications"));
    if (s.contains("side_length")) b.side_length = get_number(s["side_length"], "simulate.side_length");
    if (s.contains("scenarios")) {
      if (!s["scenarios"].is_array()) throw ValidationError("config: simulate.scenarios must be an array");
      b.scenarios.clear();
      for (const auto& e : s["scenarios"]) b.scenarios.push_back(parse_scenario(get_string(e, "simulate.scenarios")));
    }
    if (s.contains("max_failure_fraction"))
      b.max_failure_fraction = get_number(s["max_failure_fraction"], "simulate.max_failure_fraction");
  }
  if (j.contains("verify")) {
    const Json& v = j["verify"];
    check_keys(v, {"identity_instances", "poisson_instances", "binomial_instances", "gaussian_instances", "max_n", "order"},
               "verify");
    auto& vc = c.verify;
    if (v.contains("identity_instances")) vc.identity_instances = static_cast<int>(get_integer(v["identity_instances"], "verify.identity_instances"));
    if (v.contains("poisson_instances")) vc.poisson_instances = static_cast<int>(get_integer(v["poisson_instances"], "verify.poisson_instances"));
    if (v.contains("binomial_instances")) vc.binomial_instances = static_cast<int>(get_integer(v["binomial_instances"], "verify.binomial_instances"));
    if (v.contains("gaussian_instances")) vc.gaussian_instances = static_cast<int>(get_integer(v["gaussian_instances"], "verify.gaussian_instances"));
    if (v.contains("max_n")) vc.max_n = get_integer(v["max_n"], "verify.max_n");
    if (v.contains("order")) vc.order = static_cast<int>(get_integer(v["order"], "verify.order"));
    if (vc.identity_instances < 0 || vc.poisson_instances < 0 || vc.binomial_instances < 0 || vc.gaussian_instances < 0 ||
        vc.max_n < 1 || vc.order < 0)
      throw ValidationError("config: verify counts must be nonnegative and max_n >= 1");
  }
  c.simulate.base.sic = c.sic;
  c.simulate.base.seed = c.seed;
  c.simulate.base.estimation.sic = c.sic;
  c.simulate.base.estimation.optimizer = c.optimizer;
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config '" + path + "'");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

// ---------------------------------------------------------------- dataset

enum class RowRole { unspecified, train, test };

struct Dataset {
  std::vector<Index> row_ids;  // 0-based row index in the source file
  VectorXd y;                  // empty when the file has no y column
  Coordinates coords;          // x_coord, y_coord
  MatrixXd covariates;         // declared covariate columns, in config order
  std::optional<VectorXd> trials;
  std::vector<RowRole> roles;
  bool has_y = false;
  bool has_role = false;

  Index rows() const { return coords.rows(); }

  Dataset subset(const std::vector<Index>& idx) const {
    Dataset d;
    d.has_y = has_y;
    d.has_role = has_role;
    const auto k = static_cast<Index>(idx.size());
    d.coords.resize(k, coords.cols());
    d.covariates.resize(k, covariates.cols());
    if (has_y) d.y.resize(k);
    if (trials) d.trials = VectorXd(k);
    for (Index i = 0; i < k; ++i) {
      const Index s = idx[static_cast<std::size_t>(i)];
      d.row_ids.push_back(row_ids[static_cast<std::size_t>(s)]);
      d.roles.push_back(roles[static_cast<std::size_t>(s)]);
      d.coords.row(i) = coords.row(s);
      d.covariates.row(i) = covariates.row(s);
      if (has_y) d.y[i] = y[s];
      if (trials) (*d.trials)[i] = (*trials)[s];
    }
    return d;
  }

  std::vector<Index> indices_with(RowRole r) const {
    std::vector<Index> out;
    for (std::size_t i = 0; i < roles.size(); ++i)
      if (roles[i] == r) out.push_back(static_cast<Index>(i));
    return out;
  }
};

/// Validates columns and types before any numeric work. With require_y the
/// y column must exist and lie in the family's support.
inline Dataset parse_dataset(const CsvTable& t, const RunConfig& cfg, bool require_y, const std::string& source) {
  auto need = [&](std::string_view name) {
    const auto j = t.column(name);
    if (!j) throw ValidationError(source + ": required column '" + std::string(name) + "' is missing");
    return *j;
  };
  const auto yc = t.column("y");
  if (require_y && !yc) throw ValidationError(source + ": required column 'y' is missing");
  const std::size_t xc = need("x_coord"), lc = need("y_coord");
  std::vector<std::size_t> cov_cols;
  for (const auto& name : cfg.covariates) cov_cols.push_back(need(name));
  const auto mc = t.column("m");
  if (cfg.family == Family::binomial && !mc) throw ValidationError(source + ": binomial family requires an 'm' column");
  const auto rc = t.column("role");
  if (t.rows.empty() && require_y) throw ValidationError(source + ": no data rows");

  const auto n = static_cast<Index>(t.rows.size());
  Dataset d;
  d.has_y = yc.has_value();
  d.has_role = rc.has_value();
  d.coords.resize(n, 2);
  d.covariates.resize(n, static_cast<Index>(cov_cols.size()));
  if (d.has_y) d.y.resize(n);
  if (mc && cfg.family == Family::binomial) d.trials = VectorXd(n);
  for (Index i = 0; i < n; ++i) {
    const auto& row = t.rows[static_cast<std::size_t>(i)];
    auto num = [&](std::size_t col) {
      return parse_double(row[col], source + " row " + std::to_string(i) + " column '" + t.header[col] + "'");
    };
    d.row_ids.push_back(i);
    d.coords(i, 0) = num(xc);
    d.coords(i, 1) = num(lc);
    if (!std::isfinite(d.coords(i, 0)) || !std::isfinite(d.coords(i, 1)))
      throw ValidationError(source + " row " + std::to_string(i) + ": coordinates must be finite");
    for (std::size_t k = 0; k < cov_cols.size(); ++k) {
      d.covariates(i, static_cast<Index>(k)) = num(cov_cols[k]);
      if (!std::isfinite(d.covariates(i, static_cast<Index>(k))))
        throw ValidationError(source + " row " + std::to_string(i) + ": covariate '" + cfg.covariates[k] + "' is not finite");
    }
    if (d.has_y) d.y[i] = num(*yc);
    if (d.trials) (*d.trials)[i] = num(*mc);
    RowRole role = RowRole::unspecified;
    if (rc) {
      const std::string& v = row[*rc];
      if (v == "train") role = RowRole::train;
      else if (v == "test") role = RowRole::test;
      else if (!v.empty())
        throw ValidationError(source + " row " + std::to_string(i) + ": role must be 'train' or 'test' (got '" + v + "')");
    }
    d.roles.push_back(role);
  }
  if (d.has_y) {
    const FamilyKernel k = cfg.family == Family::binomial ? FamilyKernel::binomial(*d.trials)
                           : cfg.family == Family::gaussian ? FamilyKernel::gaussian(cfg.gaussian_variance)
                                                            : FamilyKernel::poisson();
    try {
      validate_response(k, d.y);
    } catch (const ValidationError& e) {
      throw DomainError(source + ": " + e.what());
    }
  }
  return d;
}

inline Dataset load_dataset(const std::string& path, const RunConfig& cfg, bool require_y = true) {
  return parse_dataset(read_csv_file(path), cfg, require_y, path);
}

inline FamilyKernel make_kernel(const RunConfig& cfg, const Dataset& d) {
  switch (cfg.family) {
    case Family::poisson: return FamilyKernel::poisson();
    case Family::gaussian: return FamilyKernel::gaussian(cfg.gaussian_variance);
    case Family::binomial:
      if (!d.trials) throw ValidationError("binomial family requires trial counts (column 'm')");
      return FamilyKernel::binomial(*d.trials);
  }
  throw ValidationError("unknown family");
}

// ---------------------------------------------------------------- model tiers

/// Centering and scaling of the coordinate columns, taken from the training
/// rows and reused for prediction rows.
struct TierScaling {
  double lon_center = 0.0, lon_scale = 1.0;
  double lat_center = 0.0, lat_scale = 1.0;

  static TierScaling from(const Coordinates& c) {
    TierScaling s;
    const auto n = static_cast<double>(c.rows());
    auto fit = [&](Index col, double& center, double& scale) {
      center = c.col(col).mean();
      const double var = n > 1 ? (c.col(col).array() - center).square().sum() / (n - 1.0) : 0.0;
      scale = var > 0.0 ? std::sqrt(var) : 1.0;
    };
    fit(0, s.lon_center, s.lon_scale);
    fit(1, s.lat_center, s.lat_scale);
    return s;
  }
};

inline Index tier_columns(ModelTier t, Index n_covariates) {
  switch (t) {
    case ModelTier::intercept: return 1 + n_covariates;
    case ModelTier::main_effects: return 3 + n_covariates;
    case ModelTier::quadratic: return 6 + n_covariates;
  }
  return 0;
}

/// [1, covariates, Lon, Lat, Lon^2, Lat^2, Lon*Lat] truncated to the tier,
/// with Lon and Lat standardized by the given scaling.
inline MatrixXd design_matrix(ModelTier t, const Dataset& d, const TierScaling& s) {
  const Index n = d.rows(), k = d.covariates.cols();
  MatrixXd X(n, tier_columns(t, k));
  X.col(0).setOnes();
  if (k > 0) X.middleCols(1, k) = d.covariates;
  if (t == ModelTier::intercept) return X;
  const VectorXd lon = (d.coords.col(0).array() - s.lon_center) / s.lon_scale;
  const VectorXd lat = (d.coords.col(1).array() - s.lat_center) / s.lat_scale;
  X.col(1 + k) = lon;
  X.col(2 + k) = lat;
  if (t == ModelTier::quadratic) {
    X.col(3 + k) = lon.array().square();
    X.col(4 + k) = lat.array().square();
    X.col(5 + k) = lon.array() * lat.array();
  }
  return X;
}

// ---------------------------------------------------------------- deviance

/// 2 sum[y log(y / y_hat) - (y - y_hat)], with 0 log 0 = 0.
inline double deviance_gof(const VectorXd& y, const VectorXd& y_hat) {
  if (y.size() != y_hat.size()) throw ValidationError("deviance: y and y_hat differ in length");
  double g = 0.0;
  for (Index i = 0; i < y.size(); ++i) {
    if (!(y_hat[i] > 0.0) || !std::isfinite(y_hat[i]))
      throw DomainError("deviance: prediction at row " + std::to_string(i) + " must be positive and finite");
    if (!(y[i] >= 0.0) || !std::isfinite(y[i]))
      throw DomainError("deviance: observed count at row " + std::to_string(i) + " must be nonnegative");
    const double t = y[i] > 0.0 ? y[i] * std::log(y[i] / y_hat[i]) : 0.0;
    g += t - (y[i] - y_hat[i]);
  }
  return 2.0 * g;
}

/// Family-matched held-out deviance: the poisson statistic above, the binomial
/// analogue with trials m, and sum (y - y_hat)^2 / sigma^2 for gaussian.
inline double predictive_deviance(const FamilyKernel& k, const VectorXd& y, const VectorXd& y_hat) {
  switch (k.family()) {
    case Family::poisson: return deviance_gof(y, y_hat);
    case Family::gaussian:
      if (y.size() != y_hat.size()) throw ValidationError("deviance: y and y_hat differ in length");
      return (y - y_hat).squaredNorm() / k.dispersion();
    case Family::binomial: {
      k.check_length(y.size());
      if (y.size() != y_hat.size()) throw ValidationError("deviance: y and y_hat differ in length");
      double g = 0.0;
      for (Index i = 0; i < y.size(); ++i) {
        const double m = k.trials()[i];
        if (!(y_hat[i] > 0.0 && y_hat[i] < m)) throw DomainError("deviance: binomial prediction outside (0, m)");
        if (y[i] > 0) g += y[i] * std::log(y[i] / y_hat[i]);
        if (m - y[i] > 0) g += (m - y[i]) * std::log((m - y[i]) / (m - y_hat[i]));
      }
      return 2.0 * g;
    }
  }
  return 0.0;
}

// ---------------------------------------------------------------- writers

inline Json to_json(const VectorXd& v) {
  Json a = Json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline Json to_json(const MaternParams& p) {
  return Json{{"omega1", p.omega1}, {"omega2", p.omega2}, {"omega3", p.omega3}};
}

inline std::string_view to_string(SolvePath p) {
  switch (p) {
    case SolvePath::automatic: return "automatic";
    case SolvePath::observation_space: return "observation";
    case SolvePath::effect_space: return "effect";
  }
  return "unknown";
}

}  // namespace sicglmm
