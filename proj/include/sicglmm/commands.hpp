#pragma once

// Subcommands of the command-line tool: fit, predict, validate, simulate, verify.
// Each returns a process exit code; library errors propagate as exceptions
// and are mapped to codes by run_command.

#include <Eigen/Dense>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "sicglmm/covariance.hpp"
#include "sicglmm/errors.hpp"
#include "sicglmm/estimate.hpp"
#include "sicglmm/instances.hpp"
#include "sicglmm/io.hpp"
#include "sicglmm/oracle.hpp"
#include "sicglmm/sic.hpp"
#include "sicglmm/simulation.hpp"
#include "sicglmm/spatial.hpp"

namespace sicglmm {

struct CommandOptions {
  std::optional<std::string> config_path;
  std::optional<std::string> data_path;
  std::optional<std::string> sites_path;  // predict: separate file of unobserved sites
  std::optional<std::string> fit_dir;     // predict: reuse the outputs of a previous fit
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> replications;
  bool quiet = false;
};

namespace detail {

inline RunConfig resolve_config(const CommandOptions& o) {
  RunConfig c = o.config_path ? load_config(*o.config_path) : parse_config(Json::object());
  if (o.seed) {
    c.seed = *o.seed;
    c.simulate.base.seed = *o.seed;
  }
  if (o.replications) c.simulate.base.replications = *o.replications;
  if (o.out_dir) c.output_dir = *o.out_dir;
  return c;
}

inline std::filesystem::path prepare_out(const RunConfig& c) {
  std::filesystem::path p(c.output_dir);
  std::error_code ec;
  std::filesystem::create_directories(p, ec);
  if (ec) throw ValidationError("cannot create output directory '" + c.output_dir + "': " + ec.message());
  return p;
}

inline std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw ValidationError("cannot write '" + p.string() + "'");
  return out;
}

inline void write_json(const std::filesystem::path& p, const Json& j) {
  auto out = open_out(p);
  out << j.dump(2) << '\n';
}

inline const std::string& require_data(const CommandOptions& o) {
  if (!o.data_path) throw ValidationError("--data <path> is required for this command");
  return *o.data_path;
}

class Log {
 public:
  Log(std::ostream& os, bool quiet) : os_(os), quiet_(quiet) {}
  template <class T>
  Log& operator<<(const T& v) {
    if (!quiet_) os_ << v;
    return *this;
  }

 private:
  std::ostream& os_;
  bool quiet_;
};

}  // namespace detail

// ---------------------------------------------------------------- model fitting

struct FittedModel {
  ModelTier tier = ModelTier::intercept;
  TierScaling scaling;
  VectorXd beta;
  MaternParams omega;
  double jitter = 0.0;
  SicReport report;
  std::optional<EstimateResult> estimation;
};

/// beta and omega come from the config when given; missing ones are
/// estimated by approximate maximum likelihood on the training rows.
inline FittedModel fit_model(const RunConfig& cfg, ModelTier tier, const Dataset& train) {
  if (!train.has_y) throw ValidationError("training data needs a 'y' column");
  SiteSet::observed_only(train.coords);  // rejects duplicate observed coordinates
  FittedModel fm;
  fm.tier = tier;
  fm.scaling = TierScaling::from(train.coords);
  const MatrixXd X = design_matrix(tier, train, fm.scaling);
  const FamilyKernel kernel = make_kernel(cfg, train);
  validate_response(kernel, train.y);
  fm.omega = cfg.omega;
  const bool beta_given = cfg.beta.has_value();
  if (beta_given && cfg.beta->size() != X.cols())
    throw ValidationError("config beta has " + std::to_string(cfg.beta->size()) + " entries but model tier '" +
                          std::string(to_string(tier)) + "' has " + std::to_string(X.cols()) + " columns");
  if (cfg.estimate_omega || !beta_given) {
    SpatialData data{train.y, X, train.coords, kernel, cfg.omega.omega3};
    EstimateInit init = default_initial_guess(data, cfg.omega.omega3);
    if (beta_given) init.beta = *cfg.beta;
    if (!cfg.estimate_omega) init.omega = cfg.omega;
    EstimateOptions eo;
    eo.optimizer = cfg.optimizer;
    eo.sic = cfg.sic;
    eo.fix_omega = !cfg.estimate_omega;
    if (eo.fix_omega && beta_given) {
      fm.beta = *cfg.beta;
    } else {
      fm.estimation = estimate(data, init, eo);
      fm.beta = fm.estimation->beta_hat;
      fm.omega = fm.estimation->omega_hat;
    }
  } else {
    fm.beta = *cfg.beta;
  }
  GlmmProblem prob;
  prob.y = train.y;
  prob.X = X;
  prob.Z = MatrixXd::Identity(train.rows(), train.rows());
  prob.D = matern_matrix(fm.omega, train.coords);
  Eigen::LLT<MatrixXd> llt;
  fm.jitter = factor_with_jitter(prob.D, fm.omega.variance(), llt, nullptr);
  prob.beta = fm.beta;
  prob.kernel = kernel;
  prob.validate();
  fm.report = sic_fit(prob, cfg.sic);
  return fm;
}

/// Spatial problem with the fitted parameters: D11 carries the same jitter as
/// the fit, D12 and D22 are the raw Matérn blocks.
inline SpatialProblem prediction_problem(const RunConfig& cfg, const FittedModel& fm, const Dataset& train,
                                         const Dataset& test) {
  BlockedCovariance b;
  b.D11 = matern_matrix(fm.omega, train.coords);
  b.D11.diagonal().array() += fm.jitter;
  b.D12 = matern_cross(fm.omega, train.coords, test.coords);
  b.D22 = matern_matrix(fm.omega, test.coords);
  b.jitter = fm.jitter;
  const MatrixXd X = design_matrix(fm.tier, train, fm.scaling);
  const MatrixXd Xs = design_matrix(fm.tier, test, fm.scaling);
  const FamilyKernel kernel = make_kernel(cfg, train);
  std::optional<FamilyKernel> star;
  if (cfg.family == Family::binomial) {
    if (test.rows() == 0) star = kernel.subset({});
    else if (!test.trials) throw ValidationError("binomial prediction needs 'm' at the unobserved sites");
    else star = FamilyKernel::binomial(*test.trials);
  }
  SpatialProblem sp = SpatialProblem::make(train.y, X, Xs, std::move(b), fm.beta, kernel, star);
  sp.validate();
  return sp;
}

// ---------------------------------------------------------------- writers

inline void write_xi_csv(std::ostream& out, const std::vector<Index>& sites, const VectorXd& xi) {
  out << "site,xi\n";
  for (Index i = 0; i < xi.size(); ++i) out << sites[static_cast<std::size_t>(i)] << ',' << format_double(xi[i]) << '\n';
}

inline void write_matrix_csv(std::ostream& out, const std::vector<Index>& sites, const MatrixXd& m) {
  out << "site";
  for (Index s : sites) out << ',' << s;
  out << '\n';
  for (Index i = 0; i < m.rows(); ++i) {
    out << sites[static_cast<std::size_t>(i)];
    for (Index j = 0; j < m.cols(); ++j) out << ',' << format_double(m(i, j));
    out << '\n';
  }
}

inline void write_predictions_csv(std::ostream& out, const std::vector<Index>& sites, const SpatialPrediction& p) {
  out << "site,xi_star,y_hat_star,u_hat_star\n";
  for (Index i = 0; i < p.xi_star.size(); ++i)
    out << sites[static_cast<std::size_t>(i)] << ',' << format_double(p.xi_star[i]) << ','
        << format_double(p.y_hat_star[i]) << ',' << format_double(p.u_hat_star[i]) << '\n';
}

inline Json fit_report_json(const RunConfig& cfg, const FittedModel& fm, const std::vector<Index>& sites) {
  const SicReport& r = fm.report;
  Json j;
  j["family"] = std::string(to_string(cfg.family));
  if (cfg.family == Family::gaussian) j["gaussian_variance"] = cfg.gaussian_variance;
  j["model_tier"] = std::string(to_string(fm.tier));
  j["covariates"] = cfg.covariates;
  j["converged"] = r.converged;
  j["iterations"] = r.iterations;
  j["residual"] = r.state.residual;
  j["step_norm"] = r.state.step_norm;
  j["tolerance"] = r.tolerance;
  j["initial_residual"] = r.initial_residual;
  j["damping_used"] = r.damping_used;
  j["restarts"] = r.restarts;
  j["solve_path"] = std::string(to_string(r.path_used));
  j["log_det_xi"] = r.log_det_xi;
  j["beta"] = to_json(fm.beta);
  j["omega"] = to_json(fm.omega);
  j["jitter"] = fm.jitter;
  j["scaling"] = Json{{"lon_center", fm.scaling.lon_center},
                      {"lon_scale", fm.scaling.lon_scale},
                      {"lat_center", fm.scaling.lat_center},
                      {"lat_scale", fm.scaling.lat_scale}};
  if (fm.estimation) {
    const auto& e = *fm.estimation;
    j["estimation"] = Json{{"objective", e.objective_value},
                           {"iterations", e.iterations},
                           {"evaluations", e.evaluations},
                           {"converged", e.converged}};
  } else {
    j["estimation"] = nullptr;
  }
  j["sites"] = sites;
  return j;
}

inline std::vector<Index> training_rows(const Dataset& d) {
  std::vector<Index> idx;
  for (std::size_t i = 0; i < d.roles.size(); ++i)
    if (d.roles[i] != RowRole::test) idx.push_back(static_cast<Index>(i));
  return idx;
}

// ---------------------------------------------------------------- fit

inline int cmd_fit(const CommandOptions& o, std::ostream& log_stream = std::cerr) {
  detail::Log log(log_stream, o.quiet);
  const RunConfig cfg = detail::resolve_config(o);
  const Dataset all = load_dataset(detail::require_data(o), cfg);
  const Dataset train = all.subset(training_rows(all));
  if (train.rows() == 0) throw ValidationError("no training rows (every row has role 'test')");
  const FittedModel fm = fit_model(cfg, cfg.tier, train);
  const auto dir = detail::prepare_out(cfg);
  {
    auto out = detail::open_out(dir / "xi.csv");
    write_xi_csv(out, train.row_ids, fm.report.state.xi);
  }
  {
    auto out = detail::open_out(dir / "Xi.csv");
    write_matrix_csv(out, train.row_ids, fm.report.state.Xi);
  }
  detail::write_json(dir / "report.json", fit_report_json(cfg, fm, train.row_ids));
  log << "fit: " << (fm.report.converged ? "converged" : "did not converge") << " after " << fm.report.iterations
      << " iterations, residual " << format_double(fm.report.state.residual) << "\n";
  return fm.report.converged ? 0 : static_cast<int>(ExitCode::non_convergence);
}

// ---------------------------------------------------------------- predict

namespace detail {

/// Restores a fitted model from report.json and xi.csv of a fit directory.
inline FittedModel load_fit(const RunConfig& cfg, const std::string& dir, const Dataset& train) {
  const std::filesystem::path p(dir);
  std::ifstream in(p / "report.json");
  if (!in) throw ValidationError("cannot open '" + (p / "report.json").string() + "'");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("report.json is not valid JSON: " + std::string(e.what()));
  }
  FittedModel fm;
  try {
    if (j.at("family").get<std::string>() != to_string(cfg.family))
      throw ValidationError("fit directory was produced for family '" + j.at("family").get<std::string>() + "'");
    fm.tier = parse_tier(j.at("model_tier").get<std::string>());
    const auto b = j.at("beta").get<std::vector<double>>();
    fm.beta = Eigen::Map<const VectorXd>(b.data(), static_cast<Index>(b.size()));
    fm.omega.omega1 = j.at("omega").at("omega1").get<double>();
    fm.omega.omega2 = j.at("omega").at("omega2").get<double>();
    fm.omega.omega3 = j.at("omega").at("omega3").get<double>();
    fm.jitter = j.at("jitter").get<double>();
    const auto& s = j.at("scaling");
    fm.scaling = {s.at("lon_center").get<double>(), s.at("lon_scale").get<double>(), s.at("lat_center").get<double>(),
                  s.at("lat_scale").get<double>()};
    fm.report.converged = j.at("converged").get<bool>();
    fm.report.iterations = j.at("iterations").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("report.json is missing fields: " + std::string(e.what()));
  }
  fm.omega.validate();
  const CsvTable xi = read_csv_file((p / "xi.csv").string());
  const auto sc = xi.column("site"), xc = xi.column("xi");
  if (!sc || !xc) throw ValidationError("xi.csv needs columns 'site' and 'xi'");
  if (static_cast<Index>(xi.rows.size()) != train.rows())
    throw ValidationError("xi.csv has " + std::to_string(xi.rows.size()) + " sites but the training data has " +
                          std::to_string(train.rows()));
  fm.report.state.xi.resize(train.rows());
  for (std::size_t i = 0; i < xi.rows.size(); ++i) {
    const double site = parse_double(xi.rows[i][*sc], "xi.csv site");
    if (site != static_cast<double>(train.row_ids[i]))
      throw ValidationError("xi.csv site order does not match the training rows of the dataset");
    fm.report.state.xi[static_cast<Index>(i)] = parse_double(xi.rows[i][*xc], "xi.csv xi");
  }
  return fm;
}

}  // namespace detail

inline int cmd_predict(const CommandOptions& o, std::ostream& log_stream = std::cerr) {
  detail::Log log(log_stream, o.quiet);
  const RunConfig cfg = detail::resolve_config(o);
  const Dataset all = load_dataset(detail::require_data(o), cfg);
  Dataset train = all.subset(training_rows(all));
  Dataset test;
  if (o.sites_path) {
    test = load_dataset(*o.sites_path, cfg, false);
  } else {
    if (!all.has_role) throw ValidationError("predict needs a 'role' column in the data or --sites <path>");
    test = all.subset(all.indices_with(RowRole::test));
  }
  if (train.rows() == 0) throw ValidationError("no training rows for prediction");

  FittedModel fm = o.fit_dir ? detail::load_fit(cfg, *o.fit_dir, train) : fit_model(cfg, cfg.tier, train);
  const SpatialProblem sp = prediction_problem(cfg, fm, train, test);
  SpatialPrediction pred;
  predict_unobserved(sp, fm.report.state.xi, pred);
  const auto dir = detail::prepare_out(cfg);
  {
    auto out = detail::open_out(dir / "predictions.csv");
    write_predictions_csv(out, test.row_ids, pred);
  }
  log << "predict: " << test.rows() << " sites\n";
  return fm.report.converged ? 0 : static_cast<int>(ExitCode::non_convergence);
}

// ---------------------------------------------------------------- validate

struct SplitOutcome {
  int split = 0;
  ModelTier tier = ModelTier::intercept;
  bool ok = false;
  double g2 = 0.0;
  ExitCode code = ExitCode::success;
  std::string error;
};

/// Random train/test partition of split s, deterministic in (seed, s).
inline std::pair<std::vector<Index>, std::vector<Index>> random_split(Index n, Index n_train, Index n_test,
                                                                       std::uint64_t seed, int split) {
  if (n_train + n_test > n)
    throw ValidationError("validate: n_train + n_test = " + std::to_string(n_train + n_test) +
                          " exceeds the " + std::to_string(n) + " rows; training and test sets would overlap");
  std::vector<Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(split), 0x5eedu};
  std::mt19937_64 rng(seq);
  // Fisher-Yates with an explicit draw so the permutation does not depend on
  // the standard library's shuffle.
  for (std::size_t i = idx.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng() % i);
    std::swap(idx[i - 1], idx[j]);
  }
  std::vector<Index> train(idx.begin(), idx.begin() + n_train);
  std::vector<Index> test(idx.begin() + n_train, idx.begin() + n_train + n_test);
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {train, test};
}

inline SplitOutcome evaluate_split(const RunConfig& cfg, const Dataset& data, ModelTier tier, int split) {
  SplitOutcome out;
  out.split = split;
  out.tier = tier;
  try {
    const auto [tr, te] = random_split(data.rows(), cfg.validate.n_train, cfg.validate.n_test, cfg.seed, split);
    const Dataset train = data.subset(tr), test = data.subset(te);
    const FittedModel fm = fit_model(cfg, tier, train);
    if (!fm.report.converged) throw ConvergenceError("fixed-point iteration did not converge");
    const SpatialProblem sp = prediction_problem(cfg, fm, train, test);
    SpatialPrediction pred;
    predict_unobserved(sp, fm.report.state.xi, pred);
    out.g2 = predictive_deviance(sp.star_kernel, test.y, pred.y_hat_star);
    out.ok = true;
  } catch (const ValidationError& e) {
    if (std::string(e.what()).rfind("validate:", 0) == 0) throw;  // configuration problem, not a split failure
    out.code = e.code();
    out.error = e.what();
  } catch (const Error& e) {
    out.code = e.code();
    out.error = e.what();
  }
  return out;
}

inline int cmd_validate(const CommandOptions& o, std::ostream& log_stream = std::cerr) {
  detail::Log log(log_stream, o.quiet);
  const RunConfig cfg = detail::resolve_config(o);
  const Dataset data = load_dataset(detail::require_data(o), cfg);
  const auto& vc = cfg.validate;
  if (vc.n_train + vc.n_test > data.rows())
    throw ValidationError("validate: n_train + n_test = " + std::to_string(vc.n_train + vc.n_test) + " exceeds the " +
                          std::to_string(data.rows()) + " rows; training and test sets would overlap");

  std::vector<SplitOutcome> outcomes;
  for (int s = 0; s < vc.splits; ++s)
    for (ModelTier t : vc.tiers) outcomes.push_back(evaluate_split(cfg, data, t, s));

  const auto dir = detail::prepare_out(cfg);
  {
    auto out = detail::open_out(dir / "validate_splits.csv");
    out << "split,tier,n_train,n_test,g2,status\n";
    for (const auto& r : outcomes)
      out << r.split << ',' << to_string(r.tier) << ',' << vc.n_train << ',' << vc.n_test << ','
          << (r.ok ? format_double(r.g2) : std::string("nan")) << ',' << (r.ok ? "ok" : "failed") << '\n';
  }
  Json summary;
  summary["family"] = std::string(to_string(cfg.family));
  summary["splits"] = vc.splits;
  summary["n_train"] = vc.n_train;
  summary["n_test"] = vc.n_test;
  summary["seed"] = cfg.seed;
  Json tiers = Json::array();
  std::vector<std::pair<double, std::string>> ranking;
  int exit_code = 0;
  for (ModelTier t : vc.tiers) {
    double sum = 0.0;
    int ok = 0;
    Json failures = Json::array();
    for (const auto& r : outcomes) {
      if (r.tier != t) continue;
      if (r.ok) {
        sum += r.g2;
        ++ok;
      } else {
        failures.push_back(Json{{"split", r.split}, {"error", r.error}});
        if (exit_code == 0) exit_code = static_cast<int>(r.code);
      }
    }
    Json e;
    e["tier"] = std::string(to_string(t));
    e["succeeded"] = ok;
    e["failed"] = static_cast<int>(failures.size());
    e["mean_g2"] = ok > 0 ? Json(sum / ok) : Json(nullptr);
    e["failures"] = failures;
    tiers.push_back(e);
    if (ok > 0) ranking.emplace_back(sum / ok, std::string(to_string(t)));
    log << "validate: " << to_string(t) << " mean G2 "
        << (ok > 0 ? format_double(sum / ok) : std::string("n/a")) << " (" << ok << "/" << vc.splits << " splits)\n";
  }
  std::stable_sort(ranking.begin(), ranking.end());
  Json order = Json::array();
  for (const auto& [g, name] : ranking) order.push_back(name);
  summary["tiers"] = tiers;
  summary["ordering_by_mean_g2"] = order;
  detail::write_json(dir / "validate_summary.json", summary);
  return exit_code;
}

// ---------------------------------------------------------------- simulate

inline void write_sim_table(std::ostream& out, const std::vector<SimResult>& blocks) {
  out << "beta0,beta1,scenario,replications,succeeded,failed,rl2,rl2_star,rmse_beta0,rmse_beta1,rmse_omega1,"
         "rmse_omega2\n";
  for (const auto& b : blocks)
    for (const auto& s : b.summaries)
      out << format_double(b.config.beta0) << ',' << format_double(b.config.beta1) << ',' << to_string(s.scenario)
          << ',' << b.config.replications << ',' << s.succeeded << ',' << s.failed << ',' << format_double(s.rl2)
          << ',' << format_double(s.rl2_star) << ',' << format_double(s.rmse_beta0) << ','
          << format_double(s.rmse_beta1) << ',' << format_double(s.rmse_omega1) << ','
          << format_double(s.rmse_omega2) << '\n';
}

inline Json sim_audit_json(const std::vector<SimResult>& blocks) {
  Json j;
  if (!blocks.empty()) {
    const SimConfig& c = blocks.front().config;
    Json sc = Json::array();
    for (Scenario s : c.scenarios) sc.push_back(std::string(to_string(s)));
    j["config"] = Json{{"n", c.n},
                       {"n_star", c.n_star},
                       {"beta0", c.beta0},
                       {"omega", to_json(c.omega)},
                       {"replications", c.replications},
                       {"seed", c.seed},
                       {"side_length", c.side_length},
                       {"scenarios", sc}};
  }
  Json bl = Json::array();
  for (const auto& b : blocks) {
    Json recs = Json::array();
    for (const auto& r : b.records) {
      Json e{{"replication", r.replication}, {"scenario", std::string(to_string(r.scenario))}, {"ok", r.ok}};
      if (r.ok) {
        e["rl2"] = r.rl2;
        e["rl2_star"] = r.rl2_star;
      } else {
        e["error"] = r.error;
      }
      e["beta_hat"] = to_json(r.beta_hat);
      e["omega_hat"] = to_json(r.omega_hat);
      e["sic_iterations"] = r.sic_iterations;
      recs.push_back(e);
    }
    bl.push_back(Json{{"beta1", b.config.beta1}, {"records", recs}});
  }
  j["blocks"] = bl;
  return j;
}

inline int cmd_simulate(const CommandOptions& o, std::ostream& log_stream = std::cerr) {
  detail::Log log(log_stream, o.quiet);
  const RunConfig cfg = detail::resolve_config(o);
  cfg.simulate.base.validate();
  std::vector<SimResult> blocks;
  for (double b1 : cfg.simulate.beta1_values) {
    SimConfig sc = cfg.simulate.base;
    sc.beta1 = b1;
    const auto t0 = std::chrono::steady_clock::now();
    blocks.push_back(run_scenarios(sc, [&](int rep) {
      if ((rep + 1) % 10 == 0 || rep + 1 == sc.replications)
        log << "simulate: beta1=" << format_double(b1) << " replication " << rep + 1 << "/" << sc.replications << "\n";
    }));
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log << "simulate: block beta1=" << format_double(b1) << " took " << secs << " s\n";
  }
  const auto dir = detail::prepare_out(cfg);
  {
    auto out = detail::open_out(dir / "table.csv");
    write_sim_table(out, blocks);
  }
  detail::write_json(dir / "audit.json", sim_audit_json(blocks));
  return 0;
}

// ---------------------------------------------------------------- verify

struct VerifyResult {
  int identity_instances = 0;
  double identity_max_gap = 0.0;
  bool identity_passed = true;
  Json battery = Json::array();
  int confirmed = 0, refuted = 0, inconclusive = 0;
  double max_error_estimate = 0.0;
  double max_mean_gap = 0.0;
};

inline constexpr double kIdentityTolerance = 1e-8;

/// Randomized factorization-identity suite plus the exactness battery.
inline VerifyResult run_verification(const RunConfig& cfg) {
  const VerifyConfig& vc = cfg.verify;
  VerifyResult res;
  {
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed & 0xffffffffu), static_cast<std::uint32_t>(cfg.seed >> 32), 1u};
    std::mt19937_64 rng(seq);
    for (int k = 0; k < vc.identity_instances; ++k) {
      const FactorizationInstance a = random_factorization_instance(rng);
      const double gap = std::abs(identity_lhs(a) - identity_rhs(a));
      res.identity_max_gap = std::max(res.identity_max_gap, std::isnan(gap) ? INFINITY : gap);
    }
    res.identity_instances = vc.identity_instances;
    res.identity_passed = res.identity_max_gap <= kIdentityTolerance;
  }
  std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed & 0xffffffffu), static_cast<std::uint32_t>(cfg.seed >> 32), 2u};
  std::mt19937_64 rng(seq);
  auto run = [&](Family f, int count) {
    for (int k = 0; k < count; ++k) {
      const Index r = uniform_index(rng, 1, 2);
      const Index n = uniform_index(rng, r, std::max(r, vc.max_n));
      const GlmmProblem prob = random_glmm(rng, f, n, r, 0.5);
      Json e{{"id", static_cast<int>(res.battery.size())}, {"family", std::string(to_string(f))}, {"n", n}, {"r", r},
             {"y", to_json(prob.y)}};
      try {
        const ExactnessReport rep = adjudicate_exactness(prob, vc.order);
        e["verdict"] = std::string(to_string(rep.verdict));
        e["mean_gap"] = rep.mean_gap;
        e["cov_gap"] = rep.cov_gap;
        e["oracle_error_estimate"] = rep.error_estimate;
        e["oracle_order"] = rep.oracle.order_or_samples;
        e["sic_iterations"] = rep.sic.iterations;
        e["sic_converged"] = rep.sic.converged;
        e["sic_mean"] = to_json(rep.sic.state.xi);
        e["oracle_mean"] = to_json(rep.oracle.mean);
        switch (rep.verdict) {
          case Verdict::confirmed: ++res.confirmed; break;
          case Verdict::refuted: ++res.refuted; break;
          case Verdict::inconclusive: ++res.inconclusive; break;
        }
        res.max_error_estimate = std::max(res.max_error_estimate, rep.error_estimate);
        if (f != Family::gaussian) res.max_mean_gap = std::max(res.max_mean_gap, rep.mean_gap);
      } catch (const Error& err) {
        e["verdict"] = "ERROR";
        e["error"] = err.what();
        ++res.inconclusive;
      }
      res.battery.push_back(e);
    }
  };
  run(Family::poisson, vc.poisson_instances);
  run(Family::binomial, vc.binomial_instances);
  run(Family::gaussian, vc.gaussian_instances);
  return res;
}

inline int cmd_verify(const CommandOptions& o, std::ostream& log_stream = std::cerr) {
  detail::Log log(log_stream, o.quiet);
  const RunConfig cfg = detail::resolve_config(o);
  const VerifyResult v = run_verification(cfg);
  Json j;
  j["seed"] = cfg.seed;
  j["factorization_identity"] = Json{{"instances", v.identity_instances},
                                     {"max_abs_log_gap", v.identity_max_gap},
                                     {"tolerance", kIdentityTolerance},
                                     {"passed", v.identity_passed}};
  j["battery"] = v.battery;
  j["summary"] = Json{{"confirmed", v.confirmed},
                      {"refuted", v.refuted},
                      {"inconclusive", v.inconclusive},
                      {"max_nongaussian_mean_gap", v.max_mean_gap},
                      {"max_oracle_error_estimate", v.max_error_estimate}};
  const auto dir = detail::prepare_out(cfg);
  detail::write_json(dir / "verdicts.json", j);
  log << "verify: identity max gap " << format_double(v.identity_max_gap) << (v.identity_passed ? " (ok)" : " (FAILED)")
      << "; verdicts " << v.confirmed << " confirmed, " << v.refuted << " refuted, " << v.inconclusive
      << " inconclusive\n";
  return v.identity_passed ? 0 : static_cast<int>(ExitCode::numerical);
}

// ---------------------------------------------------------------- dispatch

/// Runs a subcommand and maps library errors to exit codes.
inline int run_command(const std::string& name, const CommandOptions& o, std::ostream& err = std::cerr) {
  try {
    if (name == "fit") return cmd_fit(o, err);
    if (name == "predict") return cmd_predict(o, err);
    if (name == "validate") return cmd_validate(o, err);
    if (name == "simulate") return cmd_simulate(o, err);
    if (name == "verify") return cmd_verify(o, err);
    err << "error: unknown command '" << name << "'\n";
    return static_cast<int>(ExitCode::validation);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const std::bad_alloc&) {
    err << "error: out of memory\n";
    return static_cast<int>(ExitCode::numerical);
  }
}

}  // namespace sicglmm
