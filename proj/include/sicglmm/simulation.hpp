#pragma once

// Synthetic spatial Poisson GLMM datasets and the Oracle / true-parameter /
// estimated-parameter evaluation scenarios with RL2 and RMSE metrics.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "sicglmm/covariance.hpp"
#include "sicglmm/errors.hpp"
#include "sicglmm/estimate.hpp"
#include "sicglmm/family.hpp"
#include "sicglmm/sic.hpp"
#include "sicglmm/spatial.hpp"

namespace sicglmm {

enum class Scenario { oracle, sic_true, sic_estimated };

inline std::string_view to_string(Scenario s) {
  switch (s) {
    case Scenario::oracle: return "oracle";
    case Scenario::sic_true: return "sic_true";
    case Scenario::sic_estimated: return "sic_estimated";
  }
  return "unknown";
}

inline Scenario parse_scenario(std::string_view s) {
  if (s == "oracle") return Scenario::oracle;
  if (s == "sic_true") return Scenario::sic_true;
  if (s == "sic_estimated") return Scenario::sic_estimated;
  throw ValidationError("unknown scenario '" + std::string(s) + "' (expected oracle, sic_true or sic_estimated)");
}

struct SimConfig {
  Index n = 400;
  Index n_star = 400;
  double beta0 = 8.0;
  double beta1 = 0.0;
  MaternParams omega{0.5, 1.0, 0.5};
  int replications = 100;
  std::uint64_t seed = 20231015;
  // Sites are uniform on [0, side_length]^2. At n = 400 a side of 20 puts the
  // mean nearest-observed-neighbour distance near 0.5.
  double side_length = 20.0;
  std::vector<Scenario> scenarios{Scenario::oracle, Scenario::sic_true, Scenario::sic_estimated};
  SicOptions sic{};
  EstimateOptions estimation{};
  // More failed replications than this fraction is a hard failure.
  double max_failure_fraction = 0.05;

  void validate() const {
    if (replications < 1) throw ValidationError("replications must be >= 1");
    if (n < 1 || n_star < 1) throw ValidationError("n and n_star must be >= 1");
    if (!(side_length > 0.0) || !std::isfinite(side_length)) throw ValidationError("side_length must be positive");
    if (!std::isfinite(beta0) || !std::isfinite(beta1)) throw ValidationError("beta must be finite");
    if (scenarios.empty()) throw ValidationError("at least one scenario is required");
    omega.validate();
    sic.validate();
  }
};

struct SimDataset {
  SpatialProblem problem;  // true beta and omega
  Coordinates coords;       // observed sites
  Coordinates coords_star;  // unobserved sites
  VectorXd gamma;
  VectorXd gamma_star;
  VectorXd y;
  VectorXd y_star;
};

/// Deterministic in (config.seed, rep_index).
inline SimDataset generate_dataset(const SimConfig& cfg, int rep_index) {
  cfg.validate();
  std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed & 0xffffffffu), static_cast<std::uint32_t>(cfg.seed >> 32),
                    static_cast<std::uint32_t>(rep_index)};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> unif(0.0, cfg.side_length);
  std::normal_distribution<double> normal(0.0, 1.0);

  const Index n = cfg.n, m = cfg.n_star;
  SimDataset ds;
  ds.coords.resize(n, 2);
  ds.coords_star.resize(m, 2);
  for (Index i = 0; i < n; ++i)
    for (Index c = 0; c < 2; ++c) ds.coords(i, c) = unif(rng);
  for (Index i = 0; i < m; ++i)
    for (Index c = 0; c < 2; ++c) ds.coords_star(i, c) = unif(rng);

  MatrixXd X(n, 2), Xs(m, 2);
  X.col(0).setOnes();
  Xs.col(0).setOnes();
  for (Index i = 0; i < n; ++i) X(i, 1) = normal(rng);
  for (Index i = 0; i < m; ++i) Xs(i, 1) = normal(rng);

  BlockedCovariance blocked = build_blocked(cfg.omega, SiteSet::stacked(ds.coords, ds.coords_star));
  VectorXd z(n + m);
  for (Index i = 0; i < n + m; ++i) z[i] = normal(rng);
  const VectorXd g = blocked.lower_factor.triangularView<Eigen::Lower>() * z;
  ds.gamma = g.head(n);
  ds.gamma_star = g.tail(m);

  VectorXd beta(2);
  beta << cfg.beta0, cfg.beta1;
  const VectorXd eta = X * beta + ds.gamma;
  const VectorXd eta_star = Xs * beta + ds.gamma_star;
  auto draw = [&](double e) {
    std::poisson_distribution<long long> pois(std::exp(std::min(e, 30.0)));
    return static_cast<double>(pois(rng));
  };
  ds.y.resize(n);
  ds.y_star.resize(m);
  for (Index i = 0; i < n; ++i) ds.y[i] = draw(eta[i]);
  for (Index i = 0; i < m; ++i) ds.y_star[i] = draw(eta_star[i]);

  ds.problem = SpatialProblem::make(ds.y, std::move(X), std::move(Xs), std::move(blocked), beta, FamilyKernel::poisson());
  return ds;
}

/// ||truth - estimate||^2 / ||truth||^2
inline double rl2(const VectorXd& truth, const VectorXd& estimate) {
  if (truth.size() != estimate.size()) throw ValidationError("rl2: vectors differ in length");
  const double denom = truth.squaredNorm();
  if (!(denom > 0.0)) throw DomainError("rl2 is undefined for a zero-norm truth vector");
  return (truth - estimate).squaredNorm() / denom;
}

struct ReplicationRecord {
  int replication = 0;
  Scenario scenario = Scenario::oracle;
  bool ok = false;
  std::string error;
  double rl2 = 0.0;
  double rl2_star = 0.0;
  VectorXd beta_hat;
  MaternParams omega_hat;
  int sic_iterations = 0;
};

struct ScenarioSummary {
  Scenario scenario = Scenario::oracle;
  double rl2 = 0.0;
  double rl2_star = 0.0;
  double rmse_beta0 = 0.0;
  double rmse_beta1 = 0.0;
  double rmse_omega1 = 0.0;
  double rmse_omega2 = 0.0;
  int succeeded = 0;
  int failed = 0;
};

struct SimResult {
  SimConfig config;
  std::vector<ScenarioSummary> summaries;
  std::vector<ReplicationRecord> records;
};

namespace detail {

inline ReplicationRecord run_scenario(const SimConfig& cfg, const SimDataset& ds, Scenario sc, int rep) {
  ReplicationRecord rec;
  rec.replication = rep;
  rec.scenario = sc;
  rec.beta_hat = ds.problem.observed.beta;
  rec.omega_hat = cfg.omega;
  try {
    switch (sc) {
      case Scenario::oracle: {
        const VectorXd pred = oracle_predict(ds.gamma, ds.problem.blocked);
        rec.rl2 = rl2(ds.gamma, ds.gamma);
        rec.rl2_star = rl2(ds.gamma_star, pred);
        break;
      }
      case Scenario::sic_true: {
        const SpatialPrediction pred = spatial_fit_predict(ds.problem, cfg.sic);
        rec.sic_iterations = pred.report.iterations;
        if (!pred.report.converged) throw ConvergenceError("fixed-point iteration did not converge");
        rec.rl2 = rl2(ds.gamma, pred.xi);
        rec.rl2_star = rl2(ds.gamma_star, pred.xi_star);
        break;
      }
      case Scenario::sic_estimated: {
        SpatialData data{ds.y, ds.problem.observed.X, ds.coords, FamilyKernel::poisson(), cfg.omega.omega3};
        const EstimateResult est = estimate(data, default_initial_guess(data, cfg.omega.omega3), cfg.estimation);
        rec.beta_hat = est.beta_hat;
        rec.omega_hat = est.omega_hat;
        BlockedCovariance blocked = build_blocked(est.omega_hat, SiteSet::stacked(ds.coords, ds.coords_star));
        const SpatialProblem sp = SpatialProblem::make(ds.y, ds.problem.observed.X, ds.problem.Xstar,
                                                       std::move(blocked), est.beta_hat, FamilyKernel::poisson());
        const SpatialPrediction pred = spatial_fit_predict(sp, cfg.sic);
        rec.sic_iterations = pred.report.iterations;
        if (!pred.report.converged) throw ConvergenceError("fixed-point iteration did not converge");
        rec.rl2 = rl2(ds.gamma, pred.xi);
        rec.rl2_star = rl2(ds.gamma_star, pred.xi_star);
        break;
      }
    }
    rec.ok = std::isfinite(rec.rl2) && std::isfinite(rec.rl2_star);
    if (!rec.ok) rec.error = "non-finite metric";
  } catch (const Error& e) {
    rec.ok = false;
    rec.error = e.what();
  }
  return rec;
}

}  // namespace detail

using ProgressCallback = std::function<void(int replication)>;

/// Runs every configured scenario on each replication and aggregates RL2,
/// RL2* (means) and parameter RMSEs over the successful replications.
/// Throws NumericalError if any scenario fails on more than
/// max_failure_fraction of the replications.
inline SimResult run_scenarios(const SimConfig& cfg, const ProgressCallback& progress = {}) {
  cfg.validate();
  SimResult res;
  res.config = cfg;
  for (int rep = 0; rep < cfg.replications; ++rep) {
    const SimDataset ds = generate_dataset(cfg, rep);
    for (Scenario sc : cfg.scenarios) res.records.push_back(detail::run_scenario(cfg, ds, sc, rep));
    if (progress) progress(rep);
  }
  for (Scenario sc : cfg.scenarios) {
    ScenarioSummary s;
    s.scenario = sc;
    double sb0 = 0, sb1 = 0, so1 = 0, so2 = 0;
    for (const auto& rec : res.records) {
      if (rec.scenario != sc) continue;
      if (!rec.ok) {
        ++s.failed;
        continue;
      }
      ++s.succeeded;
      s.rl2 += rec.rl2;
      s.rl2_star += rec.rl2_star;
      sb0 += std::pow(rec.beta_hat[0] - cfg.beta0, 2);
      sb1 += std::pow(rec.beta_hat[1] - cfg.beta1, 2);
      so1 += std::pow(rec.omega_hat.omega1 - cfg.omega.omega1, 2);
      so2 += std::pow(rec.omega_hat.omega2 - cfg.omega.omega2, 2);
    }
    if (s.succeeded > 0) {
      const double k = s.succeeded;
      s.rl2 /= k;
      s.rl2_star /= k;
      s.rmse_beta0 = std::sqrt(sb0 / k);
      s.rmse_beta1 = std::sqrt(sb1 / k);
      s.rmse_omega1 = std::sqrt(so1 / k);
      s.rmse_omega2 = std::sqrt(so2 / k);
    }
    if (s.failed > cfg.max_failure_fraction * cfg.replications)
      throw NumericalError(std::string("scenario ") + std::string(to_string(sc)) + " failed on " +
                           std::to_string(s.failed) + " of " + std::to_string(cfg.replications) + " replications");
    res.summaries.push_back(s);
  }
  return res;
}

}  // namespace sicglmm
