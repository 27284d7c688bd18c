#pragma once

// Brute-force reference values of E(gamma | y), Cov(gamma | y) and the
// marginal likelihood at small random-effect dimension, and the comparison
// of those values with the fixed-point output.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "sicglmm/errors.hpp"
#include "sicglmm/family.hpp"
#include "sicglmm/linalg.hpp"
#include "sicglmm/quadrature.hpp"
#include "sicglmm/sic.hpp"

namespace sicglmm {

enum class OracleMethod { gauss_hermite, importance_sampling };

inline std::string_view to_string(OracleMethod m) {
  return m == OracleMethod::gauss_hermite ? "gauss_hermite" : "importance_sampling";
}

struct PosteriorMoments {
  VectorXd mean;
  MatrixXd cov;
  double log_marginal = 0.0;
  OracleMethod method = OracleMethod::gauss_hermite;
  std::int64_t order_or_samples = 0;
  // Quadrature: sup-norm change of the mean between order and order/2.
  // Importance sampling: largest jackknife standard error of the mean.
  double error_estimate = 0.0;
  // Quadrature only: sup-norm change of the covariance between order and order/2.
  double cov_error_estimate = 0.0;
  // Importance sampling only: effective sample size.
  double effective_sample_size = 0.0;
};

/// Unnormalized log posterior log f(y | gamma) + log pi(gamma).
inline double log_joint_density(const GlmmProblem& prob, const Eigen::LLT<MatrixXd>& d_llt, double log_det_d,
                                const VectorXd& gamma) {
  const VectorXd eta = prob.X * prob.beta + prob.Z * gamma;
  const VectorXd z = d_llt.matrixL().solve(gamma);
  const double r = static_cast<double>(gamma.size());
  const double log_prior = -0.5 * r * std::log(2.0 * std::numbers::pi) - 0.5 * log_det_d - 0.5 * z.squaredNorm();
  return log_likelihood(prob.kernel, prob.y, eta) + log_prior;
}

namespace detail {

struct ProposalFrame {
  VectorXd center;
  MatrixXd factor;  // lower factor of 2 * Xi
  double log_det_factor = 0.0;
};

inline ProposalFrame sic_proposal(const GlmmProblem& prob) {
  const SicReport rep = sic_fit(prob);
  MatrixXd cov = 2.0 * rep.state.Xi;
  Eigen::LLT<MatrixXd> llt;
  const double scale = std::max(cov.diagonal().maxCoeff(), std::numeric_limits<double>::min());
  llt.compute(cov);
  for (double rel = 1e-12; llt.info() != Eigen::Success && rel <= 1e-4; rel *= 10) {
    cov.diagonal().array() += rel * scale;
    llt.compute(cov);
  }
  if (llt.info() != Eigen::Success) throw NumericalError("proposal covariance 2*Xi is not positive definite");
  ProposalFrame f;
  f.center = rep.state.xi;
  f.factor = llt.matrixL();
  f.log_det_factor = f.factor.diagonal().array().log().sum();
  return f;
}

struct QuadratureResult {
  VectorXd mean;
  MatrixXd cov;
  double log_marginal;
};

inline QuadratureResult tensor_quadrature(const GlmmProblem& prob, const ProposalFrame& frame, int order) {
  const Index r = prob.r();
  const GaussHermiteRule rule = gauss_hermite(order);
  std::int64_t total = 1;
  for (Index d = 0; d < r; ++d) total *= order;

  const auto d_llt = cholesky_or_throw(prob.D, "prior covariance D");
  const double log_det_d = log_det_from_llt(d_llt);
  const double log_norm_const = 0.5 * static_cast<double>(r) * std::log(2.0 * std::numbers::pi);

  std::vector<double> log_terms(static_cast<std::size_t>(total));
  std::vector<int> idx(static_cast<std::size_t>(r), 0);
  VectorXd z(r);
  double max_term = -std::numeric_limits<double>::infinity();
  // Lexicographic node order, fixed for a given (r, order).
  for (std::int64_t k = 0; k < total; ++k) {
    double log_w = 0.0;
    for (Index d = 0; d < r; ++d) {
      const auto j = static_cast<std::size_t>(idx[static_cast<std::size_t>(d)]);
      z[d] = rule.nodes[j];
      log_w += std::log(rule.weights[j]);
    }
    const VectorXd gamma = frame.center + frame.factor * z;
    const double term = log_w + log_joint_density(prob, d_llt, log_det_d, gamma) + frame.log_det_factor +
                        0.5 * z.squaredNorm() + log_norm_const;
    log_terms[static_cast<std::size_t>(k)] = std::isnan(term) ? -std::numeric_limits<double>::infinity() : term;
    max_term = std::max(max_term, log_terms[static_cast<std::size_t>(k)]);
    for (Index d = r - 1; d >= 0; --d) {
      if (++idx[static_cast<std::size_t>(d)] < order) break;
      idx[static_cast<std::size_t>(d)] = 0;
    }
  }
  if (!std::isfinite(max_term)) throw NumericalError("all quadrature node weights underflowed");

  double sum = 0.0;
  VectorXd s1 = VectorXd::Zero(r);
  std::fill(idx.begin(), idx.end(), 0);
  std::vector<VectorXd> gammas;
  std::vector<double> probs;
  gammas.reserve(static_cast<std::size_t>(total));
  probs.reserve(static_cast<std::size_t>(total));
  for (std::int64_t k = 0; k < total; ++k) {
    for (Index d = 0; d < r; ++d) z[d] = rule.nodes[static_cast<std::size_t>(idx[static_cast<std::size_t>(d)])];
    const double p = std::exp(log_terms[static_cast<std::size_t>(k)] - max_term);
    VectorXd gamma = frame.center + frame.factor * z;
    sum += p;
    s1 += p * gamma;
    gammas.push_back(std::move(gamma));
    probs.push_back(p);
    for (Index d = r - 1; d >= 0; --d) {
      if (++idx[static_cast<std::size_t>(d)] < order) break;
      idx[static_cast<std::size_t>(d)] = 0;
    }
  }
  QuadratureResult out;
  out.mean = s1 / sum;
  out.cov = MatrixXd::Zero(r, r);
  for (std::size_t k = 0; k < gammas.size(); ++k) {
    const VectorXd c = gammas[k] - out.mean;
    out.cov.noalias() += (probs[k] / sum) * (c * c.transpose());
  }
  symmetrize(out.cov);
  out.log_marginal = max_term + std::log(sum);
  return out;
}

}  // namespace detail

inline constexpr Index kMaxQuadratureDimension = 4;
inline constexpr std::int64_t kMaxQuadratureNodes = std::int64_t{1} << 22;

/// Largest supported tensor order <= 128 for dimension r.
inline int default_quadrature_order(Index r) {
  switch (r) {
    case 1:
    case 2: return 128;
    case 3: return 64;
    default: return 32;
  }
}

/// Tensor-product Gauss-Hermite evaluation of the posterior moments, with
/// nodes mapped through the fixed-point solution (center xi, covariance 2 Xi).
/// The node placement only affects efficiency; error_estimate compares order
/// against order/2.
inline PosteriorMoments oracle_moments_gh(const GlmmProblem& prob, int order) {
  prob.validate();
  if (prob.r() > kMaxQuadratureDimension)
    throw CapabilityError("tensor quadrature supports r <= 4; use importance sampling for larger r");
  if (order < 8) throw ValidationError("quadrature order must be >= 8");
  std::int64_t total = 1;
  for (Index d = 0; d < prob.r(); ++d) total *= order;
  if (total > kMaxQuadratureNodes)
    throw CapabilityError("quadrature grid of order " + std::to_string(order) + " in dimension " +
                          std::to_string(prob.r()) + " exceeds the node budget; lower the order or use importance sampling");

  const detail::ProposalFrame frame = detail::sic_proposal(prob);
  const auto fine = detail::tensor_quadrature(prob, frame, order);
  const auto coarse = detail::tensor_quadrature(prob, frame, order / 2);
  PosteriorMoments pm;
  pm.mean = fine.mean;
  pm.cov = fine.cov;
  pm.log_marginal = fine.log_marginal;
  pm.method = OracleMethod::gauss_hermite;
  pm.order_or_samples = order;
  pm.error_estimate = sup_norm(fine.mean - coarse.mean);
  pm.cov_error_estimate = sup_norm(fine.cov - coarse.cov);
  return pm;
}

/// Self-normalized importance sampling with proposal N(xi, 2 Xi).
/// Deterministic for a given seed.
inline PosteriorMoments oracle_moments_is(const GlmmProblem& prob, std::int64_t samples, std::uint64_t seed) {
  prob.validate();
  if (samples < 10000) throw ValidationError("importance sampling needs at least 10^4 samples");
  const detail::ProposalFrame frame = detail::sic_proposal(prob);
  const Index r = prob.r();
  const auto d_llt = cholesky_or_throw(prob.D, "prior covariance D");
  const double log_det_d = log_det_from_llt(d_llt);
  const double log_norm_const = 0.5 * static_cast<double>(r) * std::log(2.0 * std::numbers::pi);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto n = static_cast<std::size_t>(samples);
  std::vector<VectorXd> draws(n);
  std::vector<double> log_w(n);
  double max_lw = -std::numeric_limits<double>::infinity();
  VectorXd z(r);
  for (std::size_t i = 0; i < n; ++i) {
    for (Index d = 0; d < r; ++d) z[d] = normal(rng);
    draws[i] = frame.center + frame.factor * z;
    const double log_q = -log_norm_const - frame.log_det_factor - 0.5 * z.squaredNorm();
    const double lw = log_joint_density(prob, d_llt, log_det_d, draws[i]) - log_q;
    log_w[i] = std::isnan(lw) ? -std::numeric_limits<double>::infinity() : lw;
    max_lw = std::max(max_lw, log_w[i]);
  }
  if (!std::isfinite(max_lw)) throw NumericalError("all importance weights underflowed");

  std::vector<double> w(n);
  double sw = 0.0, sw2 = 0.0;
  VectorXd swx = VectorXd::Zero(r);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = std::exp(log_w[i] - max_lw);
    sw += w[i];
    sw2 += w[i] * w[i];
    swx += w[i] * draws[i];
  }
  PosteriorMoments pm;
  pm.method = OracleMethod::importance_sampling;
  pm.order_or_samples = samples;
  pm.effective_sample_size = sw * sw / sw2;
  if (pm.effective_sample_size < 0.05 * static_cast<double>(samples))
    throw NumericalError("importance sampling unreliable: effective sample size " +
                         std::to_string(pm.effective_sample_size) + " is below 5% of the draws");
  pm.mean = swx / sw;
  pm.cov = MatrixXd::Zero(r, r);
  for (std::size_t i = 0; i < n; ++i) {
    const VectorXd c = draws[i] - pm.mean;
    pm.cov.noalias() += (w[i] / sw) * (c * c.transpose());
  }
  symmetrize(pm.cov);
  pm.log_marginal = max_lw + std::log(sw) - std::log(static_cast<double>(samples));

  // Delete-one jackknife of the ratio estimator.
  VectorXd jk_sum = VectorXd::Zero(r), jk_sq = VectorXd::Zero(r);
  for (std::size_t i = 0; i < n; ++i) {
    const VectorXd loo = (swx - w[i] * draws[i]) / (sw - w[i]);
    jk_sum += loo;
    jk_sq += loo.cwiseProduct(loo);
  }
  const double nn = static_cast<double>(samples);
  const VectorXd jk_mean = jk_sum / nn;
  const VectorXd jk_var = ((nn - 1.0) / nn) * (jk_sq - nn * jk_mean.cwiseProduct(jk_mean)).cwiseMax(0.0);
  pm.error_estimate = jk_var.cwiseSqrt().maxCoeff();
  return pm;
}

enum class Verdict { confirmed, refuted, inconclusive };

inline std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::confirmed: return "CONFIRMED";
    case Verdict::refuted: return "REFUTED";
    case Verdict::inconclusive: return "INCONCLUSIVE";
  }
  return "UNKNOWN";
}

struct VerdictThresholds {
  double absolute = 1e-6;
  double confirm_factor = 10.0;
  double refute_factor = 100.0;
};

struct ExactnessReport {
  Verdict verdict = Verdict::inconclusive;
  double mean_gap = 0.0;  // ||xi_sic - mean_oracle||_inf
  double cov_gap = 0.0;   // ||Xi_sic - cov_oracle||_inf
  double error_estimate = 0.0;
  SicReport sic;
  PosteriorMoments oracle;
};

/// Compares the fixed-point (xi, Xi) with quadrature posterior moments.
/// CONFIRMED if gap <= max(absolute, confirm_factor * err), REFUTED if
/// gap > refute_factor * err, INCONCLUSIVE otherwise; gap and err take the
/// larger of the mean and covariance parts.
inline ExactnessReport adjudicate_exactness(const GlmmProblem& prob, int order = 0,
                                            const VerdictThresholds& thresholds = {}) {
  if (order == 0) order = default_quadrature_order(prob.r());
  ExactnessReport rep;
  rep.sic = sic_fit(prob);
  rep.oracle = oracle_moments_gh(prob, order);
  rep.mean_gap = sup_norm(rep.sic.state.xi - rep.oracle.mean);
  rep.cov_gap = sup_norm(rep.sic.state.Xi - rep.oracle.cov);
  rep.error_estimate = std::max(rep.oracle.error_estimate, rep.oracle.cov_error_estimate);
  const double gap = std::max(rep.mean_gap, rep.cov_gap);
  if (gap <= std::max(thresholds.absolute, thresholds.confirm_factor * rep.error_estimate))
    rep.verdict = Verdict::confirmed;
  else if (gap > thresholds.refute_factor * rep.error_estimate)
    rep.verdict = Verdict::refuted;
  else
    rep.verdict = Verdict::inconclusive;
  return rep;
}

}  // namespace sicglmm
