#pragma once

// Prediction of random effects and responses at unobserved sites of a
// spatial GLMM with a blocked Matérn prior.

#include <Eigen/Dense>

#include <optional>

#include "sicglmm/covariance.hpp"
#include "sicglmm/errors.hpp"
#include "sicglmm/family.hpp"
#include "sicglmm/sic.hpp"

namespace sicglmm {

struct SpatialProblem {
  // Observed block: Z is the n x n identity and D = blocked.D11.
  GlmmProblem observed;
  MatrixXd Xstar;
  BlockedCovariance blocked;
  // Kernel for the unobserved sites (carries binomial trials there).
  FamilyKernel star_kernel = FamilyKernel::poisson();

  static SpatialProblem make(VectorXd y, MatrixXd X, MatrixXd Xstar, BlockedCovariance blocked, VectorXd beta,
                             FamilyKernel kernel, std::optional<FamilyKernel> star_kernel = std::nullopt) {
    SpatialProblem sp;
    const Index n = y.size();
    sp.observed.y = std::move(y);
    sp.observed.X = std::move(X);
    sp.observed.Z = MatrixXd::Identity(n, n);
    sp.observed.D = blocked.D11;
    sp.observed.beta = std::move(beta);
    sp.observed.kernel = kernel;
    sp.Xstar = std::move(Xstar);
    sp.blocked = std::move(blocked);
    sp.star_kernel = star_kernel ? *star_kernel : kernel;
    return sp;
  }

  Index n_star() const { return Xstar.rows(); }

  void validate() const {
    observed.validate();
    if (!is_identity(observed.Z)) throw ValidationError("spatial problem requires Z = identity at observed sites");
    if (blocked.D11.rows() != observed.n() || blocked.D11.cols() != observed.n())
      throw ValidationError("D11 dimension must match the number of observed sites");
    if (blocked.D22.rows() != n_star() || blocked.D22.cols() != n_star())
      throw ValidationError("D22 dimension must match the number of unobserved sites");
    if (blocked.D12.rows() != observed.n() || blocked.D12.cols() != n_star())
      throw ValidationError("D12 must be n x n_star");
    if (n_star() > 0 && Xstar.cols() != observed.p())
      throw ValidationError("X* must have the same number of columns as X");
    if (star_kernel.family() != observed.kernel.family())
      throw ValidationError("observed and unobserved kernels must share a family");
    if (n_star() > 0) star_kernel.check_length(n_star());
  }
};

struct SpatialPrediction {
  VectorXd xi;
  VectorXd xi_star;
  VectorXd y_hat_star;
  VectorXd u_hat_star;
  SicReport report;
};

/// xi* = D21 R11^{-1} (u_xi - X beta) with R11 = W_xi^{-1} + D11, evaluated at
/// a given observed-site xi; fills xi_star, y_hat_star and u_hat_star.
inline void predict_unobserved(const SpatialProblem& sp, const VectorXd& xi, SpatialPrediction& out) {
  const GlmmProblem& obs = sp.observed;
  if (xi.size() != obs.n()) throw ValidationError("xi length must equal the number of observed sites");
  out.xi = xi;
  const Index m = sp.n_star();
  if (m == 0) {
    out.xi_star.resize(0);
    out.y_hat_star.resize(0);
    out.u_hat_star.resize(0);
    return;
  }
  const VectorXd offset = obs.X * obs.beta;
  const VectorXd eta = offset + xi;
  const VectorXd u = working_response(obs.kernel, eta, obs.y);
  const VectorXd w = mean_and_weight(obs.kernel, eta).w;
  MatrixXd r11 = sp.blocked.D11;
  r11.diagonal() += w.cwiseInverse();
  const auto llt = cholesky_or_throw(r11, "R11 = W^{-1} + D11");
  out.xi_star = sp.blocked.D12.transpose() * llt.solve(u - offset);
  const VectorXd eta_star = sp.Xstar * obs.beta + out.xi_star;
  out.y_hat_star = mean_and_weight(sp.star_kernel, eta_star).mu;
  // No response exists at unobserved sites: the working residual is zero there.
  out.u_hat_star = eta_star;
}

/// Fits the observed block with the fixed-point iteration and predicts at the
/// unobserved sites. Non-convergence is carried in the report.
inline SpatialPrediction spatial_fit_predict(const SpatialProblem& sp, const SicOptions& opt = {}) {
  sp.validate();
  SpatialPrediction out;
  out.report = sic_fit(sp.observed, opt);
  predict_unobserved(sp, out.report.state.xi, out);
  return out;
}

/// E(gamma* | gamma) = D21 D11^{-1} gamma.
inline VectorXd oracle_predict(const VectorXd& gamma_observed, const BlockedCovariance& blocked) {
  if (gamma_observed.size() != blocked.D11.rows()) throw ValidationError("gamma length must match D11");
  if (blocked.D12.rows() != blocked.D11.rows()) throw ValidationError("D12 rows must match D11");
  const auto llt = cholesky_or_throw(blocked.D11, "D11");
  return blocked.D12.transpose() * llt.solve(gamma_observed);
}

}  // namespace sicglmm
