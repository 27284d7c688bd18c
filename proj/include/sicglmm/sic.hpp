#pragma once

// Fixed-point iteration for the posterior mean xi and covariance Xi of the
// random effects in a canonical-link GLMM, and the normal-density
// factorization identity that underlies it.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sicglmm/errors.hpp"
#include "sicglmm/family.hpp"
#include "sicglmm/linalg.hpp"

namespace sicglmm {

/// y | gamma ~ f with eta = X beta + Z gamma, gamma ~ N(0, D).
struct GlmmProblem {
  VectorXd y;
  MatrixXd X;
  MatrixXd Z;
  MatrixXd D;
  VectorXd beta;
  FamilyKernel kernel = FamilyKernel::poisson();

  Index n() const { return y.size(); }
  Index p() const { return X.cols(); }
  Index r() const { return Z.cols(); }

  void validate() const {
    std::ostringstream os;
    if (n() < 1 || p() < 1 || r() < 1) {
      os << "problem needs n, p, r >= 1 (got n=" << n() << ", p=" << p() << ", r=" << r() << ")";
      throw ValidationError(os.str());
    }
    if (X.rows() != n() || Z.rows() != n()) throw ValidationError("X and Z must have one row per observation");
    if (beta.size() != p()) throw ValidationError("beta length must equal the number of columns of X");
    if (D.rows() != r() || D.cols() != r()) throw ValidationError("D must be r x r with r = columns of Z");
    if (sup_norm(D - D.transpose()) > 1e-12 * (1.0 + sup_norm(D)))
      throw ValidationError("D must be symmetric");
    if (!X.allFinite() || !Z.allFinite() || !D.allFinite() || !beta.allFinite())
      throw ValidationError("design matrices, D and beta must be finite");
    cholesky_or_throw(D, "prior covariance D");
    validate_response(kernel, y);
  }
};

enum class SolvePath { automatic, observation_space, effect_space };

struct SicOptions {
  double tol = 1e-10;
  int max_iter = 200;
  // xi(t) <- (1 - damping) xi(t-1) + damping * update; 1 is the plain iteration.
  double damping = 1.0;
  SolvePath path = SolvePath::automatic;
  // Start from this xi instead of the family initialization.
  std::optional<VectorXd> initial_xi;
  // Consecutive step-norm increases that trigger a damped restart.
  int divergence_window = 5;

  void validate() const {
    if (!(tol > 0.0)) throw ValidationError("sic tol must be positive");
    if (max_iter < 1) throw ValidationError("sic max_iter must be >= 1");
    if (!(damping > 0.0 && damping <= 1.0)) throw ValidationError("sic damping must lie in (0, 1]");
    if (divergence_window < 1) throw ValidationError("sic divergence_window must be >= 1");
  }
};

struct SicState {
  VectorXd xi;
  MatrixXd Xi;
  VectorXd eta;  // X beta + Z xi, unclamped
  VectorXd u;
  VectorXd w;
  int iteration = 0;
  double step_norm = 0.0;
  // sup-norm of xi - D Z' R_xi^{-1} (u_xi - X beta) at the current xi
  double residual = 0.0;
};

struct TraceEntry {
  double step_norm;
  double residual;
};

struct SicReport {
  bool converged = false;
  int iterations = 0;
  SicState state;
  std::vector<TraceEntry> trace;
  double tolerance = 0.0;
  // Fixed-point residual at xi(0).
  double initial_residual = 0.0;
  double damping_used = 1.0;
  int restarts = 0;
  SolvePath path_used = SolvePath::observation_space;
  double log_det_xi = 0.0;
};

namespace detail {

/// Evaluates the working model at a given xi and applies the update
/// xi_new = D Z' R^{-1} (u - X beta) with R = Z D Z' + W^{-1}. Holds the
/// quantities that do not change across iterations.
class WorkingSolver {
 public:
  WorkingSolver(const GlmmProblem& prob, SolvePath path) : prob_(prob) {
    if (path == SolvePath::automatic)
      path = (4 * prob.r() < prob.n()) ? SolvePath::effect_space : SolvePath::observation_space;
    path_ = path;
    offset_ = prob.X * prob.beta;
    z_identity_ = is_identity(prob.Z);
    const auto d_llt = cholesky_or_throw(prob.D, "prior covariance D");
    log_det_d_ = log_det_from_llt(d_llt);
    if (path_ == SolvePath::observation_space) {
      if (z_identity_) {
        dzt_ = prob.D;
        zdzt_ = prob.D;
      } else {
        dzt_ = prob.D * prob.Z.transpose();
        zdzt_ = prob.Z * dzt_;
      }
    } else {
      d_factor_ = d_llt.matrixL();
      zl_ = prob.Z * d_factor_;
    }
  }

  SolvePath path() const { return path_; }
  const VectorXd& offset() const { return offset_; }

  VectorXd eta_at(const VectorXd& xi) const {
    return z_identity_ ? VectorXd(offset_ + xi) : VectorXd(offset_ + prob_.Z * xi);
  }

  /// Factors the working covariance for weights w.
  void factor(const VectorXd& w) {
    w_ = w;
    if (path_ == SolvePath::observation_space) {
      MatrixXd r = zdzt_;
      r.diagonal().array() += w.array().inverse();
      llt_.compute(r);
      if (llt_.info() != Eigen::Success) throw NumericalError("working covariance R is not positive definite");
    } else {
      MatrixXd m = zl_.transpose() * w.asDiagonal() * zl_;
      m.diagonal().array() += 1.0;
      llt_.compute(m);
      if (llt_.info() != Eigen::Success) throw NumericalError("effect-space system I + L'Z'WZL is not positive definite");
    }
  }

  /// D Z' R^{-1} (u - X beta) for the last factored weights.
  VectorXd update(const VectorXd& u) const {
    const VectorXd resid = u - offset_;
    if (path_ == SolvePath::observation_space) return dzt_ * llt_.solve(resid);
    const VectorXd rhs = zl_.transpose() * (w_.array() * resid.array()).matrix();
    return d_factor_ * llt_.solve(rhs);
  }

  /// D - D Z' R^{-1} Z D for the last factored weights.
  MatrixXd covariance() const {
    MatrixXd xi_cov;
    if (path_ == SolvePath::observation_space) {
      const MatrixXd b = llt_.matrixL().solve(dzt_.transpose());
      xi_cov = prob_.D - b.transpose() * b;
    } else {
      const MatrixXd c = llt_.matrixL().solve(MatrixXd(d_factor_.transpose()));
      xi_cov = c.transpose() * c;
    }
    symmetrize(xi_cov);
    return xi_cov;
  }

  /// log det Xi = log det D - log det(I + L'Z'WZL) = log det D - sum log w - log det R.
  double log_det_covariance() const {
    if (path_ == SolvePath::observation_space)
      return log_det_d_ - w_.array().log().sum() - log_det_from_llt(llt_);
    return log_det_d_ - log_det_from_llt(llt_);
  }

 private:
  const GlmmProblem& prob_;
  SolvePath path_;
  VectorXd offset_;
  bool z_identity_ = false;
  MatrixXd dzt_, zdzt_;
  MatrixXd d_factor_, zl_;
  double log_det_d_ = 0.0;
  VectorXd w_;
  Eigen::LLT<MatrixXd> llt_;
};

inline void require_finite_update(const VectorXd& v) {
  if (!v.allFinite()) throw NumericalError("fixed-point update produced non-finite values");
}

}  // namespace detail

/// Runs the fixed-point iteration xi <- D Z' R_xi^{-1} (u_xi - X beta) to
/// convergence and returns xi, Xi = D - D Z' R_xi^{-1} Z D and a trace.
/// Non-convergence is reported through SicReport::converged, not thrown.
inline SicReport sic_fit(const GlmmProblem& prob, const SicOptions& opt = {}) {
  prob.validate();
  opt.validate();
  detail::WorkingSolver solver(prob, opt.path);
  const FamilyKernel& k = prob.kernel;

  // Initialization: xi(0) from the family starting predictor.
  VectorXd xi0;
  if (opt.initial_xi) {
    if (opt.initial_xi->size() != prob.r()) throw ValidationError("initial_xi must have length r");
    xi0 = *opt.initial_xi;
  } else {
    const InitialPredictor init = initial_eta(k, prob.y);
    solver.factor(init.w);
    xi0 = solver.update(working_response(k, init.eta, prob.y));
    detail::require_finite_update(xi0);
  }

  SicReport rep;
  rep.tolerance = opt.tol;
  rep.path_used = solver.path();
  double damping = opt.damping;

  SicState st;
  auto evaluate = [&](const VectorXd& xi) {
    st.xi = xi;
    st.eta = solver.eta_at(xi);
    st.u = working_response(k, st.eta, prob.y);
    st.w = mean_and_weight(k, st.eta).w;
    solver.factor(st.w);
    VectorXd next = solver.update(st.u);
    detail::require_finite_update(next);
    st.residual = sup_norm(VectorXd(next - xi));
    return next;
  };

  VectorXd candidate = evaluate(xi0);
  rep.initial_residual = st.residual;
  double prev_step = std::numeric_limits<double>::infinity();
  int increases = 0;

  for (int t = 1; t <= opt.max_iter; ++t) {
    const VectorXd xi_new = (1.0 - damping) * st.xi + damping * candidate;
    const double step = sup_norm(VectorXd(xi_new - st.xi));
    candidate = evaluate(xi_new);
    st.iteration = t;
    st.step_norm = step;
    rep.trace.push_back({step, st.residual});
    rep.iterations = t;
    if (step <= opt.tol && st.residual <= opt.tol) {
      rep.converged = true;
      break;
    }
    increases = (step > prev_step) ? increases + 1 : 0;
    prev_step = step;
    if (increases >= opt.divergence_window) {
      damping *= 0.5;
      ++rep.restarts;
      increases = 0;
      prev_step = std::numeric_limits<double>::infinity();
      candidate = evaluate(xi0);
    }
  }

  st.Xi = solver.covariance();
  rep.log_det_xi = solver.log_det_covariance();
  rep.damping_used = damping;
  rep.state = std::move(st);
  return rep;
}

/// Independent recomputation of the fixed-point residual
/// ||xi - D Z' R_xi^{-1} (u_xi - X beta)||_inf with an explicit n x n R and a
/// pivoted LU solve.
inline double fixed_point_residual(const GlmmProblem& prob, const VectorXd& xi) {
  const VectorXd eta = prob.X * prob.beta + prob.Z * xi;
  const VectorXd u = working_response(prob.kernel, eta, prob.y);
  const VectorXd w = mean_and_weight(prob.kernel, eta).w;
  MatrixXd r = prob.Z * prob.D * prob.Z.transpose();
  r.diagonal() += w.cwiseInverse();
  const VectorXd v = prob.D * prob.Z.transpose() * r.partialPivLu().solve(u - prob.X * prob.beta);
  return sup_norm(VectorXd(xi - v));
}

/// Arguments of the normal-density factorization identity
/// phi(u; alpha + X beta + Z gamma, W^{-1}) phi(gamma; delta, D)
///   = phi(gamma; v, V) phi(u; alpha + X beta + Z delta, R).
struct FactorizationInstance {
  VectorXd u;
  VectorXd alpha;
  VectorXd beta;
  VectorXd gamma;
  VectorXd delta;
  MatrixXd X;
  MatrixXd Z;
  VectorXd w;  // diagonal of W
  MatrixXd D;
};

struct FactorizationComponents {
  MatrixXd R;  // Z D Z' + W^{-1}
  VectorXd v;  // delta - D Z' R^{-1}(alpha + Z delta) + D Z' R^{-1}(u - X beta)
  MatrixXd V;  // D - D Z' R^{-1} Z D
};

namespace detail {
inline void check_instance(const FactorizationInstance& a) {
  const Index n = a.u.size(), r = a.D.rows();
  if (a.alpha.size() != n || a.X.rows() != n || a.Z.rows() != n || a.w.size() != n || a.Z.cols() != r ||
      a.D.cols() != r || a.gamma.size() != r || a.delta.size() != r || a.beta.size() != a.X.cols())
    throw ValidationError("factorization identity: inconsistent dimensions");
  if ((a.w.array() <= 0.0).any()) throw NumericalError("factorization identity: W must be positive definite");
}
}  // namespace detail

inline FactorizationComponents identity_components(const FactorizationInstance& a) {
  detail::check_instance(a);
  FactorizationComponents c;
  c.R = a.Z * a.D * a.Z.transpose();
  c.R.diagonal() += a.w.cwiseInverse();
  const auto llt = cholesky_or_throw(c.R, "R = Z D Z' + W^{-1}");
  const MatrixXd dzt = a.D * a.Z.transpose();
  c.v = a.delta - dzt * llt.solve(a.alpha + a.Z * a.delta) + dzt * llt.solve(a.u - a.X * a.beta);
  c.V = a.D - dzt * llt.solve(dzt.transpose());
  symmetrize(c.V);
  return c;
}

/// log[phi(u; alpha + X beta + Z gamma, W^{-1}) phi(gamma; delta, D)]
inline double identity_lhs(const FactorizationInstance& a) {
  detail::check_instance(a);
  return log_normal_density_precision(a.u, a.alpha + a.X * a.beta + a.Z * a.gamma, a.w) +
         log_normal_density(a.gamma, a.delta, a.D);
}

/// log[phi(gamma; v, V) phi(u; alpha + X beta + Z delta, R)]
inline double identity_rhs(const FactorizationInstance& a) {
  const FactorizationComponents c = identity_components(a);
  return log_normal_density(a.gamma, c.v, c.V) + log_normal_density(a.u, a.alpha + a.X * a.beta + a.Z * a.delta, c.R);
}

}  // namespace sicglmm
