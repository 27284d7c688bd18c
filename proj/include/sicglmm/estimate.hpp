#pragma once

// Laplace-approximate maximum likelihood for (beta, omega1, omega2) of a
// spatial GLMM, built on the fixed-point solution. Stands in for an external
// estimator when the true parameters are unknown.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <numeric>
#include <vector>

#include "sicglmm/covariance.hpp"
#include "sicglmm/errors.hpp"
#include "sicglmm/family.hpp"
#include "sicglmm/linalg.hpp"
#include "sicglmm/sic.hpp"

namespace sicglmm {

struct LaplaceValue {
  double value = -std::numeric_limits<double>::infinity();
  bool converged = false;
  SicReport report;
};

/// log f(y) ~ log f(y | xi) + log pi(xi) + (r/2) log(2 pi) + (1/2) log det Xi,
/// with (xi, Xi) the converged fixed point. -inf with converged = false when
/// the iteration does not converge.
inline LaplaceValue laplace_log_marginal(const GlmmProblem& prob, const SicOptions& opt = {}) {
  LaplaceValue out;
  out.report = sic_fit(prob, opt);
  out.converged = out.report.converged;
  if (!out.converged) return out;
  const SicState& st = out.report.state;
  const double r = static_cast<double>(prob.r());
  const double log_prior = log_normal_density(st.xi, VectorXd::Zero(prob.r()), prob.D);
  out.value = log_likelihood(prob.kernel, prob.y, st.eta) + log_prior + 0.5 * r * std::log(2.0 * std::numbers::pi) +
              0.5 * out.report.log_det_xi;
  return out;
}

/// Observed-site data of a spatial GLMM (Z = I, D from the Matérn family).
struct SpatialData {
  VectorXd y;
  MatrixXd X;
  Coordinates coords;
  FamilyKernel kernel = FamilyKernel::poisson();
  double omega3 = 0.5;

  void validate() const {
    if (y.size() < 1) throw ValidationError("spatial data needs at least one observation");
    if (X.rows() != y.size() || coords.rows() != y.size())
      throw ValidationError("spatial data: X, coordinates and y must have the same number of rows");
    validate_response(kernel, y);
  }
};

/// Prior covariance at the observed sites, with the jitter policy of build_blocked.
inline MatrixXd observed_covariance(const SpatialData& data, const MaternParams& omega) {
  MatrixXd d = matern_matrix(omega, data.coords);
  Eigen::LLT<MatrixXd> llt;
  factor_with_jitter(d, omega.variance(), llt, nullptr);
  return d;
}

inline GlmmProblem spatial_glmm(const SpatialData& data, const VectorXd& beta, const MaternParams& omega) {
  GlmmProblem prob;
  prob.y = data.y;
  prob.X = data.X;
  prob.Z = MatrixXd::Identity(data.y.size(), data.y.size());
  prob.D = observed_covariance(data, omega);
  prob.beta = beta;
  prob.kernel = data.kernel;
  return prob;
}

inline LaplaceValue approx_loglik(const SpatialData& data, const VectorXd& beta, const MaternParams& omega,
                                  const SicOptions& opt = {}) {
  return laplace_log_marginal(spatial_glmm(data, beta, omega), opt);
}

struct NelderMeadOptions {
  int max_evaluations = 4000;
  double diameter_tol = 1e-6;
  double initial_step = 0.25;
};

struct NelderMeadResult {
  VectorXd argmin;
  double value = std::numeric_limits<double>::infinity();
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
};

/// Derivative-free minimization (reflection 1, expansion 2, contraction 1/2,
/// shrink 1/2). Converged once every vertex is within diameter_tol of the
/// best one in sup-norm.
inline NelderMeadResult nelder_mead(const std::function<double(const VectorXd&)>& f, const VectorXd& x0,
                                    const NelderMeadOptions& opt = {}) {
  const Index dim = x0.size();
  NelderMeadResult res;
  auto eval = [&](const VectorXd& x) {
    ++res.evaluations;
    const double v = f(x);
    return std::isnan(v) ? std::numeric_limits<double>::infinity() : v;
  };
  std::vector<VectorXd> pts(static_cast<std::size_t>(dim + 1), x0);
  std::vector<double> vals(static_cast<std::size_t>(dim + 1));
  vals[0] = eval(x0);
  for (Index i = 0; i < dim; ++i) {
    pts[static_cast<std::size_t>(i + 1)][i] += opt.initial_step;
    vals[static_cast<std::size_t>(i + 1)] = eval(pts[static_cast<std::size_t>(i + 1)]);
  }
  std::vector<std::size_t> order(pts.size());
  auto sort_simplex = [&] {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
    std::vector<VectorXd> p2;
    std::vector<double> v2;
    for (auto k : order) {
      p2.push_back(pts[k]);
      v2.push_back(vals[k]);
    }
    pts.swap(p2);
    vals.swap(v2);
  };
  auto diameter = [&] {
    double d = 0.0;
    for (std::size_t k = 1; k < pts.size(); ++k) d = std::max(d, sup_norm(pts[k] - pts[0]));
    return d;
  };

  sort_simplex();
  while (res.evaluations < opt.max_evaluations) {
    if (diameter() < opt.diameter_tol) {
      res.converged = true;
      break;
    }
    ++res.iterations;
    const std::size_t worst = pts.size() - 1;
    VectorXd centroid = VectorXd::Zero(dim);
    for (std::size_t k = 0; k < worst; ++k) centroid += pts[k];
    centroid /= static_cast<double>(dim);

    const VectorXd xr = centroid + (centroid - pts[worst]);
    const double fr = eval(xr);
    if (fr < vals[0]) {
      const VectorXd xe = centroid + 2.0 * (centroid - pts[worst]);
      const double fe = eval(xe);
      if (fe < fr) {
        pts[worst] = xe;
        vals[worst] = fe;
      } else {
        pts[worst] = xr;
        vals[worst] = fr;
      }
    } else if (fr < vals[worst - 1]) {
      pts[worst] = xr;
      vals[worst] = fr;
    } else {
      const bool outside = fr < vals[worst];
      const VectorXd xc = outside ? VectorXd(centroid + 0.5 * (xr - centroid))
                                  : VectorXd(centroid + 0.5 * (pts[worst] - centroid));
      const double fc = eval(xc);
      if (fc < (outside ? fr : vals[worst])) {
        pts[worst] = xc;
        vals[worst] = fc;
      } else {
        for (std::size_t k = 1; k < pts.size(); ++k) {
          pts[k] = pts[0] + 0.5 * (pts[k] - pts[0]);
          vals[k] = eval(pts[k]);
        }
      }
    }
    sort_simplex();
  }
  res.argmin = pts[0];
  res.value = vals[0];
  return res;
}

struct EstimateInit {
  VectorXd beta;
  MaternParams omega;
};

struct EstimateOptions {
  NelderMeadOptions optimizer{};
  SicOptions sic{};
  // Keep omega at its initial value and estimate beta only.
  bool fix_omega = false;
};

struct EstimateResult {
  VectorXd beta_hat;
  MaternParams omega_hat;
  double objective_value = -std::numeric_limits<double>::infinity();  // approx log-likelihood at the optimum
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
};

inline double logit(double p) { return std::log(p / (1.0 - p)); }
inline double expit_scalar(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

/// Maximizes approx_loglik over (beta, logit omega1, log omega2), omega3 fixed.
inline EstimateResult estimate(const SpatialData& data, const EstimateInit& init, const EstimateOptions& opt = {}) {
  data.validate();
  const Index p = data.X.cols();
  if (init.beta.size() != p) throw ValidationError("initial beta length must equal the number of columns of X");
  MaternParams start = init.omega;
  start.omega3 = data.omega3;
  start.validate();

  const Index dim = opt.fix_omega ? p : p + 2;
  VectorXd theta0(dim);
  theta0.head(p) = init.beta;
  if (!opt.fix_omega) {
    theta0[p] = logit(start.omega1);
    theta0[p + 1] = std::log(start.omega2);
  }
  auto unpack = [&](const VectorXd& theta, VectorXd& beta, MaternParams& omega) {
    beta = theta.head(p);
    omega = start;
    if (!opt.fix_omega) {
      omega.omega1 = expit_scalar(theta[p]);
      omega.omega2 = std::exp(theta[p + 1]);
    }
  };
  auto objective = [&](const VectorXd& theta) {
    VectorXd beta;
    MaternParams omega;
    unpack(theta, beta, omega);
    if (!(omega.omega1 > 0.0 && omega.omega1 < 1.0 && omega.omega2 > 0.0 && std::isfinite(omega.omega2)))
      return std::numeric_limits<double>::infinity();
    try {
      const LaplaceValue lv = approx_loglik(data, beta, omega, opt.sic);
      return lv.converged ? -lv.value : std::numeric_limits<double>::infinity();
    } catch (const NumericalError&) {
      return std::numeric_limits<double>::infinity();
    }
  };
  const NelderMeadResult nm = nelder_mead(objective, theta0, opt.optimizer);
  EstimateResult out;
  unpack(nm.argmin, out.beta_hat, out.omega_hat);
  out.objective_value = -nm.value;
  out.iterations = nm.iterations;
  out.evaluations = nm.evaluations;
  out.converged = nm.converged;
  return out;
}

/// Fixed-effects-only IRLS fit of the GLM, used as a starting point.
inline VectorXd glm_irls(const FamilyKernel& kernel, const VectorXd& y, const MatrixXd& X, int max_iter = 50) {
  InitialPredictor init = initial_eta(kernel, y);
  VectorXd u = working_response(kernel, init.eta, y);
  VectorXd w = init.w;
  VectorXd beta = VectorXd::Zero(X.cols());
  for (int it = 0; it < max_iter; ++it) {
    const MatrixXd xtwx = X.transpose() * w.asDiagonal() * X;
    const VectorXd next = xtwx.ldlt().solve(X.transpose() * (w.array() * u.array()).matrix());
    if (!next.allFinite()) throw NumericalError("GLM starting fit failed (design matrix may be rank deficient)");
    const double step = sup_norm(next - beta);
    beta = next;
    const VectorXd eta = X * beta;
    u = working_response(kernel, eta, y);
    w = mean_and_weight(kernel, eta).w;
    if (step < 1e-10) break;
  }
  return beta;
}

/// Data-driven starting point: GLM coefficients, variance from the spread of
/// the starting working residuals, range a quarter of the site extent.
inline EstimateInit default_initial_guess(const SpatialData& data, double omega3 = 0.5) {
  EstimateInit init;
  init.beta = glm_irls(data.kernel, data.y, data.X);
  const InitialPredictor start = initial_eta(data.kernel, data.y);
  const VectorXd resid = start.eta - data.X * init.beta;
  const double mean = resid.mean();
  double s2 = resid.size() > 1 ? (resid.array() - mean).square().sum() / static_cast<double>(resid.size() - 1) : 1.0;
  s2 -= start.w.cwiseInverse().mean();
  s2 = std::clamp(s2, 0.05, 20.0);
  init.omega.omega1 = s2 / (1.0 + s2);
  double extent = 0.0;
  for (Index c = 0; c < data.coords.cols(); ++c)
    extent = std::max(extent, data.coords.col(c).maxCoeff() - data.coords.col(c).minCoeff());
  init.omega.omega2 = extent > 0.0 ? 12.0 / extent : 1.0;
  init.omega.omega3 = omega3;
  return init;
}

}  // namespace sicglmm
