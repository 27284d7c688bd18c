#pragma once

// Matérn covariance and the blocked observed/unobserved prior covariance.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "sicglmm/errors.hpp"
#include "sicglmm/linalg.hpp"

namespace sicglmm {

/// omega1 in (0,1) sets the variance omega1/(1-omega1); omega2 > 0 is the
/// inverse scale; omega3 > 0 the smoothness.
struct MaternParams {
  double omega1 = 0.5;
  double omega2 = 1.0;
  double omega3 = 0.5;

  double variance() const { return omega1 / (1.0 - omega1); }

  void validate() const {
    if (!(std::isfinite(omega1) && omega1 > 0.0 && omega1 < 1.0))
      throw ValidationError("matern omega1 must lie in (0, 1)");
    if (!(std::isfinite(omega2) && omega2 > 0.0)) throw ValidationError("matern omega2 must be positive");
    if (!(std::isfinite(omega3) && omega3 > 0.0)) throw ValidationError("matern omega3 must be positive");
  }
};

inline double matern(const MaternParams& p, double d) {
  p.validate();
  if (!(d >= 0.0)) throw DomainError("matern distance must be nonnegative");
  const double s2 = p.variance();
  if (d == 0.0) return s2;
  const double x = p.omega2 * d;
  // Half-integer smoothness has elementary closed forms.
  if (p.omega3 == 0.5) return s2 * std::exp(-x);
  if (p.omega3 == 1.5) return s2 * (1.0 + x) * std::exp(-x);
  if (p.omega3 == 2.5) return s2 * (1.0 + x + x * x / 3.0) * std::exp(-x);
  const double nu = p.omega3;
  const double k = std::cyl_bessel_k(nu, x);
  if (!std::isfinite(k)) return s2;  // x -> 0 limit, K overflowed
  if (k == 0.0) return 0.0;
  const double log_value = nu * std::log(x) - (nu - 1.0) * std::log(2.0) - std::lgamma(nu) + std::log(k);
  return s2 * std::exp(log_value);
}

/// Site coordinates, one row per site.
using Coordinates = MatrixXd;

inline double site_distance(const Coordinates& a, Index i, const Coordinates& b, Index j) {
  return (a.row(i) - b.row(j)).norm();
}

/// Matérn matrix between two coordinate sets.
inline MatrixXd matern_cross(const MaternParams& p, const Coordinates& a, const Coordinates& b) {
  p.validate();
  if (a.cols() != b.cols()) throw ValidationError("coordinate sets differ in dimension");
  MatrixXd out(a.rows(), b.rows());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < b.rows(); ++j) out(i, j) = matern(p, site_distance(a, i, b, j));
  return out;
}

/// Symmetric Matérn matrix over one coordinate set.
inline MatrixXd matern_matrix(const MaternParams& p, const Coordinates& a) {
  p.validate();
  const Index n = a.rows();
  MatrixXd out(n, n);
  const double s2 = p.variance();
  for (Index i = 0; i < n; ++i) {
    out(i, i) = s2;
    for (Index j = 0; j < i; ++j) out(i, j) = out(j, i) = matern(p, site_distance(a, i, a, j));
  }
  return out;
}

enum class SiteRole { observed, unobserved };

class SiteSet {
 public:
  SiteSet(Coordinates coords, std::vector<SiteRole> roles) : coords_(std::move(coords)), roles_(std::move(roles)) {
    if (coords_.cols() < 1) throw ValidationError("site coordinates need dimension >= 1");
    if (static_cast<std::size_t>(coords_.rows()) != roles_.size())
      throw ValidationError("site roles and coordinates differ in length");
    for (Index i = 0; i < coords_.size(); ++i)
      if (!std::isfinite(coords_.data()[i])) throw ValidationError("site coordinates must be finite");
    std::map<std::vector<double>, Index> seen;
    for (Index i = 0; i < coords_.rows(); ++i) {
      if (roles_[static_cast<std::size_t>(i)] != SiteRole::observed) continue;
      std::vector<double> key;
      for (Index c = 0; c < coords_.cols(); ++c) key.push_back(coords_(i, c));
      auto [it, inserted] = seen.emplace(std::move(key), i);
      if (!inserted) {
        std::ostringstream os;
        os << "observed sites " << it->second << " and " << i << " share coordinates";
        throw ValidationError(os.str());
      }
    }
  }

  /// All sites observed.
  static SiteSet observed_only(Coordinates coords) {
    const auto n = static_cast<std::size_t>(coords.rows());
    return SiteSet(std::move(coords), std::vector<SiteRole>(n, SiteRole::observed));
  }

  /// Observed rows first, then unobserved rows.
  static SiteSet stacked(const Coordinates& observed, const Coordinates& unobserved) {
    if (unobserved.rows() > 0 && observed.cols() != unobserved.cols())
      throw ValidationError("observed and unobserved coordinates differ in dimension");
    Coordinates all(observed.rows() + unobserved.rows(), observed.cols());
    all.topRows(observed.rows()) = observed;
    if (unobserved.rows() > 0) all.bottomRows(unobserved.rows()) = unobserved;
    std::vector<SiteRole> roles(static_cast<std::size_t>(observed.rows()), SiteRole::observed);
    roles.resize(static_cast<std::size_t>(all.rows()), SiteRole::unobserved);
    return SiteSet(std::move(all), std::move(roles));
  }

  const Coordinates& coords() const noexcept { return coords_; }
  const std::vector<SiteRole>& roles() const noexcept { return roles_; }
  Index dimension() const noexcept { return coords_.cols(); }

  std::vector<Index> indices(SiteRole role) const {
    std::vector<Index> out;
    for (std::size_t i = 0; i < roles_.size(); ++i)
      if (roles_[i] == role) out.push_back(static_cast<Index>(i));
    return out;
  }

  Coordinates coords_of(SiteRole role) const {
    const auto idx = indices(role);
    Coordinates out(static_cast<Index>(idx.size()), coords_.cols());
    for (std::size_t k = 0; k < idx.size(); ++k) out.row(static_cast<Index>(k)) = coords_.row(idx[k]);
    return out;
  }

 private:
  Coordinates coords_;
  std::vector<SiteRole> roles_;
};

struct BlockedCovariance {
  MatrixXd D11;  // observed x observed
  MatrixXd D12;  // observed x unobserved
  MatrixXd D22;  // unobserved x unobserved
  // Diagonal jitter added to reach positive definiteness (0 if none).
  double jitter = 0.0;
  // Jitter values tried, in order, each one logged when escalation happens.
  std::vector<double> jitter_log;
  // Lower Cholesky factor of the full (jittered) blocked matrix, observed rows first.
  MatrixXd lower_factor;

  MatrixXd D21() const { return D12.transpose(); }
  Index n_observed() const { return D11.rows(); }
  Index n_unobserved() const { return D22.rows(); }

  MatrixXd full() const {
    const Index n = n_observed(), m = n_unobserved();
    MatrixXd out(n + m, n + m);
    out.topLeftCorner(n, n) = D11;
    if (m > 0) {
      out.topRightCorner(n, m) = D12;
      out.bottomLeftCorner(m, n) = D12.transpose();
      out.bottomRightCorner(m, m) = D22;
    }
    return out;
  }
};

using JitterLogger = std::function<void(double jitter)>;

/// Adds escalating diagonal jitter (1e-10 .. 1e-6 times the marginal variance)
/// until the matrix factors. Returns the jitter used.
inline double factor_with_jitter(MatrixXd& a, double scale, Eigen::LLT<MatrixXd>& llt, std::vector<double>* log,
                                 const JitterLogger& logger = {}) {
  // Exactly duplicated sites can factor "successfully" with a pivot at rounding level.
  const auto factored = [&] {
    return llt.info() == Eigen::Success && llt.matrixLLT().diagonal().array().square().minCoeff() > 1e-13 * scale;
  };
  llt.compute(a);
  if (factored()) return 0.0;
  double applied = 0.0;
  for (double rel = 1e-10; rel <= 1e-6 * (1 + 1e-9); rel *= 10.0) {
    const double j = rel * scale;
    a.diagonal().array() += j - applied;
    applied = j;
    if (log) log->push_back(j);
    if (logger) logger(j);
    llt.compute(a);
    if (factored()) return applied;
  }
  throw NumericalError("covariance matrix is singular even after diagonal jitter up to 1e-6 * variance");
}

/// Builds the Matérn prior over sites, partitioned into observed and
/// unobserved blocks in the order sites appear in the set.
inline BlockedCovariance build_blocked(const MaternParams& p, const SiteSet& sites, const JitterLogger& logger = {}) {
  p.validate();
  const auto obs = sites.indices(SiteRole::observed);
  const auto unobs = sites.indices(SiteRole::unobserved);
  if (obs.empty()) throw ValidationError("build_blocked needs at least one observed site");
  std::vector<Index> order = obs;
  order.insert(order.end(), unobs.begin(), unobs.end());
  Coordinates ordered(static_cast<Index>(order.size()), sites.dimension());
  for (std::size_t k = 0; k < order.size(); ++k) ordered.row(static_cast<Index>(k)) = sites.coords().row(order[k]);

  MatrixXd full = matern_matrix(p, ordered);
  BlockedCovariance out;
  Eigen::LLT<MatrixXd> llt;
  out.jitter = factor_with_jitter(full, p.variance(), llt, &out.jitter_log, logger);
  const Index n = static_cast<Index>(obs.size()), m = static_cast<Index>(unobs.size());
  out.D11 = full.topLeftCorner(n, n);
  out.D12 = full.topRightCorner(n, m);
  out.D22 = full.bottomRightCorner(m, m);
  out.lower_factor = llt.matrixL();
  return out;
}

}  // namespace sicglmm
