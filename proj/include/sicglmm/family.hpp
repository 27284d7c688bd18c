#pragma once

// Exponential-family kernels for canonical-link GLMMs: b, b', b'', working
// responses and weights, and the IRLS-style starting predictor.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "sicglmm/errors.hpp"

namespace sicglmm {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class Family { poisson, binomial, gaussian };

inline std::string_view to_string(Family f) {
  switch (f) {
    case Family::poisson: return "poisson";
    case Family::binomial: return "binomial";
    case Family::gaussian: return "gaussian";
  }
  return "unknown";
}

inline Family parse_family(std::string_view name) {
  if (name == "poisson") return Family::poisson;
  if (name == "binomial") return Family::binomial;
  if (name == "gaussian") return Family::gaussian;
  throw ValidationError("unknown family '" + std::string(name) + "' (expected poisson, binomial or gaussian)");
}

struct KernelLimits {
  double eta_min = -30.0;
  double eta_max = 30.0;
  double weight_floor = 1e-12;
};

class FamilyKernel {
 public:
  static FamilyKernel poisson() { return FamilyKernel(Family::poisson, VectorXd(), 1.0); }

  static FamilyKernel binomial(VectorXd trials) {
    if (trials.size() == 0) throw ValidationError("binomial kernel requires trial counts");
    for (Index i = 0; i < trials.size(); ++i) {
      const double m = trials[i];
      if (!std::isfinite(m) || m < 1.0 || m != std::floor(m)) {
        std::ostringstream os;
        os << "binomial trial count at row " << i << " must be an integer >= 1 (got " << m << ")";
        throw ValidationError(os.str());
      }
    }
    return FamilyKernel(Family::binomial, std::move(trials), 1.0);
  }

  static FamilyKernel gaussian(double variance) {
    if (!std::isfinite(variance) || variance <= 0.0)
      throw ValidationError("gaussian variance must be positive and finite");
    return FamilyKernel(Family::gaussian, VectorXd(), variance);
  }

  Family family() const noexcept { return family_; }
  const VectorXd& trials() const noexcept { return trials_; }
  // sigma^2 for the gaussian kernel, 1 otherwise.
  double dispersion() const noexcept { return dispersion_; }
  const KernelLimits& limits() const noexcept { return limits_; }

  FamilyKernel with_limits(const KernelLimits& limits) const {
    FamilyKernel k = *this;
    k.limits_ = limits;
    return k;
  }

  /// Kernel restricted to the given observation rows (only matters for binomial).
  FamilyKernel subset(const std::vector<Index>& rows) const {
    FamilyKernel k = *this;
    if (family_ == Family::binomial) {
      k.trials_.resize(static_cast<Index>(rows.size()));
      for (std::size_t i = 0; i < rows.size(); ++i) k.trials_[static_cast<Index>(i)] = trials_[rows[i]];
    }
    return k;
  }

  void check_length(Index n) const {
    if (family_ == Family::binomial && trials_.size() != n) {
      std::ostringstream os;
      os << "binomial kernel has " << trials_.size() << " trial counts but the vector has length " << n;
      throw ValidationError(os.str());
    }
  }

 private:
  FamilyKernel(Family f, VectorXd trials, double dispersion)
      : family_(f), trials_(std::move(trials)), dispersion_(dispersion) {}

  Family family_;
  VectorXd trials_;
  double dispersion_;
  KernelLimits limits_{};
};

namespace detail {

inline void require_finite(const VectorXd& v, std::string_view what) {
  for (Index i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      std::ostringstream os;
      os << what << " has a non-finite entry at index " << i;
      throw DomainError(os.str());
    }
  }
}

inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

inline double expit(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace detail

/// Elementwise b(eta). Binomial uses m*log(1+e^eta) in overflow-safe form.
inline VectorXd b_value(const FamilyKernel& k, const VectorXd& eta) {
  detail::require_finite(eta, "eta");
  k.check_length(eta.size());
  VectorXd out(eta.size());
  for (Index i = 0; i < eta.size(); ++i) {
    switch (k.family()) {
      case Family::poisson: out[i] = std::exp(eta[i]); break;
      case Family::binomial: out[i] = k.trials()[i] * detail::softplus(eta[i]); break;
      case Family::gaussian: out[i] = 0.5 * eta[i] * eta[i]; break;
    }
  }
  return out;
}

/// Raw first derivative b'(eta) (the canonical inverse link), no clamping.
inline VectorXd b_prime(const FamilyKernel& k, const VectorXd& eta) {
  detail::require_finite(eta, "eta");
  k.check_length(eta.size());
  VectorXd out(eta.size());
  for (Index i = 0; i < eta.size(); ++i) {
    switch (k.family()) {
      case Family::poisson: out[i] = std::exp(eta[i]); break;
      case Family::binomial: out[i] = k.trials()[i] * detail::expit(eta[i]); break;
      case Family::gaussian: out[i] = eta[i]; break;
    }
  }
  return out;
}

/// Raw second derivative b''(eta), no clamping.
inline VectorXd b_double_prime(const FamilyKernel& k, const VectorXd& eta) {
  detail::require_finite(eta, "eta");
  k.check_length(eta.size());
  VectorXd out(eta.size());
  for (Index i = 0; i < eta.size(); ++i) {
    switch (k.family()) {
      case Family::poisson: out[i] = std::exp(eta[i]); break;
      case Family::binomial: {
        const double p = detail::expit(eta[i]);
        out[i] = k.trials()[i] * p * detail::expit(-eta[i]);
        break;
      }
      case Family::gaussian: out[i] = 1.0; break;
    }
  }
  return out;
}

/// Clamps eta into the kernel's window for families that exponentiate it.
inline VectorXd clamp_eta(const FamilyKernel& k, const VectorXd& eta) {
  if (k.family() == Family::gaussian) return eta;
  return eta.cwiseMax(k.limits().eta_min).cwiseMin(k.limits().eta_max);
}

struct MeanWeight {
  VectorXd mu;
  VectorXd w;
};

/// mu = b'(eta) and working weight w = b''(eta)/dispersion, at the clamped eta.
inline MeanWeight mean_and_weight(const FamilyKernel& k, const VectorXd& eta) {
  detail::require_finite(eta, "eta");
  const VectorXd clamped = clamp_eta(k, eta);
  MeanWeight mw{b_prime(k, clamped), b_double_prime(k, clamped)};
  mw.w /= k.dispersion();
  return mw;
}

/// u = eta + (y - b'(eta)) / b''(eta), evaluated at the clamped eta.
/// Throws DegenerateSiteError if any working weight is below the floor.
inline VectorXd working_response(const FamilyKernel& k, const VectorXd& eta, const VectorXd& y) {
  if (eta.size() != y.size()) throw ValidationError("working_response: eta and y lengths differ");
  detail::require_finite(eta, "eta");
  const VectorXd clamped = clamp_eta(k, eta);
  const VectorXd mu = b_prime(k, clamped);
  const VectorXd b2 = b_double_prime(k, clamped);
  std::vector<std::size_t> bad;
  for (Index i = 0; i < b2.size(); ++i)
    if (!(b2[i] / k.dispersion() >= k.limits().weight_floor)) bad.push_back(static_cast<std::size_t>(i));
  if (!bad.empty()) {
    std::ostringstream os;
    os << "working weight below floor " << k.limits().weight_floor << " at site(s)";
    for (std::size_t i = 0; i < bad.size() && i < 20; ++i) os << ' ' << bad[i];
    if (bad.size() > 20) os << " ...";
    throw DegenerateSiteError(std::move(bad), os.str());
  }
  return clamped.array() + (y - mu).array() / b2.array();
}

/// Checks that y is finite and within the family's support.
inline void validate_response(const FamilyKernel& k, const VectorXd& y) {
  k.check_length(y.size());
  for (Index i = 0; i < y.size(); ++i) {
    const double v = y[i];
    std::ostringstream os;
    if (!std::isfinite(v)) {
      os << "response at row " << i << " is not finite";
      throw DomainError(os.str());
    }
    if (k.family() == Family::gaussian) continue;
    if (v < 0.0 || v != std::floor(v)) {
      os << "response at row " << i << " must be a nonnegative integer count (got " << v << ")";
      throw DomainError(os.str());
    }
    if (k.family() == Family::binomial && v > k.trials()[i]) {
      os << "binomial response at row " << i << " exceeds its trial count (" << v << " > " << k.trials()[i] << ")";
      throw DomainError(os.str());
    }
  }
}

struct InitialPredictor {
  VectorXd eta;
  VectorXd w;
};

/// Family-specific starting predictor and weights:
/// poisson eta0 = log(y + 0.5), w0 = y + 0.5;
/// binomial eta0 = log((y + 0.5)/(m - y + 0.5)), w0 = m(y + 0.5)(m - y + 0.5)/(m + 1)^2;
/// gaussian eta0 = y, w0 = 1/sigma^2.
inline InitialPredictor initial_eta(const FamilyKernel& k, const VectorXd& y) {
  validate_response(k, y);
  const Index n = y.size();
  InitialPredictor init{VectorXd(n), VectorXd(n)};
  for (Index i = 0; i < n; ++i) {
    switch (k.family()) {
      case Family::poisson:
        init.eta[i] = std::log(y[i] + 0.5);
        init.w[i] = y[i] + 0.5;
        break;
      case Family::binomial: {
        const double m = k.trials()[i];
        init.eta[i] = std::log((y[i] + 0.5) / (m - y[i] + 0.5));
        init.w[i] = m * (y[i] + 0.5) * (m - y[i] + 0.5) / ((m + 1.0) * (m + 1.0));
        break;
      }
      case Family::gaussian:
        init.eta[i] = y[i];
        init.w[i] = 1.0 / k.dispersion();
        break;
    }
  }
  return init;
}

/// Full log density sum_i log f(y_i | eta_i), including the normalizing c(y).
inline double log_likelihood(const FamilyKernel& k, const VectorXd& y, const VectorXd& eta) {
  if (eta.size() != y.size()) throw ValidationError("log_likelihood: eta and y lengths differ");
  const VectorXd b = b_value(k, eta);
  const double phi = k.dispersion();
  double total = 0.0;
  for (Index i = 0; i < y.size(); ++i) {
    double c = 0.0;
    switch (k.family()) {
      case Family::poisson: c = -std::lgamma(y[i] + 1.0); break;
      case Family::binomial: {
        const double m = k.trials()[i];
        c = std::lgamma(m + 1.0) - std::lgamma(y[i] + 1.0) - std::lgamma(m - y[i] + 1.0);
        break;
      }
      case Family::gaussian:
        c = -0.5 * y[i] * y[i] / phi - 0.5 * std::log(2.0 * std::numbers::pi * phi);
        break;
    }
    total += (y[i] * eta[i] - b[i]) / phi + c;
  }
  return total;
}

}  // namespace sicglmm
