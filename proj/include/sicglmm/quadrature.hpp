#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "sicglmm/errors.hpp"

namespace sicglmm {

/// Nodes and weights for integrals against the standard normal density:
/// sum_k weight[k] * f(node[k]) ~ E f(Z), Z ~ N(0, 1).
struct GaussHermiteRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Newton iteration on the orthonormal Hermite recurrence, started from the
/// usual asymptotic guesses for the largest roots.
inline GaussHermiteRule gauss_hermite(int order) {
  if (order < 1) throw ValidationError("Gauss-Hermite order must be >= 1");
  const int n = order;
  const double pim4 = std::pow(std::numbers::pi, -0.25);
  std::vector<double> x(static_cast<std::size_t>(n)), w(static_cast<std::size_t>(n));
  const int half = (n + 1) / 2;
  double z = 0.0;
  for (int i = 0; i < half; ++i) {
    if (i == 0) {
      z = std::sqrt(2.0 * n + 1.0) - 1.85575 * std::pow(2.0 * n + 1.0, -0.16667);
    } else if (i == 1) {
      z -= 1.14 * std::pow(static_cast<double>(n), 0.426) / z;
    } else if (i == 2) {
      z = 1.86 * z - 0.86 * x[0];
    } else if (i == 3) {
      z = 1.91 * z - 0.91 * x[1];
    } else {
      z = 2.0 * z - x[static_cast<std::size_t>(i - 2)];
    }
    double pp = 0.0;
    bool done = false;
    for (int it = 0; it < 100 && !done; ++it) {
      double p1 = pim4, p2 = 0.0;
      for (int j = 0; j < n; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = z * std::sqrt(2.0 / (j + 1)) * p2 - std::sqrt(static_cast<double>(j) / (j + 1)) * p3;
      }
      pp = std::sqrt(2.0 * n) * p2;
      const double z1 = z;
      z = z1 - p1 / pp;
      done = std::abs(z - z1) <= 1e-15 * std::max(1.0, std::abs(z));
    }
    if (!done) throw NumericalError("Gauss-Hermite root iteration did not converge");
    const auto a = static_cast<std::size_t>(i), b = static_cast<std::size_t>(n - 1 - i);
    x[a] = z;
    x[b] = -z;
    w[a] = w[b] = 2.0 / (pp * pp);
  }
  // Physicists' rule (weight e^{-t^2}) -> standard normal.
  GaussHermiteRule rule;
  rule.nodes.resize(x.size());
  rule.weights.resize(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    rule.nodes[k] = std::numbers::sqrt2 * x[x.size() - 1 - k];
    rule.weights[k] = w[x.size() - 1 - k] / std::sqrt(std::numbers::pi);
  }
  return rule;
}

}  // namespace sicglmm
