#pragma once

// Random problem generators shared by the verification battery and tests.

#include <Eigen/Dense>

#include <cmath>
#include <random>

#include "sicglmm/family.hpp"
#include "sicglmm/sic.hpp"

namespace sicglmm {

inline MatrixXd random_matrix(std::mt19937_64& rng, Index rows, Index cols, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  MatrixXd m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
  return m;
}

inline VectorXd random_vector(std::mt19937_64& rng, Index size, double scale = 1.0) {
  return random_matrix(rng, size, 1, scale).col(0);
}

/// A A' / r + c I with eigenvalues bounded away from zero.
inline MatrixXd random_spd(std::mt19937_64& rng, Index r, double ridge = 0.2, double scale = 1.0) {
  const MatrixXd a = random_matrix(rng, r, r);
  MatrixXd d = scale * (a * a.transpose() / static_cast<double>(r));
  d.diagonal().array() += ridge * scale;
  symmetrize(d);
  return d;
}

inline Index uniform_index(std::mt19937_64& rng, Index lo, Index hi) {
  return std::uniform_int_distribution<Index>(lo, hi)(rng);
}

/// Factorization identity arguments with n <= max_n and r <= max_r.
inline FactorizationInstance random_factorization_instance(std::mt19937_64& rng, Index max_n = 6, Index max_r = 4) {
  FactorizationInstance a;
  const Index n = uniform_index(rng, 1, max_n), r = uniform_index(rng, 1, max_r), p = uniform_index(rng, 1, 3);
  std::uniform_real_distribution<double> wdist(0.3, 3.0);
  a.u = random_vector(rng, n);
  a.alpha = random_vector(rng, n, 0.5);
  a.beta = random_vector(rng, p, 0.5);
  a.gamma = random_vector(rng, r);
  a.delta = random_vector(rng, r, 0.5);
  a.X = random_matrix(rng, n, p);
  a.Z = random_matrix(rng, n, r);
  a.w.resize(n);
  for (Index i = 0; i < n; ++i) a.w[i] = wdist(rng);
  a.D = random_spd(rng, r);
  return a;
}

/// Random GLMM with an intercept plus one covariate, Z with N(0, 1/r) entries
/// and responses drawn from the model. Binomial trials lie in 1..10.
inline GlmmProblem random_glmm(std::mt19937_64& rng, Family family, Index n, Index r, double gaussian_variance = 1.0) {
  GlmmProblem prob;
  prob.X.resize(n, 2);
  prob.X.col(0).setOnes();
  prob.X.col(1) = random_vector(rng, n);
  prob.Z = random_matrix(rng, n, r, 1.0 / std::sqrt(static_cast<double>(r)));
  prob.D = random_spd(rng, r, 0.2, 0.5);
  prob.beta = random_vector(rng, 2, 0.3);
  if (family == Family::poisson) prob.beta[0] += 1.0;
  const Eigen::LLT<MatrixXd> llt(prob.D);
  const VectorXd gamma = llt.matrixL() * random_vector(rng, r);
  const VectorXd eta = prob.X * prob.beta + prob.Z * gamma;
  prob.y.resize(n);
  switch (family) {
    case Family::poisson: {
      prob.kernel = FamilyKernel::poisson();
      for (Index i = 0; i < n; ++i) prob.y[i] = static_cast<double>(std::poisson_distribution<int>(std::exp(eta[i]))(rng));
      break;
    }
    case Family::binomial: {
      VectorXd m(n);
      for (Index i = 0; i < n; ++i) {
        m[i] = static_cast<double>(uniform_index(rng, 1, 10));
        const double pr = 1.0 / (1.0 + std::exp(-eta[i]));
        prob.y[i] = static_cast<double>(std::binomial_distribution<int>(static_cast<int>(m[i]), pr)(rng));
      }
      prob.kernel = FamilyKernel::binomial(m);
      break;
    }
    case Family::gaussian: {
      prob.kernel = FamilyKernel::gaussian(gaussian_variance);
      std::normal_distribution<double> noise(0.0, std::sqrt(gaussian_variance));
      for (Index i = 0; i < n; ++i) prob.y[i] = eta[i] + noise(rng);
      break;
    }
  }
  return prob;
}

/// Conjugate posterior of gamma for a gaussian-kernel problem:
/// Xi = (D^{-1} + Z' Z / s2)^{-1}, xi = Xi Z' (y - X beta) / s2.
inline std::pair<VectorXd, MatrixXd> gaussian_posterior(const GlmmProblem& prob) {
  if (prob.kernel.family() != Family::gaussian) throw ValidationError("gaussian_posterior needs a gaussian kernel");
  const double s2 = prob.kernel.dispersion();
  MatrixXd prec = prob.D.inverse() + prob.Z.transpose() * prob.Z / s2;
  symmetrize(prec);
  MatrixXd cov = prec.inverse();
  symmetrize(cov);
  VectorXd mean = cov * (prob.Z.transpose() * (prob.y - prob.X * prob.beta)) / s2;
  return {mean, cov};
}

}  // namespace sicglmm
