#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <string>

#include "sicglmm/errors.hpp"

namespace sicglmm {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Cholesky factorization that throws NumericalError instead of returning a
/// silently broken factor.
inline Eigen::LLT<MatrixXd> cholesky_or_throw(const MatrixXd& a, const std::string& what) {
  Eigen::LLT<MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) throw NumericalError(what + " is not positive definite");
  return llt;
}

inline double log_det_from_llt(const Eigen::LLT<MatrixXd>& llt) {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

template <class Derived>
double sup_norm(const Eigen::MatrixBase<Derived>& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

/// Smallest eigenvalue of the symmetric part of a.
inline double min_eigenvalue(const MatrixXd& a) {
  const MatrixXd s = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(s, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

inline void symmetrize(MatrixXd& a) { a = 0.5 * (a + a.transpose()).eval(); }

/// log of the N(mean, cov) density at t.
inline double log_normal_density(const VectorXd& t, const VectorXd& mean, const MatrixXd& cov) {
  if (t.size() != mean.size() || cov.rows() != t.size() || cov.cols() != t.size())
    throw ValidationError("log_normal_density: dimension mismatch");
  const auto llt = cholesky_or_throw(cov, "normal covariance");
  const VectorXd z = llt.matrixL().solve(t - mean);
  const double d = static_cast<double>(t.size());
  return -0.5 * d * std::log(2.0 * std::numbers::pi) - 0.5 * log_det_from_llt(llt) - 0.5 * z.squaredNorm();
}

/// log of the N(mean, diag(1/w)) density at t, for a vector of precisions w.
inline double log_normal_density_precision(const VectorXd& t, const VectorXd& mean, const VectorXd& w) {
  if (t.size() != mean.size() || w.size() != t.size())
    throw ValidationError("log_normal_density_precision: dimension mismatch");
  if ((w.array() <= 0.0).any()) throw NumericalError("normal precision is not positive definite");
  const double d = static_cast<double>(t.size());
  return -0.5 * d * std::log(2.0 * std::numbers::pi) + 0.5 * w.array().log().sum() -
         0.5 * (w.array() * (t - mean).array().square()).sum();
}

inline bool is_identity(const MatrixXd& a) {
  return a.rows() == a.cols() && a.isIdentity(0.0);
}

}  // namespace sicglmm
