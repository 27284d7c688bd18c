#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "sicglmm/family.hpp"

using namespace sicglmm;

namespace {
VectorXd vec(std::initializer_list<double> v) {
  VectorXd out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}
}  // namespace

TEST(FamilyKernel, ParsesNames) {
  EXPECT_EQ(parse_family("poisson"), Family::poisson);
  EXPECT_EQ(parse_family("binomial"), Family::binomial);
  EXPECT_EQ(parse_family("gaussian"), Family::gaussian);
  EXPECT_THROW(parse_family("gamma"), ValidationError);
}

TEST(FamilyKernel, BinomialTrialsMustBePositiveIntegers) {
  EXPECT_THROW(FamilyKernel::binomial(vec({1, 0})), ValidationError);
  EXPECT_THROW(FamilyKernel::binomial(vec({2.5})), ValidationError);
  EXPECT_THROW(FamilyKernel::binomial(VectorXd()), ValidationError);
  EXPECT_NO_THROW(FamilyKernel::binomial(vec({1, 7})));
}

TEST(FamilyKernel, GaussianVarianceMustBePositive) {
  EXPECT_THROW(FamilyKernel::gaussian(0.0), ValidationError);
  EXPECT_THROW(FamilyKernel::gaussian(-1.0), ValidationError);
  EXPECT_THROW(FamilyKernel::gaussian(NAN), ValidationError);
}

TEST(Cumulant, PoissonValues) {
  const auto k = FamilyKernel::poisson();
  const VectorXd eta = vec({-1.0, 0.0, 2.0});
  const VectorXd b = b_value(k, eta), b1 = b_prime(k, eta), b2 = b_double_prime(k, eta);
  for (Index i = 0; i < 3; ++i) {
    EXPECT_DOUBLE_EQ(b[i], std::exp(eta[i]));
    EXPECT_DOUBLE_EQ(b1[i], std::exp(eta[i]));
    EXPECT_DOUBLE_EQ(b2[i], std::exp(eta[i]));
  }
}

TEST(Cumulant, BinomialValuesAndOverflowSafety) {
  const auto k = FamilyKernel::binomial(vec({3, 5, 2}));
  const VectorXd eta = vec({0.0, 1.5, 800.0});
  const VectorXd b = b_value(k, eta), b1 = b_prime(k, eta), b2 = b_double_prime(k, eta);
  EXPECT_NEAR(b[0], 3 * std::log(2.0), 1e-15);
  EXPECT_NEAR(b[1], 5 * std::log1p(std::exp(1.5)), 1e-14);
  EXPECT_DOUBLE_EQ(b[2], 2 * 800.0);
  EXPECT_DOUBLE_EQ(b1[0], 1.5);
  const double p = 1.0 / (1.0 + std::exp(-1.5));
  EXPECT_NEAR(b1[1], 5 * p, 1e-14);
  EXPECT_NEAR(b2[1], 5 * p * (1 - p), 1e-14);
  EXPECT_TRUE(std::isfinite(b2[2]));
}

TEST(Cumulant, GaussianValues) {
  const auto k = FamilyKernel::gaussian(2.0);
  const VectorXd eta = vec({-3.0, 0.5});
  EXPECT_DOUBLE_EQ(b_value(k, eta)[0], 4.5);
  EXPECT_DOUBLE_EQ(b_prime(k, eta)[1], 0.5);
  EXPECT_DOUBLE_EQ(b_double_prime(k, eta)[0], 1.0);
}

TEST(Cumulant, RejectsNonFiniteEta) {
  EXPECT_THROW(b_value(FamilyKernel::poisson(), vec({NAN})), DomainError);
  EXPECT_THROW(mean_and_weight(FamilyKernel::poisson(), vec({INFINITY})), DomainError);
}

TEST(Cumulant, DerivativesMatchFiniteDifferences) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-4, 4);
  const auto kernels = {FamilyKernel::poisson(), FamilyKernel::binomial(vec({4})), FamilyKernel::gaussian(1.0)};
  for (const auto& k : kernels) {
    for (int t = 0; t < 50; ++t) {
      const double e = u(rng), h = 1e-5;
      const VectorXd at = vec({e}), up = vec({e + h}), dn = vec({e - h});
      const double d1 = (b_value(k, up)[0] - b_value(k, dn)[0]) / (2 * h);
      const double d2 = (b_prime(k, up)[0] - b_prime(k, dn)[0]) / (2 * h);
      EXPECT_NEAR(d1, b_prime(k, at)[0], 1e-6 * (1 + std::abs(d1)));
      EXPECT_NEAR(d2, b_double_prime(k, at)[0], 1e-6 * (1 + std::abs(d2)));
    }
  }
}

TEST(WorkingResponse, PoissonByHand) {
  // eta = 0, y = 2: u = 0 + (2 - 1)/1
  EXPECT_DOUBLE_EQ(working_response(FamilyKernel::poisson(), vec({0.0}), vec({2.0}))[0], 1.0);
  // eta = log 4, y = 0: u = log 4 - 1
  EXPECT_NEAR(working_response(FamilyKernel::poisson(), vec({std::log(4.0)}), vec({0.0}))[0], std::log(4.0) - 1.0,
              1e-15);
}

TEST(WorkingResponse, BinomialByHand) {
  // m = 4, eta = 0: mu = 2, b'' = 1, u = y - 2
  EXPECT_DOUBLE_EQ(working_response(FamilyKernel::binomial(vec({4})), vec({0.0}), vec({3.0}))[0], 1.0);
}

TEST(WorkingResponse, GaussianIsTheResponse) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0, 3);
  const auto k = FamilyKernel::gaussian(0.7);
  for (int t = 0; t < 20; ++t) {
    const VectorXd eta = vec({n(rng), n(rng)}), y = vec({n(rng), n(rng)});
    const VectorXd u = working_response(k, eta, y);
    EXPECT_NEAR(u[0], y[0], 1e-12 * (1 + std::abs(y[0])));
    EXPECT_NEAR(u[1], y[1], 1e-12 * (1 + std::abs(y[1])));
  }
}

TEST(WorkingWeights, GaussianWeightIsInverseVariance) {
  const auto mw = mean_and_weight(FamilyKernel::gaussian(0.25), vec({1.0, -2.0}));
  EXPECT_DOUBLE_EQ(mw.w[0], 4.0);
  EXPECT_DOUBLE_EQ(mw.mu[1], -2.0);
}

TEST(WorkingWeights, PoissonEtaIsClampedAtThirty) {
  const auto mw = mean_and_weight(FamilyKernel::poisson(), vec({50.0, -50.0}));
  EXPECT_DOUBLE_EQ(mw.w[0], std::exp(30.0));
  EXPECT_DOUBLE_EQ(mw.w[1], std::exp(-30.0));
  EXPECT_TRUE(mw.w.allFinite());
}

TEST(WorkingWeights, DegenerateBinomialSitesAreNamed) {
  // m e^{-30} / (1 + e^{-30})^2 ~ 9e-14 is below the 1e-12 floor.
  const auto k = FamilyKernel::binomial(vec({1, 1, 1}));
  try {
    working_response(k, vec({0.0, -40.0, -35.0}), vec({0, 0, 0}));
    FAIL() << "expected DegenerateSiteError";
  } catch (const DegenerateSiteError& e) {
    ASSERT_EQ(e.sites().size(), 2u);
    EXPECT_EQ(e.sites()[0], 1u);
    EXPECT_EQ(e.sites()[1], 2u);
    EXPECT_EQ(e.code(), ExitCode::numerical);
  }
}

TEST(Response, SupportIsChecked) {
  EXPECT_THROW(validate_response(FamilyKernel::poisson(), vec({1, -1})), DomainError);
  EXPECT_THROW(validate_response(FamilyKernel::poisson(), vec({1.5})), DomainError);
  EXPECT_THROW(validate_response(FamilyKernel::poisson(), vec({NAN})), DomainError);
  EXPECT_THROW(validate_response(FamilyKernel::binomial(vec({3})), vec({4})), DomainError);
  EXPECT_THROW(validate_response(FamilyKernel::binomial(vec({3, 3})), vec({1})), ValidationError);
  EXPECT_NO_THROW(validate_response(FamilyKernel::gaussian(1.0), vec({-1.25, 3.5})));
}

TEST(InitialPredictor, FamilyFormulas) {
  const auto p = initial_eta(FamilyKernel::poisson(), vec({0, 3}));
  EXPECT_DOUBLE_EQ(p.eta[0], std::log(0.5));
  EXPECT_DOUBLE_EQ(p.w[1], 3.5);
  const auto b = initial_eta(FamilyKernel::binomial(vec({4})), vec({1}));
  EXPECT_DOUBLE_EQ(b.eta[0], std::log(1.5 / 3.5));
  EXPECT_DOUBLE_EQ(b.w[0], 4 * 1.5 * 3.5 / 25.0);
  const auto g = initial_eta(FamilyKernel::gaussian(2.0), vec({-0.3}));
  EXPECT_DOUBLE_EQ(g.eta[0], -0.3);
  EXPECT_DOUBLE_EQ(g.w[0], 0.5);
}

TEST(LogLikelihood, MatchesDirectDensities) {
  // Poisson(2 | mean 1): -1 - log 2
  EXPECT_NEAR(log_likelihood(FamilyKernel::poisson(), vec({2}), vec({0.0})), -1.0 - std::log(2.0), 1e-15);
  // Binomial(1 | 3, 1/2): log(3/8)
  EXPECT_NEAR(log_likelihood(FamilyKernel::binomial(vec({3})), vec({1}), vec({0.0})), std::log(3.0 / 8.0), 1e-15);
  // N(1 | 0.5, 2)
  const double g = -0.5 * std::log(2 * M_PI * 2.0) - 0.25 * 0.25;
  EXPECT_NEAR(log_likelihood(FamilyKernel::gaussian(2.0), vec({1.0}), vec({0.5})), g, 1e-15);
}
