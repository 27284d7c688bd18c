#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "sicglmm/covariance.hpp"

using namespace sicglmm;

// High-precision references from tests/oracles/reference_values.py.
TEST(Matern, ClosedFormThreeHalves) {
  EXPECT_NEAR(matern({0.5, 2.0, 1.5}, 0.7), 0.59183271345985557532, 1e-15);
}

TEST(Matern, ExponentialCaseMatchesClosedForm) {
  const MaternParams p{0.5, 1.3, 0.5};
  for (int i = 0; i <= 2000; ++i) {
    const double d = 20.0 * i / 2000.0;
    EXPECT_NEAR(matern(p, d), std::exp(-1.3 * d), 1e-14) << "d=" << d;
  }
}

struct BesselCase {
  double nu, d, ref;
};

class MaternGeneral : public ::testing::TestWithParam<BesselCase> {};

TEST_P(MaternGeneral, MatchesHighPrecisionReference) {
  const auto c = GetParam();
  const double v = matern({0.6, 1.3, c.nu}, c.d);
  EXPECT_NEAR(v / c.ref, 1.0, 1e-8) << "nu=" << c.nu << " d=" << c.d;
}

INSTANTIATE_TEST_SUITE_P(
    References, MaternGeneral,
    ::testing::Values(BesselCase{0.8, 0.1, 1.4383027594025303186}, BesselCase{0.8, 1.0, 0.61295915784768253245},
                      BesselCase{0.8, 5.0, 0.0050283428121492361232}, BesselCase{1.5, 0.1, 1.4883717554103514437},
                      BesselCase{1.5, 1.0, 0.94023468596734348077}, BesselCase{1.5, 5.0, 0.016913690920997690033},
                      BesselCase{3.2, 0.1, 1.497124364412261162}, BesselCase{3.2, 1.0, 1.2518970277118195421},
                      BesselCase{3.2, 5.0, 0.080606435707703965771}));

TEST(Matern, VarianceAtZeroAndDecreasingInDistance) {
  for (double nu : {0.3, 0.5, 0.8, 1.5, 2.5, 3.2}) {
    const MaternParams p{0.7, 0.9, nu};
    EXPECT_DOUBLE_EQ(matern(p, 0.0), 0.7 / 0.3);
    double prev = matern(p, 0.0);
    for (int i = 1; i <= 400; ++i) {
      const double v = matern(p, 0.05 * i);
      EXPECT_LE(v, prev * (1 + 1e-15)) << "nu=" << nu;
      EXPECT_GE(v, 0.0);
      prev = v;
    }
  }
}

TEST(Matern, ContinuousAtTheOrigin) {
  for (double nu : {0.8, 1.5, 3.2}) {
    const MaternParams p{0.5, 1.0, nu};
    EXPECT_NEAR(matern(p, 1e-9), 1.0, 1e-6) << "nu=" << nu;
  }
}

TEST(Matern, GeneralPathAgreesWithHalfIntegerForms) {
  // nu just off a half integer must be close to the closed form.
  for (double nu : {0.5, 1.5, 2.5})
    for (double d : {0.2, 1.0, 3.0})
      EXPECT_NEAR(matern({0.5, 1.0, nu + 1e-9}, d), matern({0.5, 1.0, nu}, d), 1e-7);
}

TEST(Matern, LargeDistanceUnderflowsToZero) {
  EXPECT_EQ(matern({0.5, 1.0, 0.8}, 1e4), 0.0);
}

TEST(Matern, ParameterDomain) {
  EXPECT_THROW(matern({0.0, 1.0, 0.5}, 1.0), ValidationError);
  EXPECT_THROW(matern({1.0, 1.0, 0.5}, 1.0), ValidationError);
  EXPECT_THROW(matern({0.5, 0.0, 0.5}, 1.0), ValidationError);
  EXPECT_THROW(matern({0.5, 1.0, -1.0}, 1.0), ValidationError);
  EXPECT_THROW(matern({0.5, 1.0, 0.5}, -1.0), DomainError);
}

TEST(MaternMatrix, SymmetricPositiveDefinite) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0, 10);
  Coordinates c(30, 2);
  for (Index i = 0; i < c.size(); ++i) c.data()[i] = u(rng);
  for (double nu : {0.5, 1.2, 2.5}) {
    const MatrixXd d = matern_matrix({0.4, 0.7, nu}, c);
    EXPECT_EQ((d - d.transpose()).norm(), 0.0);
    EXPECT_GT(min_eigenvalue(d), 0.0);
  }
}

TEST(SiteSet, RejectsDuplicateObservedSites) {
  Coordinates c(3, 2);
  c << 0, 0, 1, 1, 0, 0;
  EXPECT_THROW(SiteSet::observed_only(c), ValidationError);
  EXPECT_NO_THROW(SiteSet(c, {SiteRole::observed, SiteRole::observed, SiteRole::unobserved}));
}

TEST(SiteSet, RejectsMismatchedRoles) {
  Coordinates c(2, 2);
  c << 0, 0, 1, 1;
  EXPECT_THROW(SiteSet(c, {SiteRole::observed}), ValidationError);
}

TEST(BlockedCovariance, BlocksMatchTheFullMatrixWithObservedFirst) {
  Coordinates c(4, 2);
  c << 0, 0, 3, 0, 1, 0, 0, 2;
  const SiteSet s(c, {SiteRole::unobserved, SiteRole::observed, SiteRole::observed, SiteRole::unobserved});
  const MaternParams p{0.5, 0.8, 0.5};
  const auto b = build_blocked(p, s);
  ASSERT_EQ(b.n_observed(), 2);
  ASSERT_EQ(b.n_unobserved(), 2);
  EXPECT_EQ(b.jitter, 0.0);
  EXPECT_DOUBLE_EQ(b.D11(0, 1), matern(p, 2.0));
  EXPECT_DOUBLE_EQ(b.D12(0, 0), matern(p, 3.0));
  EXPECT_DOUBLE_EQ(b.D12(1, 1), matern(p, std::sqrt(5.0)));
  EXPECT_DOUBLE_EQ(b.D22(0, 1), matern(p, 2.0));
  const MatrixXd l = b.lower_factor;
  EXPECT_LT((l * l.transpose() - b.full()).norm(), 1e-12);
}

TEST(BlockedCovariance, JitterRepairsAnUnobservedDuplicate) {
  Coordinates c(3, 2);
  c << 0, 0, 1, 0, 0, 0;
  std::vector<double> seen;
  const auto b = build_blocked({0.5, 1.0, 0.5}, SiteSet(c, {SiteRole::observed, SiteRole::observed, SiteRole::unobserved}),
                               [&](double j) { seen.push_back(j); });
  EXPECT_GT(b.jitter, 0.0);
  EXPECT_LE(b.jitter, 1e-6);
  EXPECT_EQ(seen, b.jitter_log);
  EXPECT_DOUBLE_EQ(seen.front(), 1e-10);
}
