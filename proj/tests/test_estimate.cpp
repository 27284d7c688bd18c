#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "sicglmm/estimate.hpp"
#include "sicglmm/instances.hpp"

using namespace sicglmm;

namespace {

// Four sites, y = 5 everywhere, independent effects with variance 0.5.
GlmmProblem flat_problem(double beta0) {
  GlmmProblem p;
  p.y = VectorXd::Constant(4, 5.0);
  p.X = MatrixXd::Ones(4, 1);
  p.Z = MatrixXd::Identity(4, 4);
  p.D = 0.5 * MatrixXd::Identity(4, 4);
  p.beta = VectorXd::Constant(1, beta0);
  return p;
}

SpatialData flat_spatial() {
  SpatialData d;
  d.y = VectorXd::Constant(4, 5.0);
  d.X = MatrixXd::Ones(4, 1);
  d.coords.resize(4, 2);
  // Far enough apart that the exponential correlation is exactly zero.
  d.coords << 0, 0, 1e4, 0, 0, 1e4, 1e4, 1e4;
  return d;
}

}  // namespace

TEST(Laplace, FlatDataReference) {
  const auto lv = laplace_log_marginal(flat_problem(1.5));
  ASSERT_TRUE(lv.converged);
  EXPECT_NEAR(lv.value, -9.4558824821568989015, 1e-9);
}

TEST(Laplace, ExactForGaussian) {
  std::mt19937_64 rng(1);
  for (int k = 0; k < 5; ++k) {
    const auto prob = random_glmm(rng, Family::gaussian, 8, 3, 0.6);
    MatrixXd s = prob.Z * prob.D * prob.Z.transpose();
    s.diagonal().array() += 0.6;
    EXPECT_NEAR(laplace_log_marginal(prob).value, log_normal_density(prob.y, prob.X * prob.beta, s), 1e-9);
  }
}

TEST(Laplace, NonConvergenceGivesMinusInfinity) {
  SicOptions opt;
  opt.max_iter = 1;
  opt.tol = 1e-300;
  const auto lv = laplace_log_marginal(flat_problem(0.0), opt);
  EXPECT_FALSE(lv.converged);
  EXPECT_EQ(lv.value, -std::numeric_limits<double>::infinity());
}

TEST(ApproxLoglik, SeparatedSitesReduceToTheIndependentModel) {
  const MaternParams omega{1.0 / 3.0, 1.0, 0.5};
  const auto lv = approx_loglik(flat_spatial(), VectorXd::Constant(1, 1.5), omega);
  EXPECT_NEAR(lv.value, -9.4558824821568989015, 1e-9);
}

TEST(NelderMead, MinimizesRosenbrock) {
  auto f = [](const VectorXd& x) { return 100 * std::pow(x[1] - x[0] * x[0], 2) + std::pow(1 - x[0], 2); };
  NelderMeadOptions o;
  o.diameter_tol = 1e-9;
  o.max_evaluations = 20000;
  const auto r = nelder_mead(f, VectorXd::Constant(2, -1.0), o);
  EXPECT_TRUE(r.converged);
  EXPECT_NEAR(r.argmin[0], 1.0, 1e-5);
  EXPECT_NEAR(r.argmin[1], 1.0, 1e-5);
}

TEST(NelderMead, TreatsNanAsInfinity) {
  auto f = [](const VectorXd& x) { return x[0] < 0 ? NAN : (x[0] - 2) * (x[0] - 2); };
  const auto r = nelder_mead(f, VectorXd::Constant(1, 0.1));
  EXPECT_NEAR(r.argmin[0], 2.0, 1e-5);
}

TEST(NelderMead, StopsAtTheEvaluationBudget) {
  auto f = [](const VectorXd& x) { return x.squaredNorm(); };
  NelderMeadOptions o;
  o.max_evaluations = 10;
  o.diameter_tol = 1e-300;
  const auto r = nelder_mead(f, VectorXd::Constant(3, 5.0), o);
  EXPECT_FALSE(r.converged);
  EXPECT_LE(r.evaluations, 10 + 3);
}

TEST(Estimate, FlatDataInterceptMatchesReference) {
  EstimateOptions opt;
  opt.fix_omega = true;
  opt.optimizer.diameter_tol = 1e-9;
  const EstimateInit init{VectorXd::Constant(1, 1.0), MaternParams{1.0 / 3.0, 1.0, 0.5}};
  const auto r = estimate(flat_spatial(), init, opt);
  EXPECT_TRUE(r.converged);
  EXPECT_NEAR(r.beta_hat[0], 1.5371611090522851058, 1e-6);
  EXPECT_DOUBLE_EQ(r.omega_hat.omega1, 1.0 / 3.0);
}

TEST(Estimate, RecoversParametersOnSimulatedData) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0, 12);
  const Index n = 150;
  SpatialData d;
  d.coords.resize(n, 2);
  for (Index i = 0; i < d.coords.size(); ++i) d.coords.data()[i] = u(rng);
  d.X.resize(n, 2);
  d.X.col(0).setOnes();
  d.X.col(1) = random_vector(rng, n);
  const MaternParams truth{0.5, 1.0, 0.5};
  const auto b = build_blocked(truth, SiteSet::observed_only(d.coords));
  const VectorXd g = b.lower_factor * random_vector(rng, n);
  d.y.resize(n);
  for (Index i = 0; i < n; ++i)
    d.y[i] = static_cast<double>(std::poisson_distribution<int>(std::exp(3.0 + 0.5 * d.X(i, 1) + g[i]))(rng));
  const auto r = estimate(d, default_initial_guess(d));
  EXPECT_TRUE(r.converged);
  EXPECT_NEAR(r.beta_hat[0], 3.0, 0.5);
  EXPECT_NEAR(r.beta_hat[1], 0.5, 0.1);
  EXPECT_GT(r.omega_hat.omega1, 0.2);
  EXPECT_LT(r.omega_hat.omega1, 0.8);
  EXPECT_GT(r.omega_hat.omega2, 0.2);
  EXPECT_LT(r.omega_hat.omega2, 5.0);
  EXPECT_TRUE(std::isfinite(r.objective_value));
}

TEST(Estimate, ValidatesInputs) {
  auto d = flat_spatial();
  EXPECT_THROW(estimate(d, {VectorXd::Zero(2), MaternParams{}}), ValidationError);
  d.y[0] = -1;
  EXPECT_THROW(estimate(d, {VectorXd::Zero(1), MaternParams{}}), DomainError);
}

TEST(GlmIrls, PoissonInterceptIsLogMean) {
  VectorXd y(5);
  y << 1, 4, 0, 7, 3;
  const VectorXd b = glm_irls(FamilyKernel::poisson(), y, MatrixXd::Ones(5, 1));
  EXPECT_NEAR(b[0], std::log(3.0), 1e-10);
}

TEST(GlmIrls, GaussianIsLeastSquares) {
  std::mt19937_64 rng(2);
  const MatrixXd X = random_matrix(rng, 20, 3);
  const VectorXd y = random_vector(rng, 20);
  const VectorXd b = glm_irls(FamilyKernel::gaussian(2.0), y, X);
  const VectorXd ls = X.colPivHouseholderQr().solve(y);
  EXPECT_LE(sup_norm(VectorXd(b - ls)), 1e-10);
}

TEST(InitialGuess, IsInsideTheParameterSpace) {
  const auto init = default_initial_guess(flat_spatial());
  EXPECT_GT(init.omega.omega1, 0.0);
  EXPECT_LT(init.omega.omega1, 1.0);
  EXPECT_GT(init.omega.omega2, 0.0);
  EXPECT_NEAR(init.beta[0], std::log(5.0), 1e-10);
}
