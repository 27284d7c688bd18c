#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "sicglmm/io.hpp"

using namespace sicglmm;

namespace {
CsvTable csv(const std::string& text) {
  std::istringstream in(text);
  return read_csv(in, "test.csv");
}

template <class F>
std::string error_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}
}  // namespace

TEST(Numbers, SeventeenSignificantDigitsRoundTrip) {
  EXPECT_EQ(format_double(0.1), "0.10000000000000001");
  EXPECT_EQ(format_double(2.0), "2");
  EXPECT_EQ(format_double(-1.5e-300), "-1.5000000000000001e-300");
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<std::uint64_t> bits;
  for (int k = 0; k < 2000; ++k) {
    const std::uint64_t b = bits(rng);
    double x;
    std::memcpy(&x, &b, sizeof x);
    if (!std::isfinite(x)) continue;
    EXPECT_EQ(parse_double(format_double(x), "x"), x);
  }
}

TEST(Numbers, ParseRejectsGarbage) {
  EXPECT_THROW(parse_double("", "c"), ValidationError);
  EXPECT_THROW(parse_double("1.0x", "c"), ValidationError);
  EXPECT_THROW(parse_double("abc", "c"), ValidationError);
  EXPECT_EQ(parse_double("+2.5", "c"), 2.5);
  EXPECT_EQ(parse_double("-1e3", "c"), -1000.0);
}

TEST(Csv, ReadsHeaderAndRows) {
  const auto t = csv("y, x_coord ,y_coord\r\n1,2,3\n\n\"4\",5,6\n");
  ASSERT_EQ(t.header.size(), 3u);
  EXPECT_EQ(t.header[1], "x_coord");
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.rows[1][0], "4");
  EXPECT_EQ(*t.column("y_coord"), 2u);
  EXPECT_FALSE(t.column("m").has_value());
}

TEST(Csv, StructuralErrors) {
  EXPECT_THROW(csv(""), ValidationError);
  EXPECT_THROW(csv("a,a\n1,2\n"), ValidationError);
  EXPECT_NE(error_of([] { csv("a,b\n1,2\n3\n"); }).find("line 3"), std::string::npos);
}

TEST(Config, DefaultsAndFields) {
  const auto c = parse_config(Json::parse(R"({
    "family": "binomial", "covariates": ["elev"], "model_tier": "quadratic",
    "matern": {"omega1": 0.3, "omega2": 2, "omega3": 1.5}, "beta": [1, 2],
    "sic": {"tol": 1e-8, "max_iter": 50, "damping": 0.5}, "seed": 99, "output_dir": "o"})"));
  EXPECT_EQ(c.family, Family::binomial);
  EXPECT_EQ(c.covariates, std::vector<std::string>{"elev"});
  EXPECT_EQ(c.tier, ModelTier::quadratic);
  EXPECT_EQ(c.omega.omega2, 2.0);
  EXPECT_FALSE(c.estimate_omega);
  ASSERT_TRUE(c.beta.has_value());
  EXPECT_EQ((*c.beta)[1], 2.0);
  EXPECT_EQ(c.sic.max_iter, 50);
  EXPECT_EQ(c.seed, 99u);
  EXPECT_EQ(c.simulate.base.seed, 99u);
  EXPECT_EQ(c.simulate.base.sic.tol, 1e-8);
  const auto d = parse_config(Json::object());
  EXPECT_EQ(d.family, Family::poisson);
  EXPECT_FALSE(d.beta.has_value());
  EXPECT_TRUE(parse_config(Json::parse(R"({"matern": "estimate"})")).estimate_omega);
}

TEST(Config, UnknownKeysAreNamed) {
  EXPECT_NE(error_of([] { parse_config(Json::parse(R"({"famly": "poisson"})")); }).find("'famly'"), std::string::npos);
  EXPECT_NE(error_of([] { parse_config(Json::parse(R"({"sic": {"tolerance": 1}})")); }).find("'sic.tolerance'"),
            std::string::npos);
  EXPECT_NE(error_of([] { parse_config(Json::parse(R"({"simulate": {"reps": 1}})")); }).find("'simulate.reps'"),
            std::string::npos);
}

TEST(Config, TypeAndRangeErrors) {
  EXPECT_THROW(parse_config(Json::parse(R"({"family": "gamma"})")), ValidationError);
  EXPECT_THROW(parse_config(Json::parse(R"({"matern": "guess"})")), ValidationError);
  EXPECT_THROW(parse_config(Json::parse(R"({"matern": {"omega1": 2}})")), ValidationError);
  EXPECT_THROW(parse_config(Json::parse(R"({"sic": {"damping": 0}})")), ValidationError);
  EXPECT_THROW(parse_config(Json::parse(R"({"sic": {"max_iter": 1.5}})")), ValidationError);
  EXPECT_THROW(parse_config(Json::parse(R"({"seed": -1})")), ValidationError);
  EXPECT_THROW(parse_config(Json::parse(R"({"validate": {"splits": 0}})")), ValidationError);
  EXPECT_THROW(parse_config(Json::parse(R"({"model_tier": "cubic"})")), ValidationError);
  EXPECT_THROW(parse_config(Json::parse(R"({"covariates": "elev"})")), ValidationError);
}

TEST(Config, SimulateBlock) {
  const auto c = parse_config(Json::parse(
      R"({"simulate": {"n": 50, "beta1": [0, 0.5], "scenarios": ["oracle"], "replications": 3,
                       "omega": {"omega1": 0.4}}})"));
  EXPECT_EQ(c.simulate.base.n, 50);
  EXPECT_EQ(c.simulate.beta1_values.size(), 2u);
  EXPECT_EQ(c.simulate.base.scenarios.size(), 1u);
  EXPECT_EQ(c.simulate.base.omega.omega1, 0.4);
  EXPECT_EQ(c.simulate.base.omega.omega2, 1.0);
}

TEST(Dataset, ParsesColumnsAndRoles) {
  RunConfig cfg;
  cfg.covariates = {"elev"};
  const auto d = parse_dataset(csv("y,x_coord,y_coord,elev,role\n3,0,1,10,train\n0,2,3,11,test\n"), cfg, true, "d");
  EXPECT_EQ(d.rows(), 2);
  EXPECT_TRUE(d.has_role);
  EXPECT_EQ(d.roles[1], RowRole::test);
  EXPECT_EQ(d.covariates(1, 0), 11.0);
  EXPECT_EQ(d.coords(1, 1), 3.0);
  const auto s = d.subset({1});
  EXPECT_EQ(s.row_ids[0], 1);
  EXPECT_EQ(s.y[0], 0.0);
}

TEST(Dataset, MissingColumnsAreNamed) {
  RunConfig cfg;
  EXPECT_NE(error_of([&] { parse_dataset(csv("x_coord,y_coord\n1,2\n"), cfg, true, "d"); }).find("'y'"),
            std::string::npos);
  cfg.covariates = {"elev"};
  EXPECT_NE(error_of([&] { parse_dataset(csv("y,x_coord,y_coord\n1,1,2\n"), cfg, true, "d"); }).find("'elev'"),
            std::string::npos);
  cfg = RunConfig{};
  cfg.family = Family::binomial;
  EXPECT_NE(error_of([&] { parse_dataset(csv("y,x_coord,y_coord\n1,1,2\n"), cfg, true, "d"); }).find("'m'"),
            std::string::npos);
}

TEST(Dataset, ValuesAreChecked) {
  RunConfig cfg;
  EXPECT_THROW(parse_dataset(csv("y,x_coord,y_coord\n1.5,1,2\n"), cfg, true, "d"), DomainError);
  EXPECT_THROW(parse_dataset(csv("y,x_coord,y_coord\n-1,1,2\n"), cfg, true, "d"), DomainError);
  EXPECT_THROW(parse_dataset(csv("y,x_coord,y_coord\n1,one,2\n"), cfg, true, "d"), ValidationError);
  EXPECT_THROW(parse_dataset(csv("y,x_coord,y_coord,role\n1,1,2,holdout\n"), cfg, true, "d"), ValidationError);
  EXPECT_THROW(parse_dataset(csv("y,x_coord,y_coord\n"), cfg, true, "d"), ValidationError);
  EXPECT_EQ(parse_dataset(csv("x_coord,y_coord\n"), cfg, false, "d").rows(), 0);
  cfg.family = Family::binomial;
  EXPECT_THROW(parse_dataset(csv("y,x_coord,y_coord,m\n5,1,2,4\n"), cfg, true, "d"), DomainError);
  cfg.family = Family::gaussian;
  EXPECT_NO_THROW(parse_dataset(csv("y,x_coord,y_coord\n-1.25,1,2\n"), cfg, true, "d"));
}

TEST(Design, TierColumns) {
  RunConfig cfg;
  cfg.covariates = {"elev"};
  const auto d = parse_dataset(csv("y,x_coord,y_coord,elev\n1,0,0,5\n2,2,4,6\n3,4,8,7\n"), cfg, true, "d");
  const auto s = TierScaling::from(d.coords);
  EXPECT_DOUBLE_EQ(s.lon_center, 2.0);
  EXPECT_DOUBLE_EQ(s.lon_scale, 2.0);
  EXPECT_DOUBLE_EQ(s.lat_scale, 4.0);
  EXPECT_EQ(design_matrix(ModelTier::intercept, d, s).cols(), 2);
  EXPECT_EQ(design_matrix(ModelTier::main_effects, d, s).cols(), 4);
  const MatrixXd q = design_matrix(ModelTier::quadratic, d, s);
  ASSERT_EQ(q.cols(), 7);
  EXPECT_DOUBLE_EQ(q(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(q(0, 1), 5.0);
  EXPECT_DOUBLE_EQ(q(0, 2), -1.0);  // (0 - 2)/2
  EXPECT_DOUBLE_EQ(q(2, 3), 1.0);   // (8 - 4)/4
  EXPECT_DOUBLE_EQ(q(0, 4), 1.0);
  EXPECT_DOUBLE_EQ(q(0, 6), 1.0);
  EXPECT_DOUBLE_EQ(q(1, 6), 0.0);
}

TEST(Deviance, WorkedExamples) {
  VectorXd y(1), yh(1);
  y << 2;
  yh << 1;
  EXPECT_NEAR(deviance_gof(y, yh), 0.77258872223978123767, 1e-12);
  y << 0;
  EXPECT_NEAR(deviance_gof(y, yh), 2.0, 1e-12);
  VectorXd a(3);
  a << 0.5, 3, 10;
  EXPECT_NEAR(deviance_gof(a, a), 0.0, 1e-12);
}

TEST(Deviance, NonNegativeAndDomainChecked) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.01, 20);
  for (int k = 0; k < 200; ++k) {
    VectorXd y(4), yh(4);
    for (int i = 0; i < 4; ++i) {
      y[i] = std::floor(u(rng));
      yh[i] = u(rng);
    }
    EXPECT_GE(deviance_gof(y, yh), 0.0);
  }
  VectorXd y(1), bad(1);
  y << 1;
  bad << 0;
  EXPECT_THROW(deviance_gof(y, bad), DomainError);
  bad << -1;
  EXPECT_THROW(deviance_gof(y, bad), DomainError);
  EXPECT_THROW(deviance_gof(y, VectorXd::Ones(2)), ValidationError);
}

TEST(Deviance, OtherFamilies) {
  VectorXd y(2), yh(2), m(2);
  y << 1, 3;
  yh << 1.5, 2;
  m << 4, 3;
  EXPECT_DOUBLE_EQ(predictive_deviance(FamilyKernel::gaussian(0.5), y, yh), (0.25 + 1.0) / 0.5);
  const double b = 2 * (1 * std::log(1 / 1.5) + 3 * std::log(3 / 2.5) + 3 * std::log(3.0 / 2.0));
  EXPECT_NEAR(predictive_deviance(FamilyKernel::binomial(m), y, yh), b, 1e-14);
  yh << 1.5, 3;
  EXPECT_THROW(predictive_deviance(FamilyKernel::binomial(m), y, yh), DomainError);
}
