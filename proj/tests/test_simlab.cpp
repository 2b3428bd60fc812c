#include <cmath>

#include <gtest/gtest.h>

#include "aurora/simlab.hpp"

using namespace aurora;

namespace {

ScenarioConfig base_config(std::size_t n, std::size_t B, PriorSpec p, LikelihoodSpec l) {
  ScenarioConfig c;
  c.n = n;
  c.B = B;
  c.seed = 2024;
  c.prior = p;
  c.likelihood = l;
  return c;
}

struct Moments {
  double mean = 0.0, var = 0.0;
};

Moments moments(const RowMatrix& m) {
  Moments out;
  out.mean = m.mean();
  out.var = (m.array() - out.mean).square().sum() / static_cast<double>(m.size() - 1);
  return out;
}

}  // namespace

TEST(SampleScenario, ThreePointPriorHasVarianceA) {
  const double A = 16.0;
  const auto sc = sample_scenario(base_config(100000, 2, prior::ThreePoint{A}, likelihood::Normal{1.0}), 0);
  const double second = sc.truth.squaredNorm() / 1e5;
  // mu^2 is 3A/2 with probability 2/3, else 0: sd of its mean is sqrt(0.5) A / sqrt(n).
  EXPECT_NEAR(second, A, 4.0 * std::sqrt(0.5) * A / std::sqrt(1e5));
  const double atom = std::sqrt(1.5 * A);
  for (Eigen::Index i = 0; i < 100; ++i)
    EXPECT_TRUE(sc.truth[i] == 0.0 || std::abs(std::abs(sc.truth[i]) - atom) < 1e-15);
}

TEST(SampleScenario, LikelihoodFamiliesHaveConfiguredMeanAndVariance) {
  const std::size_t n = 20000, B = 10;
  const double mu = 2.0, var = 4.0;
  for (const LikelihoodSpec& l : {LikelihoodSpec(likelihood::Normal{var}), LikelihoodSpec(likelihood::Laplace{var}),
                                  LikelihoodSpec(likelihood::Rectangular{var})}) {
    const auto sc = sample_scenario(base_config(n, B, prior::Point{mu}, l), 0);
    const auto m = moments(sc.data.values());
    EXPECT_NEAR(m.mean, mu, 4.0 * std::sqrt(var / (n * B)));
    EXPECT_NEAR(m.var, var, 0.05 * var);
  }
}

TEST(SampleScenario, PointPriorWithTinyNoise) {
  const auto sc = sample_scenario(base_config(50, 5, prior::Point{7.0}, likelihood::Normal{1e-20}), 3);
  EXPECT_LT((sc.data.values().array() - 7.0).abs().maxCoeff(), 1e-8);
  EXPECT_EQ(sc.truth, Vector::Constant(50, 7.0));
}

TEST(SampleScenario, RectangularSupport) {
  const auto sc = sample_scenario(base_config(10000, 10, prior::Point{0.0}, likelihood::Rectangular{4.0}), 0);
  const double half_width = std::sqrt(12.0);
  EXPECT_LE(sc.data.values().cwiseAbs().maxCoeff(), half_width);
  EXPECT_GT(sc.data.values().cwiseAbs().maxCoeff(), 0.999 * half_width);
}

TEST(SampleScenario, ParetoMeanAndScale) {
  const auto sc = sample_scenario(base_config(100000, 10, prior::Point{3.0}, likelihood::Pareto{3.0}), 0);
  EXPECT_NEAR(sc.data.values().mean(), 3.0, 0.01);
  EXPECT_GE(sc.data.values().minCoeff(), 2.0);  // x_m = mu (alpha - 1) / alpha
  EXPECT_LT(sc.data.values().minCoeff(), 2.001);
}

TEST(SampleScenario, HeteroskedasticSettings) {
  likelihood::Hetero h{likelihood::Base::normal, 0.1, 2.0, likelihood::MeanLink::equal_to_var};
  const auto sc = sample_scenario(base_config(5000, 10, prior::Point{0.0}, h), 0);
  EXPECT_GE(sc.truth.minCoeff(), 0.1);
  EXPECT_LE(sc.truth.maxCoeff(), 2.0);
  // The unit mean has variance sbar2_i, i.e. replicates have variance sbar2_i * B.
  double ratio = 0.0;
  for (std::size_t i = 0; i < sc.data.n(); ++i) {
    const auto row = sc.data.row(i);
    double m = 0.0, ss = 0.0;
    for (double z : row) m += z / 10.0;
    for (double z : row) ss += (z - m) * (z - m) / 9.0;
    ratio += ss / (sc.truth[static_cast<Eigen::Index>(i)] * 10.0) / 5000.0;
  }
  EXPECT_NEAR(ratio, 1.0, 0.03);

  likelihood::Hetero ind{likelihood::Base::rectangular, 0.5, 0.5, likelihood::MeanLink::independent};
  const auto sc2 = sample_scenario(base_config(2000, 4, prior::Normal{0.0, 0.5}, ind), 0);
  const double half_width = std::sqrt(3.0 * 0.5 * 4.0);
  EXPECT_LE((sc2.data.values().colwise() - sc2.truth).cwiseAbs().maxCoeff(), half_width);
}

TEST(SampleScenario, StreamsDependOnlyOnSeedRepUnit) {
  auto c = base_config(30, 4, prior::Normal{0.0, 1.0}, likelihood::Laplace{1.0});
  const auto a = sample_scenario(c, 2);
  c.n = 60;
  const auto b = sample_scenario(c, 2);
  EXPECT_EQ(a.data.values(), b.data.values().topRows(30));
  EXPECT_NE(sample_scenario(c, 3).data.values(), b.data.values());
}

TEST(SampleScenario, InvalidConfigs) {
  auto bad_pareto = base_config(100, 4, prior::Normal{0.0, 1.0}, likelihood::Pareto{3.0});
  EXPECT_THROW(sample_scenario(bad_pareto, 0), Error);
  auto alpha = base_config(100, 4, prior::Point{1.0}, likelihood::Pareto{1.0});
  EXPECT_THROW(sample_scenario(alpha, 0), Error);
  auto var = base_config(100, 4, prior::Point{1.0}, likelihood::Normal{0.0});
  EXPECT_THROW(sample_scenario(var, 0), Error);
  auto methods = base_config(100, 4, prior::Point{1.0}, likelihood::Normal{1.0});
  methods.methods = {"foo"};
  try {
    sample_scenario(methods, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidConfig);
  }
}

TEST(Mse, Examples) {
  const Vector t = Vector::Zero(4);
  EXPECT_EQ(mse(t, t), 0.0);
  EXPECT_EQ(mse(Vector::Ones(4), t), 1.0);
  EXPECT_THROW(mse(Vector::Ones(3), t), Error);
}

TEST(RunScenario, MeanEstimatorMatchesAnalyticRisk) {
  auto c = base_config(1000, 10, prior::Normal{0.5, 4.0}, likelihood::Normal{4.0});
  c.reps = 100;
  c.methods = {"mean"};
  const auto r = run_scenario(c).at("mean");
  EXPECT_EQ(r.reps, 100u);
  EXPECT_NEAR(r.mse, 0.4, 3.0 * r.se);
  EXPECT_GT(r.se, 0.0);
}

TEST(RunScenario, OracleBayesMatchesClosedFormRisk) {
  auto c = base_config(2000, 10, prior::Normal{0.5, 4.0}, likelihood::Normal{4.0});
  c.reps = 50;
  c.methods = {kOracleMethod, "auroral", "js"};
  const auto r = run_scenario(c);
  const double bayes = nn_oracle_risks({4.0, 4.0, 0.5, 10}).bayes_K;
  EXPECT_NEAR(r.at(kOracleMethod).mse, bayes, 3.0 * r.at(kOracleMethod).se);
  // Nothing beats the Bayes rule beyond Monte Carlo error.
  EXPECT_GT(r.at("auroral").mse, r.at(kOracleMethod).mse - 2.0 * r.at("auroral").se);
  EXPECT_GT(r.at("js").mse, r.at(kOracleMethod).mse - 2.0 * r.at("js").se);
}

TEST(RunScenario, AuroralRegretShrinksWithN) {
  auto small = base_config(500, 10, prior::Normal{0.5, 4.0}, likelihood::Normal{4.0});
  small.reps = 20;
  small.methods = {"auroral"};
  auto large = small;
  large.n = 10000;
  const double bayes = nn_oracle_risks({4.0, 4.0, 0.5, 10}).bayes_K;
  const double regret_small = run_scenario(small).at("auroral").mse - bayes;
  const double regret_large = run_scenario(large).at("auroral").mse - bayes;
  EXPECT_GT(regret_small, 0.0);
  EXPECT_LT(regret_large, regret_small);
}

TEST(RunScenario, DeterministicAcrossRunsAndThreadCounts) {
  auto c = base_config(300, 5, prior::ThreePoint{4.0}, likelihood::Normal{1.0});
  c.reps = 6;
  c.methods = {"auroral", "aurora-knn", "median", kOracleMethod};
  c.options.k_max = 50;
  const auto a = run_scenario(c);
  const auto b = run_scenario(c);
  c.options.threads = 3;
  const auto t = run_scenario(c);
  for (std::size_t k = 0; k < a.methods.size(); ++k) {
    EXPECT_EQ(a.methods[k].per_rep, b.methods[k].per_rep);
    EXPECT_EQ(a.methods[k].per_rep, t.methods[k].per_rep);
    EXPECT_EQ(a.methods[k].se, t.methods[k].se);
  }
}

TEST(RunScenario, SingleRepHasZeroSe) {
  auto c = base_config(100, 4, prior::Normal{0.0, 1.0}, likelihood::Normal{1.0});
  c.methods = {"mean"};
  EXPECT_EQ(run_scenario(c).at("mean").se, 0.0);
}

TEST(RunScenario, ErrorsNameMethodAndRep) {
  auto c = base_config(100, 4, prior::Uniform{-1.0, 1.0}, likelihood::Normal{1.0});
  c.methods = {"pareto-mle"};
  try {
    run_scenario(c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonPositiveData);
    EXPECT_NE(std::string(e.what()).find("pareto-mle"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("rep 0"), std::string::npos);
  }
  c.methods = {kOracleMethod};
  EXPECT_THROW(run_scenario(c), Error);
}
