#include <gtest/gtest.h>

#include <numeric>
#include <set>

#include "branchimm/rng.hpp"
#include "branchimm/stats.hpp"

using namespace branchimm;

TEST(Rng, DerivedSeedsAreDistinctAndStable) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t i = 0; i < 10000; ++i) seen.insert(derive_seed(42, i));
  EXPECT_EQ(seen.size(), 10000u);
  EXPECT_EQ(derive_seed(42, 3), derive_seed(42, 3));
  EXPECT_NE(derive_seed(42, 3), derive_seed(43, 3));
}

TEST(Rng, UniformIsOpenAndCentred) {
  Rng rng(1);
  stats::RunningStats s;
  for (int i = 0; i < 200000; ++i) {
    const double u = rng.uniform();
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
    s.add(u);
  }
  EXPECT_TRUE(stats::within_se(s.mean(), 0.5, s.sem(), 4.0));
  EXPECT_NEAR(s.variance(), 1.0 / 12.0, 2e-3);
}

TEST(Rng, ExponentialMean) {
  Rng rng(2);
  stats::RunningStats s;
  for (int i = 0; i < 100000; ++i) s.add(rng.exponential(4.0));
  EXPECT_TRUE(stats::within_se(s.mean(), 0.25, s.sem(), 4.0));
}

TEST(Stats, SummaryMatchesHandComputation) {
  const std::vector<double> x{1, 2, 3, 4, 10};
  const auto s = stats::summarize(x);
  EXPECT_DOUBLE_EQ(s.mean, 4.0);
  EXPECT_DOUBLE_EQ(s.variance, 12.5);  // sum (x - 4)^2 = 50, / 4
  EXPECT_DOUBLE_EQ(s.se_mean, std::sqrt(12.5 / 5));
  EXPECT_GT(s.skewness, 0.0);
}

TEST(Stats, VarianceStandardErrorCalibrated) {
  // Over many samples of size 200, the sample variance of N(0,1) should
  // fall within 2 SE of 1 about 95% of the time.
  Rng rng(3);
  int inside = 0;
  for (int rep = 0; rep < 400; ++rep) {
    std::vector<double> x(200);
    for (auto& v : x) v = rng.normal();
    const auto s = stats::summarize(x);
    inside += std::abs(s.variance - 1.0) < 2.0 * s.se_variance;
  }
  EXPECT_GT(inside, 360);
  EXPECT_LT(inside, 395);
}

TEST(Stats, AndersonDarlingAcceptsNormalRejectsExponential) {
  Rng rng(4);
  std::vector<double> normal(2000), expo(2000);
  for (auto& v : normal) v = rng.normal();
  for (auto& v : expo) v = rng.exponential(1.0);
  EXPECT_TRUE(stats::anderson_darling_normal(normal).passes(0.01));
  EXPECT_LT(stats::anderson_darling_normal(expo).p_value, 1e-6);
}

TEST(Stats, AndersonDarlingRejectionRateNearAlpha) {
  Rng rng(5);
  int rejected = 0;
  for (int rep = 0; rep < 1000; ++rep) {
    std::vector<double> x(100);
    for (auto& v : x) v = 3.0 + 2.0 * rng.normal();
    rejected += !stats::anderson_darling_normal(x).passes(0.05);
  }
  EXPECT_GT(rejected, 25);
  EXPECT_LT(rejected, 80);
}

TEST(Stats, LinearFitRecoversLine) {
  std::vector<double> x, y;
  for (int i = 0; i < 10; ++i) {
    x.push_back(i);
    y.push_back(2.5 - 0.75 * i);
  }
  const auto f = stats::linear_fit(x, y);
  EXPECT_NEAR(f.slope, -0.75, 1e-14);
  EXPECT_NEAR(f.intercept, 2.5, 1e-13);
  EXPECT_NEAR(f.r2, 1.0, 1e-14);
}

TEST(Stats, ChiSquareAndTotalVariation) {
  const std::vector<double> p{0.5, 0.5}, q{0.25, 0.5, 0.25};
  EXPECT_DOUBLE_EQ(stats::total_variation(p, q), 0.25);
  EXPECT_DOUBLE_EQ(stats::total_variation(p, p), 0.0);
  const std::vector<double> obs{100, 100, 100}, exp{100, 100, 100};
  const auto c = stats::chi_square_gof(obs, exp);
  EXPECT_DOUBLE_EQ(c.statistic, 0.0);
  EXPECT_NEAR(c.p_value, 1.0, 1e-12);
}

TEST(Stats, ZScoreAndWithinSe) {
  EXPECT_DOUBLE_EQ(stats::z_score(1.3, 1.0, 0.1), 3.0000000000000004);
  EXPECT_TRUE(stats::within_se(1.29, 1.0, 0.1));
  EXPECT_FALSE(stats::within_se(1.31, 1.0, 0.1));
}
