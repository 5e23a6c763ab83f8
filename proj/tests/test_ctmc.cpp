#include <gtest/gtest.h>

#include <boost/math/distributions/binomial.hpp>
#include <boost/math/distributions/poisson.hpp>

#include "branchimm/ctmc.hpp"
#include "branchimm/stats.hpp"

using namespace branchimm;

namespace {

// Binned chi-square of integer samples against a pmf, pooling the upper tail.
double chi_square_p(const std::vector<std::uint64_t>& xs, const std::function<double(std::uint64_t)>& pmf,
                    std::uint64_t top) {
  std::vector<double> obs(top + 1, 0.0), exp(top + 1, 0.0);
  for (auto x : xs) obs[std::min(x, top)] += 1.0;
  double acc = 0.0;
  for (std::uint64_t n = 0; n < top; ++n) {
    exp[n] = pmf(n) * static_cast<double>(xs.size());
    acc += pmf(n);
  }
  exp[top] = (1.0 - acc) * static_cast<double>(xs.size());
  return stats::chi_square_gof(obs, exp).p_value;
}

}  // namespace

TEST(Ctmc, SameSeedSameTrajectory) {
  const RateParams p{1.0, 2.0, 3.0, 1.0};
  const std::vector<double> grid{1, 2, 5};
  EXPECT_EQ(simulate_single_site(p, 1, 5.0, grid, 99), simulate_single_site(p, 1, 5.0, grid, 99));
  EXPECT_NE(simulate_single_site(p, 1, 5.0, grid, 99).events, simulate_single_site(p, 1, 5.0, grid, 100).events);
}

TEST(Ctmc, ReplicaResultsIndependentOfJobs) {
  const RateParams p{1.0, 2.0, 1.0, 1.0};
  const Torus torus{8, 1, LatticeKernel::nearest_neighbor(1)};
  const std::vector<double> grid{2.0};
  auto fn = [&](std::uint64_t s, std::size_t) { return simulate_torus(p, torus, InitialCondition::poisson(1.0), 2.0, grid, s); };
  EXPECT_EQ(run_replicas(50, 7, 1, fn), run_replicas(50, 7, 4, fn));
}

TEST(Ctmc, RunReplicasRethrowsLowestIndexError) {
  auto fn = [](std::uint64_t, std::size_t i) -> int {
    if (i == 3 || i == 17) throw std::runtime_error("fail " + std::to_string(i));
    return 0;
  };
  try {
    run_replicas(40, 1, 4, fn);
    FAIL() << "expected exception";
  } catch (const std::runtime_error& e) {
    EXPECT_STREQ(e.what(), "fail 3");
  }
}

TEST(Ctmc, ImmigrationDeathIsPoisson) {
  // beta = 0: the M/M/infinity queue. From 0, n(t) ~ Poisson(k/mu (1 - e^{-mu t})).
  const RateParams p{0.0, 1.5, 4.0, 1.0};
  const double t = 1.2;
  const std::vector<double> grid{t};
  auto xs = run_replicas(20000, 11, 1, [&](std::uint64_t s, std::size_t) {
    return simulate_single_site(p, 0, t, grid, s).samples[0].counts[0];
  });
  const boost::math::poisson_distribution<> law(p.k / p.mu * (1.0 - std::exp(-p.mu * t)));
  EXPECT_GT(chi_square_p(xs, [&](std::uint64_t n) { return boost::math::pdf(law, static_cast<double>(n)); }, 9), 1e-3);
}

TEST(Ctmc, PureDeathIsBinomial) {
  const RateParams p{0.0, 0.7, 0.0, 1.0};
  const double t = 1.0;
  const std::vector<double> grid{t};
  auto xs = run_replicas(20000, 12, 1, [&](std::uint64_t s, std::size_t) {
    return simulate_single_site(p, 10, t, grid, s).samples[0].counts[0];
  });
  const boost::math::binomial_distribution<> law(10, std::exp(-p.mu * t));
  EXPECT_GT(chi_square_p(xs, [&](std::uint64_t n) { return boost::math::pdf(law, static_cast<double>(n)); }, 8), 1e-3);
}

TEST(Ctmc, PureBirthYuleMean) {
  // Yule process from 1: E n(t) = e^{beta t}.
  const RateParams p{1.0, 0.0, 0.0, 1.0};
  const std::vector<double> grid{1.5};
  auto xs = run_replicas(20000, 13, 1, [&](std::uint64_t s, std::size_t) {
    return static_cast<double>(simulate_single_site(p, 1, 1.5, grid, s).samples[0].counts[0]);
  });
  const auto s = stats::summarize(xs);
  EXPECT_TRUE(stats::within_se(s.mean, std::exp(1.5), s.se_mean, 4.0));
}

TEST(Ctmc, GridSamplesAndAbsorbingZero) {
  const RateParams p{0.0, 1.0, 0.0, 1.0};
  const std::vector<double> grid{0.0, 10.0, 50.0};
  const auto r = simulate_single_site(p, 0, 50.0, grid, 3);
  ASSERT_EQ(r.samples.size(), 3u);
  for (const auto& s : r.samples) EXPECT_EQ(s.counts[0], 0u);
  EXPECT_EQ(r.events, 0u);
  EXPECT_THROW(simulate_single_site(p, 0, 5.0, std::vector<double>{6.0}, 3), std::invalid_argument);
  EXPECT_THROW(simulate_single_site(p, 0, 5.0, std::vector<double>{2.0, 1.0}, 3), std::invalid_argument);
}

TEST(Ctmc, MigrationConservesMassWithoutBirthDeath) {
  const RateParams p{0.0, 0.0, 0.0, 1.0};
  const Torus torus{6, 2, LatticeKernel::nearest_neighbor(2)};
  std::size_t jumps = 0;
  const std::vector<double> grid{0.5, 1.0, 3.0};
  const auto r = simulate_torus(p, torus, InitialCondition::fixed(2), 3.0, grid, 5, [&](const EventRecord& e) {
    EXPECT_EQ(e.kind, EventKind::Jump);
    ASSERT_TRUE(e.target.has_value());
    EXPECT_NE(*e.target, e.site);
    ++jumps;
  });
  for (const auto& s : r.samples) EXPECT_EQ(s.total(), 72u);
  EXPECT_EQ(jumps, r.events);
  EXPECT_GT(jumps, 0u);
}

TEST(Ctmc, EventLogFormat) {
  EXPECT_EQ(format_event({0.5, 3, EventKind::Birth, std::nullopt}), "0.5\t3\tB\t-");
  EXPECT_EQ(format_event({1.25, 0, EventKind::Jump, 7}), "1.25\t0\tJ\t7");
}

TEST(Ctmc, EventRateTable) {
  SiteDynamics d = SiteDynamics::finite(std::vector<RateParams>{{1.0, 2.0, 0.5, 1.0}}, FiniteSet::complete(2, 0.25));
  const std::vector<std::uint64_t> counts{3, 0};
  const auto t = event_rate_table(d, counts, 0.0);
  EXPECT_DOUBLE_EQ(t.sites[0].birth, 3.5);
  EXPECT_DOUBLE_EQ(t.sites[0].death, 6.0);
  EXPECT_DOUBLE_EQ(t.sites[0].jump, 0.75);
  EXPECT_DOUBLE_EQ(t.sites[1].total(), 0.5);
  EXPECT_DOUBLE_EQ(t.total, 3.5 + 6.0 + 0.75 + 0.5);
}

TEST(Ctmc, OccupationMeasureIsDistribution) {
  const auto occ = occupation_measure({1.0, 2.0, 1.0, 1.0}, 0, 20000, 4);
  double s = 0.0;
  for (double v : occ) s += v;
  EXPECT_NEAR(s, 1.0, 1e-12);
}

TEST(Ctmc, InitialConditionDraw) {
  Rng rng(1);
  EXPECT_EQ(InitialCondition::fixed(4).draw(3, rng), (std::vector<std::uint64_t>{4, 4, 4}));
  EXPECT_EQ(InitialCondition::fixed({1, 2}).draw(2, rng), (std::vector<std::uint64_t>{1, 2}));
  EXPECT_THROW(InitialCondition::fixed({1, 2}).draw(3, rng), std::invalid_argument);
  stats::RunningStats s;
  for (auto c : InitialCondition::poisson(2.5).draw(20000, rng)) s.add(static_cast<double>(c));
  EXPECT_TRUE(stats::within_se(s.mean(), 2.5, s.sem(), 4.0));
}

TEST(Ctmc, MarkovEnvironmentStatesRecorded) {
  const auto env = MarkovChainEnv::two_state(1, 1, 2, 3, 1, 2, 1, 1);
  const std::vector<double> grid{1, 2, 3};
  const auto r = simulate_env(EnvironmentSpec{env}, InitialCondition::fixed(0), 3.0, grid, 8);
  ASSERT_EQ(r.env_states.size(), 3u);
  for (auto s : r.env_states) EXPECT_LT(s, 2u);
}

TEST(Ctmc, LevelEnvironmentIsPureFunctionOfSeedAndLevel) {
  ByPopulationLevel e{RateLaw::uniform(1, 2), RateLaw::uniform(2, 3), RateLaw::constant(1), 1.0, 3.0, 77};
  LevelEnvironment a(e), b(e);
  EXPECT_EQ(a.at(10).beta, b.at(10).beta);
  EXPECT_EQ(a.at(10).mu, LevelEnvironment::sample(e, 10).mu);
  EXPECT_NE(a.at(10).beta, a.at(11).beta);
}
