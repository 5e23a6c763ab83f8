#include <gtest/gtest.h>

#include <boost/math/distributions/negative_binomial.hpp>

#include "branchimm/analytic_gw.hpp"
#include "branchimm/rng.hpp"

using namespace branchimm;

TEST(ClosedForm, InitialValuesAndLimits) {
  const RateParams p{1.0, 2.0, 3.0, 1.0};
  const auto at0 = moments_closed_form(p, 0.0, 2, 4.0);
  EXPECT_NEAR(at0.m[0], 4.0, 1e-14);
  EXPECT_NEAR(at0.m[1], 16.0, 1e-13);
  const auto inf = moments_closed_form(p, INFINITY);
  EXPECT_DOUBLE_EQ(inf.m[0], 3.0);
  EXPECT_DOUBLE_EQ(inf.variance(), 6.0);  // mu k / (mu - beta)^2
  EXPECT_THROW(moments_closed_form({1, 1, 1, 1}, 1.0), CriticalRegime);
}

TEST(ClosedForm, SatisfiesMomentOdesByFiniteDifference) {
  // dm1/dt = (beta - mu) m1 + k ; dm2/dt = 2(beta - mu) m2 + (beta + mu + 2k) m1 + k.
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    RateParams p{0.2 + rng.uniform(), 0.0, 0.1 + 3 * rng.uniform(), 1.0};
    p.mu = p.beta + 0.1 + 2 * rng.uniform();
    const double n0 = static_cast<double>(rng() % 10), t = 3 * rng.uniform(), h = 1e-5;
    const auto lo = moments_closed_form(p, t - h, 2, n0), mid = moments_closed_form(p, t, 2, n0),
               hi = moments_closed_form(p, t + h, 2, n0);
    const double d1 = (hi.m[0] - lo.m[0]) / (2 * h), d2 = (hi.m[1] - lo.m[1]) / (2 * h);
    EXPECT_NEAR(d1, (p.beta - p.mu) * mid.m[0] + p.k, 1e-6 * (1 + std::abs(d1)));
    EXPECT_NEAR(d2, 2 * (p.beta - p.mu) * mid.m[1] + (p.beta + p.mu + 2 * p.k) * mid.m[0] + p.k,
                1e-5 * (1 + std::abs(d2)));
  }
}

TEST(MomentOde, GeneratorMatrixLowOrders) {
  const RateParams p{1.0, 2.0, 3.0, 1.0};
  const auto sys = moment_generator_matrix(p, 2);
  EXPECT_DOUBLE_EQ(sys.matrix(0, 0), -1.0);
  EXPECT_DOUBLE_EQ(sys.source(0), 3.0);
  EXPECT_DOUBLE_EQ(sys.matrix(1, 1), -2.0);
  EXPECT_DOUBLE_EQ(sys.matrix(1, 0), 1.0 + 2.0 + 2.0 * 3.0);
  EXPECT_DOUBLE_EQ(sys.source(1), 3.0);
}

TEST(MomentOde, AgreesWithClosedForm) {
  const RateParams p{1.0, 2.0, 3.0, 1.0};
  std::vector<double> grid;
  for (int i = 1; i <= 20; ++i) grid.push_back(i);
  const auto ode = moments_ode(p, grid, 4, 1.0);
  EXPECT_TRUE(ode.converged);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const auto cf = moments_closed_form(p, grid[g]);
    EXPECT_NEAR(ode.orders[0].values[g] / cf.m[0], 1.0, 1e-8);
    EXPECT_NEAR(ode.orders[1].values[g] / cf.m[1], 1.0, 1e-8);
  }
}

TEST(MomentOde, ThirdMomentMatchesNegativeBinomialLimit) {
  // The invariant law is negative binomial with r = k/beta, success 1 - beta/mu.
  const RateParams p{1.0, 2.0, 3.0, 1.0};
  const std::vector<double> grid{60.0};
  const auto ode = moments_ode(p, grid, 3, 0.0);
  const double r = p.k / p.beta, q = p.beta / p.mu;
  const double mean = r * q / (1 - q), var = r * q / ((1 - q) * (1 - q));
  const double mu3 = r * q * (1 + q) / std::pow(1 - q, 3);
  EXPECT_NEAR(ode.orders[2].values[0], mu3 + 3 * mean * var + mean * mean * mean, 1e-6);
}

TEST(Invariant, HandValues) {
  const RateParams p{1.0, 2.0, 1.0, 1.0};
  const auto inv = invariant_distribution(p);
  EXPECT_NEAR(inv.at(0), 0.5, 1e-13);
  EXPECT_NEAR(inv.at(1), 0.25, 1e-13);
  EXPECT_NEAR(inv.normalizer, 2.0, 1e-12);
  EXPECT_DOUBLE_EQ(closed_form_normalizer(p), 2.0);
  EXPECT_LT(inv.tail_bound, 1e-13);
}

TEST(Invariant, MatchesNegativeBinomialOnRandomDraws) {
  Rng rng(10);
  for (int trial = 0; trial < 30; ++trial) {
    RateParams p{0.1 + rng.uniform(), 0.0, 0.1 + 5 * rng.uniform(), 1.0};
    p.mu = p.beta * (1.2 + 3 * rng.uniform());
    const auto inv = invariant_distribution(p);
    const boost::math::negative_binomial_distribution<> nb(p.k / p.beta, 1 - p.beta / p.mu);
    for (std::size_t n = 0; n < std::min<std::size_t>(inv.weights.size(), 40); ++n)
      EXPECT_NEAR(inv.weights[n], boost::math::pdf(nb, static_cast<double>(n)), 1e-12);
    EXPECT_NEAR(inv.normalizer / closed_form_normalizer(p), 1.0, 1e-9);
    EXPECT_NEAR(inv.mean(), p.k / (p.mu - p.beta), 1e-9 * (1 + inv.mean()));
  }
}

TEST(Invariant, LargeImmigrationUsesLogSpace) {
  const RateParams p{1.0, 2.0, 2000.0, 1.0};
  const auto inv = invariant_distribution(p);
  EXPECT_TRUE(std::isinf(closed_form_normalizer(p)) || closed_form_normalizer(p) > 1e300);
  EXPECT_NEAR(inv.log_normalizer, log_closed_form_normalizer(p), 1e-9 * log_closed_form_normalizer(p));
  double s = 0.0;
  for (double w : inv.weights) s += w;
  EXPECT_NEAR(s, 1.0, 1e-12);
}

TEST(Invariant, RejectsNonErgodic) {
  EXPECT_THROW(invariant_distribution({2, 1, 1, 1}), NonErgodic);
  EXPECT_THROW(invariant_distribution({1, 1, 0.5, 1}), NonErgodic);
}

TEST(Classify, ReferenceCases) {
  EXPECT_EQ(classify({2, 1, 1, 1}), RecurrenceClass::Transient);
  EXPECT_EQ(classify({1, 1, 0.5, 1}), RecurrenceClass::ZeroRecurrent);
  EXPECT_EQ(classify({1, 1, 1, 1}), RecurrenceClass::ZeroRecurrent);
  EXPECT_EQ(classify({1, 1, 2, 1}), RecurrenceClass::Transient);
  EXPECT_EQ(classify({1, 2, 1, 1}), RecurrenceClass::Ergodic);
  EXPECT_EQ(to_string(RecurrenceClass::Ergodic), "Ergodic");
}

TEST(Classify, SeriesCriteriaAgreeOnRandomDraws) {
  Rng rng(11);
  for (int trial = 0; trial < 60; ++trial) {
    RateParams p{0.1 + 2.9 * rng.uniform(), 0.0, 0.1 + 2.9 * rng.uniform(), 1.0};
    p.mu = trial % 4 == 0 ? p.beta : 0.1 + 2.9 * rng.uniform();
    EXPECT_EQ(series_criteria(p, 2000).verdict, classify(p))
        << "beta=" << p.beta << " mu=" << p.mu << " k=" << p.k;
  }
}

TEST(LocalClt, ErrorShrinksWithK) {
  double prev = INFINITY;
  for (double k : {50.0, 100.0, 200.0, 400.0}) {
    const auto prof = local_clt_profile({1, 2, k, 1}, 20);
    EXPECT_EQ(prof.rows.size(), 41u);
    EXPECT_DOUBLE_EQ(prof.sigma2, 2.0 * k);
    EXPECT_LT(prof.max_abs_error(), prev);
    prev = prof.max_abs_error();
  }
  EXPECT_LT(local_clt_profile({1, 2, 200, 1}, 20).max_abs_error(), 0.05);
}

TEST(LocalClt, Centres) {
  EXPECT_EQ(clt_center({1, 2, 200, 1}, CltCentering::Mode), 199);
  EXPECT_EQ(clt_center({1, 2, 200, 1}, CltCentering::RoundedMean), 200);
}

TEST(Psi2, HandValues) {
  const RateParams p{1.0, 2.0, 1.0, 1.0};
  EXPECT_DOUBLE_EQ(harmonic_psi2(p, 0), 0.0);
  EXPECT_DOUBLE_EQ(harmonic_psi2(p, 1), 1.0);
  EXPECT_NEAR(harmonic_psi2(p, 3), 10.0 / 3.0, 1e-15);
}

TEST(Psi2, IsHarmonicAwayFromZero) {
  // lambda_n (psi(n+1) - psi(n)) + mu_n (psi(n-1) - psi(n)) = 0 for n >= 1.
  const RateParams p{1.3, 0.9, 0.7, 1.0};
  for (std::size_t n = 1; n < 30; ++n) {
    const double nd = static_cast<double>(n);
    const double lam = p.beta * nd + p.k, mu = p.mu * nd;
    const double g = lam * (harmonic_psi2(p, n + 1) - harmonic_psi2(p, n)) +
                     mu * (harmonic_psi2(p, n - 1) - harmonic_psi2(p, n));
    EXPECT_NEAR(g, 0.0, 1e-9 * (1 + lam * harmonic_psi2(p, n + 1)));
  }
}
