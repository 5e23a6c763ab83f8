#include <gtest/gtest.h>

#include "branchimm/numerics.hpp"
#include "branchimm/rng.hpp"
#include "branchimm/scaling_limits.hpp"

using namespace branchimm;

TEST(Scaling, OuParametersForReferenceRates) {
  const auto ou = ou_params({1, 2, 1, 1});
  EXPECT_DOUBLE_EQ(ou.z_star, 1.0);
  EXPECT_DOUBLE_EQ(ou.q, -1.0);
  EXPECT_DOUBLE_EQ(ou.a, 4.0);
  EXPECT_DOUBLE_EQ(ou.stationary_variance(), 2.0);
  EXPECT_THROW(ou_params({2, 1, 1, 1}), std::domain_error);
}

TEST(Scaling, FluctuationMomentsAtZero) {
  const auto fm = fluctuation_moments({1, 2, 1, 1}, 0.3, 0.8, 0.0);
  EXPECT_DOUBLE_EQ(fm.mean, 0.8);
  EXPECT_DOUBLE_EQ(fm.variance, 0.0);
}

TEST(Scaling, QuadratureMatchesExplicitOuVariance) {
  Rng rng(21);
  for (int i = 0; i < 50; ++i) {
    RateParams p{0.1 + 2 * rng.uniform(), 0.0, 1.0, 1.0};
    p.mu = p.beta + 0.2 + 2 * rng.uniform();
    const double s = 0.1 + 5 * rng.uniform();
    const auto fm = fluctuation_moments(p, 1.0 / (p.mu - p.beta), 0.0, s);
    // Independent expression: mu/(mu-beta)^2 (1 - e^{-2(mu-beta)s}).
    const double d = p.mu - p.beta;
    EXPECT_NEAR(fm.variance, p.mu / (d * d) * (1 - std::exp(-2 * d * s)), 1e-8);
    EXPECT_NEAR(fm.l_s, std::exp(-d * s), 1e-10);
  }
}

TEST(Scaling, VarianceOffEquilibriumSatisfiesLyapunovOde) {
  // v' = 2 q v + G(Z(s)), v(0) = 0, integrated with RK4 as an oracle.
  const RateParams p{0.5, 1.7, 1.0, 1.0};
  const double z0 = 3.0, s = 2.5;
  const DensityFamily fam(p);
  const double v = numerics::rk4_scalar(
      [&](double u, double y) { return 2 * (p.beta - p.mu) * y + fam.diffusion(fluid_solution(p, z0, u)); }, 0.0, 0.0,
      s, 20000);
  EXPECT_NEAR(fluctuation_moments(p, z0, 0.0, s).variance, v, 1e-8);
  EXPECT_GT(fluctuation_moments(p, z0, 1.0, 0.5).mean, fluctuation_moments(p, z0, 1.0, 1.0).mean);
}

TEST(Scaling, FluidSolutionMatchesRk4) {
  const RateParams p{1.0, 2.0, 1.0, 1.0};
  const DensityFamily fam(p);
  for (double t : {0.5, 2.0, 7.0, 20.0}) {
    const double y = numerics::rk4_scalar([&](double, double z) { return fam.drift(z); }, 0.0, 4.0, t, 20000);
    EXPECT_NEAR(fluid_solution(p, 4.0, t), y, 1e-8);
  }
}

TEST(Scaling, VerifyClt) {
  const auto rep = verify_clt({1, 2, 1, 1}, 200.0, 2000, 3.0, 5);
  EXPECT_EQ(rep.n0, 200u);
  EXPECT_EQ(rep.zeta.size(), 2000u);
  EXPECT_NEAR(rep.target.variance, ou_variance({1, 2, 1, 1}, 3.0), 1e-8);
  EXPECT_TRUE(rep.variance_ok(4.0));
  EXPECT_TRUE(rep.mean_ok(4.0));
}
