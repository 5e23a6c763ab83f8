#include <gtest/gtest.h>

#include <numbers>

#include "branchimm/analytic_gw.hpp"
#include "branchimm/ctmc.hpp"
#include "branchimm/rng.hpp"
#include "branchimm/spatial.hpp"
#include "branchimm/stats.hpp"

using namespace branchimm;

namespace {
FirstMomentSystem homogeneous(std::size_t n, const RateParams& p, double jump) {
  return FirstMomentSystem::from(std::vector<RateParams>{p}, FiniteSet::complete(n, jump));
}
}  // namespace

TEST(FirstMoment, SingleSiteReducesToScalarClosedForm) {
  const RateParams p{1.0, 2.0, 3.0, 1.0};
  FiniteSet one;
  one.rates = {{0.0}};
  const auto sys = FirstMomentSystem::from(std::vector<RateParams>{p}, one);
  const std::vector<double> grid{0.5, 1.0, 5.0, 20.0};
  const auto sol = solve_first_moment(sys, Eigen::VectorXd::Constant(1, 1.0), grid);
  for (std::size_t g = 0; g < grid.size(); ++g)
    EXPECT_NEAR(sol.total.values[g], moments_closed_form(p, grid[g]).m[0], 1e-8);
}

TEST(FirstMoment, HomogeneousSteadyTotal) {
  const auto sys = homogeneous(3, {1, 2, 1, 1}, 0.5);
  const std::vector<double> grid{60.0};
  const auto sol = solve_first_moment(sys, Eigen::VectorXd::Ones(3), grid);
  ASSERT_TRUE(sol.steady_state.has_value());
  EXPECT_NEAR(sol.steady_state->sum(), 3.0, 1e-12);
  EXPECT_NEAR(sol.total.values[0], 3.0, 1e-8);
  EXPECT_LT(sol.rk4_gap, 1e-8);
}

TEST(FirstMoment, HeterogeneousSteadyStateByLinearSolve) {
  FiniteSet fs;
  fs.rates = {{0, 1.0, 0.2}, {0.5, 0, 0.7}, {0.3, 0.9, 0}};
  const std::vector<RateParams> per{{1.0, 2.0, 1.0, 1.0}, {0.5, 2.5, 0.2, 1.0}, {1.5, 1.7, 2.0, 1.0}};
  const auto sys = FirstMomentSystem::from(per, fs);
  // Oracle: in-flow form m' = A^T m + V m + k, hand-assembled.
  Eigen::MatrixXd a(3, 3);
  a << -1.2, 1.0, 0.2, 0.5, -1.2, 0.7, 0.3, 0.9, -1.2;
  Eigen::MatrixXd m = a.transpose();
  m.diagonal() += Eigen::Vector3d(-1.0, -2.0, -0.2);
  const Eigen::VectorXd steady = -m.partialPivLu().solve(Eigen::Vector3d(1.0, 0.2, 2.0));
  const std::vector<double> grid{60.0};
  const auto sol = solve_first_moment(sys, Eigen::VectorXd::Zero(3), grid);
  ASSERT_TRUE(sol.steady_state);
  for (int x = 0; x < 3; ++x) {
    EXPECT_NEAR((*sol.steady_state)(x), steady(x), 1e-12);
    EXPECT_NEAR(sol.per_site[static_cast<std::size_t>(x)].values[0], steady(x), 1e-8);
  }
}

TEST(FirstMoment, UnstableHasNoSteadyState) {
  const auto sys = homogeneous(2, {2, 1, 1, 1}, 1.0);
  const std::vector<double> grid{1.0};
  const auto sol = solve_first_moment(sys, Eigen::VectorXd::Ones(2), grid);
  EXPECT_FALSE(sol.stable);
  EXPECT_FALSE(sol.steady_state.has_value());
}

TEST(FirstMoment, MatchesSimulation) {
  const std::vector<RateParams> per{{1.0, 2.0, 1.0, 1.0}, {0.5, 1.0, 0.0, 1.0}};
  FiniteSet fs;
  fs.rates = {{0, 2.0}, {2.0, 0}};
  const auto sys = FirstMomentSystem::from(per, fs);
  const std::vector<double> grid{1.5};
  Eigen::VectorXd m0(2);
  m0 << 5, 0;
  const auto sol = solve_first_moment(sys, m0, grid);
  auto xs = run_replicas(20000, 31, 1, [&](std::uint64_t s, std::size_t) {
    return static_cast<double>(
        simulate_finite_space(per, fs, InitialCondition::fixed({5, 0}), 1.5, grid, s).samples[0].counts[1]);
  });
  const auto st = stats::summarize(xs);
  EXPECT_TRUE(stats::within_se(st.mean, sol.per_site[1].values[0], st.se_mean, 4.0));
}

TEST(Lyapunov, ThresholdAndInconclusive) {
  const auto ok = lyapunov_check(homogeneous(3, {1, 2, 1, 1}, 0.5));
  EXPECT_EQ(ok.verdict, DriftVerdict::Ergodic);
  EXPECT_DOUBLE_EQ(ok.threshold, 3.0);
  const std::vector<RateParams> per{{1, 2, 1, 1}, {2, 2, 1, 1}};
  EXPECT_EQ(lyapunov_check(FirstMomentSystem::from(per, FiniteSet::complete(2, 1.0))).verdict,
            DriftVerdict::Inconclusive);
}

TEST(Fourier, KernelSymbol) {
  const Torus t{8, 2, LatticeKernel::nearest_neighbor(2)};
  const auto th = torus_frequencies(t);
  const auto a = kernel_symbol(t.kernel, th);
  EXPECT_DOUBLE_EQ(a[0], 1.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_NEAR(a[i], 0.5 * (std::cos(th[i][0]) + std::cos(th[i][1])), 1e-15);
    EXPECT_LE(std::abs(a[i]), 1.0 + 1e-15);
  }
}

TEST(Fourier, DftRoundTrip) {
  const Torus t{6, 2, LatticeKernel::nearest_neighbor(2)};
  Rng rng(3);
  // A real, even spectrum gives a real lag function and transforms back.
  std::vector<double> spec(t.sites());
  for (std::size_t i = 0; i < spec.size(); ++i) {
    auto c = t.coords(i);
    for (auto& v : c) v = -v;
    const auto j = t.index(c);
    if (j < i) spec[i] = spec[j];
    else spec[i] = rng.uniform();
  }
  const auto lag = inverse_dft(t, spec);
  double imag = 1.0;
  const auto back = forward_dft(lag, &imag);
  EXPECT_LT(imag, 1e-12);
  for (std::size_t i = 0; i < spec.size(); ++i) EXPECT_NEAR(back[i], spec[i], 1e-12);
}

TEST(Fourier, SpectrumAtZeroPerConvention) {
  const RateParams p{1, 2, 1, 1};
  const auto k = LatticeKernel::nearest_neighbor(1);
  EXPECT_NEAR(limiting_covariance(p, k, 64, CovarianceConvention::Theorem).spectrum.values[0], 2.0, 1e-14);
  EXPECT_NEAR(limiting_covariance(p, k, 64, CovarianceConvention::Elliptic).spectrum.values[0], 4.0, 1e-14);
  EXPECT_NEAR(limiting_covariance(p, k, 64, CovarianceConvention::Corrected).spectrum.values[0], 2.0, 1e-14);
  for (auto c : {CovarianceConvention::Theorem, CovarianceConvention::Elliptic, CovarianceConvention::Corrected}) {
    const auto cov = limiting_covariance(p, k, 64, c);
    EXPECT_LT(elliptic_residual(cov), 1e-10);
    // With c1 = c2 the theorem constants vanish at a^ = -1 (theta = pi).
    for (double v : cov.spectrum.values) {
      if (c == CovarianceConvention::Theorem)
        EXPECT_GE(v, -1e-15);
      else
        EXPECT_GT(v, 0.0);
    }
    EXPECT_EQ(convention_from_string(to_string(c)), c);
  }
}

TEST(Fourier, CorrectedLagMatchesInfiniteLatticeFormula) {
  // (c1 + c2 cos) / (2 - cos) = -c2 + (c1 + 2 c2) / (2 - cos), and
  // 1/(2 - cos theta) has coefficients rho^|u| / sqrt 3, rho = 2 - sqrt 3.
  const RateParams p{1, 2, 1, 1};
  const auto cov = limiting_covariance(p, LatticeKernel::nearest_neighbor(1), 64, CovarianceConvention::Corrected);
  const double rho = 2.0 - std::sqrt(3.0), c1 = 3.0, c2 = -1.0;
  for (int u = 0; u <= 20; ++u) {
    const double expected = (u == 0 ? -c2 : 0.0) + (c1 + 2 * c2) / std::sqrt(3.0) * std::pow(rho, u);
    EXPECT_NEAR(cov.lag.at(u), expected, 1e-12) << "u=" << u;
  }
  const auto d = covariance_decay(cov.lag, 1, 16);
  EXPECT_GT(d.fit.r2, 0.99);
  EXPECT_NEAR(d.rate, rho, 1e-9);
}

TEST(Fourier, SecondMomentSplit) {
  const auto s = m2_split({1, 2, 3, 1}, LatticeKernel::nearest_neighbor(1), 32);
  EXPECT_DOUBLE_EQ(s.m21, 9.0);
  for (std::size_t i = 0; i < s.m2.values.size(); ++i) EXPECT_DOUBLE_EQ(s.m2.values[i], 9.0 + s.m22.values[i]);
}

TEST(Fourier, LagCovarianceByHand) {
  const Torus t{4, 1, LatticeKernel::nearest_neighbor(1)};
  const std::vector<std::uint64_t> counts{1, 3, 1, 3};
  EXPECT_DOUBLE_EQ(lag_covariance(t, counts, 2.0, {0}), 1.0);
  EXPECT_DOUBLE_EQ(lag_covariance(t, counts, 2.0, {1}), -1.0);
  EXPECT_DOUBLE_EQ(lag_covariance(t, counts, 2.0, {2}), 1.0);
}

TEST(Fourier, Preconditions) {
  const auto k = LatticeKernel::nearest_neighbor(1);
  EXPECT_THROW(limiting_covariance({2, 1, 1, 1}, k, 16), std::domain_error);
  EXPECT_THROW(limiting_covariance({1, 2, 1, 0.5}, k, 16), std::domain_error);
  EXPECT_THROW(convention_from_string("bogus"), ConfigError);
}
