#include <gtest/gtest.h>

#include <cmath>

#include "branchimm/numerics.hpp"

using namespace branchimm::numerics;

TEST(Numerics, ExpmOfDiagonalAndNilpotent) {
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(2, 2);
  d(0, 0) = -3.0;
  d(1, 1) = 0.7;
  const auto e = expm(d);
  EXPECT_NEAR(e(0, 0), std::exp(-3.0), 1e-15);
  EXPECT_NEAR(e(1, 1), std::exp(0.7), 1e-14);
  Eigen::MatrixXd n = Eigen::MatrixXd::Zero(2, 2);
  n(0, 1) = 5.0;
  const auto en = expm(n);
  EXPECT_NEAR(en(0, 1), 5.0, 1e-14);
  EXPECT_NEAR(en(0, 0), 1.0, 1e-15);
}

TEST(Numerics, ExpmOfRotationGenerator) {
  Eigen::MatrixXd r(2, 2);
  const double w = 40.0;  // large norm exercises the squaring phase
  r << 0, -w, w, 0;
  const auto e = expm(r);
  EXPECT_NEAR(e(0, 0), std::cos(w), 1e-10);
  EXPECT_NEAR(e(1, 0), std::sin(w), 1e-10);
}

TEST(Numerics, TwoStateGeneratorTransitionProbability) {
  // Two-state chain with rates a = 1 (0 -> 1) and b = 2 (1 -> 0):
  // P_00(t) = b/(a+b) + a/(a+b) e^{-(a+b) t}.
  Eigen::MatrixXd q(2, 2);
  q << -1, 1, 2, -2;
  const double t = 0.4;
  const auto p = expm(q * t);
  EXPECT_NEAR(p(0, 0), 2.0 / 3.0 + std::exp(-3.0 * t) / 3.0, 1e-13);
  EXPECT_NEAR(p.row(1).sum(), 1.0, 1e-13);
}

TEST(Numerics, AffineFlowMatchesScalarSolution) {
  Eigen::MatrixXd m(1, 1);
  m << -0.5;
  Eigen::VectorXd b(1), x0(1);
  b << 2.0;
  x0 << 1.0;
  const double t = 3.0;
  const double exact = 4.0 + (1.0 - 4.0) * std::exp(-0.5 * t);
  EXPECT_NEAR(affine_flow(m, b, x0, t)(0), exact, 1e-13);
}

TEST(Numerics, Rk4ConvergesAtFourthOrder) {
  auto f = [](double, double y) { return -y; };
  const double e1 = std::abs(rk4_scalar(f, 0.0, 1.0, 2.0, 20) - std::exp(-2.0));
  const double e2 = std::abs(rk4_scalar(f, 0.0, 1.0, 2.0, 40) - std::exp(-2.0));
  EXPECT_NEAR(e1 / e2, 16.0, 1.0);
  Eigen::VectorXd y0(2);
  y0 << 1.0, 0.0;
  auto g = [](double, const Eigen::VectorXd& y) {
    Eigen::VectorXd d(2);
    d << -y(1), y(0);
    return d;
  };
  const auto y = rk4(g, 0.0, y0, 1.0, 1000);
  EXPECT_NEAR(y(0), std::cos(1.0), 1e-12);
}

TEST(Numerics, SimpsonExactForCubics) {
  auto f = [](double x) { return 3 * x * x * x - x + 2; };
  EXPECT_NEAR(simpson(f, -1.0, 2.0, 2), 3.0 * (16.0 - 1.0) / 4.0 - 1.5 + 6.0, 1e-13);
  EXPECT_NEAR(simpson([](double x) { return std::exp(x); }, 0.0, 1.0, 1000), std::exp(1.0) - 1.0, 1e-13);
}
