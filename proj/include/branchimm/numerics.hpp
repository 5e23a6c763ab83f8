#pragma once

// Small dense numerical kernels: fixed-step RK4, Simpson quadrature and a
// scaling-and-squaring matrix exponential.

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>

#include <Eigen/Dense>

namespace branchimm::numerics {

/// Classical RK4 on y' = f(t, y) from t0 to t1 in `steps` equal steps.
template <class Vec, class F>
Vec rk4(F&& f, double t0, const Vec& y0, double t1, std::size_t steps) {
  Vec y = y0;
  if (steps == 0 || t1 == t0) return y;
  const double h = (t1 - t0) / static_cast<double>(steps);
  double t = t0;
  for (std::size_t i = 0; i < steps; ++i) {
    const Vec k1 = f(t, y);
    const Vec k2 = f(t + 0.5 * h, Vec(y + 0.5 * h * k1));
    const Vec k3 = f(t + 0.5 * h, Vec(y + 0.5 * h * k2));
    const Vec k4 = f(t + h, Vec(y + h * k3));
    y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    t = t0 + h * static_cast<double>(i + 1);
  }
  return y;
}

/// Scalar RK4 convenience overload.
template <class F>
double rk4_scalar(F&& f, double t0, double y0, double t1, std::size_t steps) {
  double y = y0;
  if (steps == 0 || t1 == t0) return y;
  const double h = (t1 - t0) / static_cast<double>(steps);
  for (std::size_t i = 0; i < steps; ++i) {
    const double t = t0 + h * static_cast<double>(i);
    const double k1 = f(t, y);
    const double k2 = f(t + 0.5 * h, y + 0.5 * h * k1);
    const double k3 = f(t + 0.5 * h, y + 0.5 * h * k2);
    const double k4 = f(t + h, y + h * k3);
    y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return y;
}

/// Composite Simpson rule with `panels` (rounded up to even) sub-intervals.
template <class F>
double simpson(F&& f, double a, double b, std::size_t panels) {
  if (panels < 2) panels = 2;
  if (panels % 2) ++panels;
  const double h = (b - a) / static_cast<double>(panels);
  double s = f(a) + f(b);
  for (std::size_t i = 1; i < panels; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + h * static_cast<double>(i));
  return s * h / 3.0;
}

/// exp(M) by scaling and squaring of a truncated Taylor series; terms are
/// added until their norm drops below tol relative to the partial sum.
inline Eigen::MatrixXd expm(const Eigen::MatrixXd& m, double tol = 1e-12) {
  if (m.rows() != m.cols()) throw std::invalid_argument("expm: matrix must be square");
  const double norm = m.cwiseAbs().rowwise().sum().maxCoeff();
  int squarings = 0;
  if (norm > 0.5) squarings = static_cast<int>(std::ceil(std::log2(norm / 0.5)));
  const Eigen::MatrixXd a = m / std::ldexp(1.0, squarings);
  Eigen::MatrixXd result = Eigen::MatrixXd::Identity(m.rows(), m.cols());
  Eigen::MatrixXd term = result;
  for (int j = 1; j < 64; ++j) {
    term = term * a / static_cast<double>(j);
    result += term;
    if (term.cwiseAbs().maxCoeff() <= tol * 1e-4 * std::max(1.0, result.cwiseAbs().maxCoeff())) break;
  }
  for (int i = 0; i < squarings; ++i) result = result * result;
  return result;
}

/// Solution of x' = M x + b at time t from x0, via the augmented matrix
/// [[M, b], [0, 0]].
inline Eigen::VectorXd affine_flow(const Eigen::MatrixXd& m, const Eigen::VectorXd& b,
                                   const Eigen::VectorXd& x0, double t, double tol = 1e-12) {
  const Eigen::Index n = m.rows();
  Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(n + 1, n + 1);
  aug.topLeftCorner(n, n) = m * t;
  aug.topRightCorner(n, 1) = b * t;
  const Eigen::MatrixXd e = expm(aug, tol);
  Eigen::VectorXd y(n + 1);
  y.head(n) = x0;
  y(n) = 1.0;
  return (e * y).head(n);
}

}  // namespace branchimm::numerics
