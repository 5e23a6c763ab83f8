#pragma once

// First moments on a finite site set, and the limiting lag covariance of the
// branching random walk with immigration on a torus.

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <fftw3.h>

#include "branchimm/models.hpp"
#include "branchimm/numerics.hpp"
#include "branchimm/stats.hpp"

namespace branchimm {

// --------------------------------------------------------------------------
// Finite space

/// dm/dt = (A^T + V) m + k, where A is the jump generator (A(x,y) = a(x,y)
/// off the diagonal, rows summing to 0) and V = diag(beta - mu).
struct FirstMomentSystem {
  Eigen::MatrixXd a;
  Eigen::VectorXd v;
  Eigen::VectorXd k;
  bool symmetric = false;

  std::size_t size() const { return static_cast<std::size_t>(v.size()); }

  Eigen::MatrixXd drift_matrix() const {
    Eigen::MatrixXd m = a.transpose();
    m.diagonal() += v;
    return m;
  }

  static FirstMomentSystem from(std::span<const RateParams> per_site, const FiniteSet& fs) {
    const std::size_t n = fs.size();
    if (per_site.size() != n && per_site.size() != 1)
      throw std::invalid_argument("first moment system: need one RateParams per site");
    FirstMomentSystem sys;
    const auto ni = static_cast<Eigen::Index>(n);
    sys.a = Eigen::MatrixXd::Zero(ni, ni);
    sys.v.resize(ni);
    sys.k.resize(ni);
    sys.symmetric = fs.require_symmetric;
    for (std::size_t x = 0; x < n; ++x) {
      const RateParams& p = per_site.size() == 1 ? per_site[0] : per_site[x];
      const auto xi = static_cast<Eigen::Index>(x);
      for (std::size_t y = 0; y < n; ++y)
        if (y != x) sys.a(xi, static_cast<Eigen::Index>(y)) = fs.rates[x][y];
      sys.a(xi, xi) = -fs.out_rate(x);
      sys.v(xi) = p.beta - p.mu;
      sys.k(xi) = p.k;
    }
    return sys;
  }

  ValidationReport validate() const {
    ValidationReport r;
    const auto n = v.size();
    if (a.rows() != n || a.cols() != n || k.size() != n) {
      r.issues.push_back("first moment system has inconsistent dimensions");
      return r;
    }
    for (Eigen::Index x = 0; x < n; ++x) {
      if (std::abs(a.row(x).sum()) > 1e-12 * std::max(1.0, a.row(x).cwiseAbs().sum()))
        r.issues.push_back("generator row " + std::to_string(x) + " does not sum to 0");
      for (Eigen::Index y = 0; y < n; ++y)
        if (x != y && a(x, y) < 0.0) r.issues.push_back("negative off-diagonal generator entry");
    }
    if (symmetric && (a - a.transpose()).cwiseAbs().maxCoeff() > 1e-12)
      r.issues.push_back("generator not symmetric");
    return r;
  }
};

struct FirstMomentSolution {
  std::vector<MomentSeries> per_site;
  MomentSeries total;
  double rk4_gap = 0.0;  // max |expm - RK4| over grid and sites
  double spectral_abscissa = 0.0;
  bool stable = false;
  std::optional<Eigen::VectorXd> steady_state;
};

inline FirstMomentSolution solve_first_moment(const FirstMomentSystem& sys, const Eigen::VectorXd& m0,
                                              std::span<const double> t_grid, double rk4_step = 1e-3) {
  if (auto r = sys.validate(); !r.ok()) throw std::invalid_argument("invalid first moment system: " + r.to_string());
  if (m0.size() != sys.v.size()) throw std::invalid_argument("m0 has the wrong size");
  const Eigen::MatrixXd m = sys.drift_matrix();
  const std::size_t n = sys.size();
  FirstMomentSolution sol;
  sol.per_site.resize(n);
  for (std::size_t x = 0; x < n; ++x) {
    sol.per_site[x].label = "m1[" + std::to_string(x) + "]";
    sol.per_site[x].grid.assign(t_grid.begin(), t_grid.end());
    sol.per_site[x].std_error.assign(t_grid.size(), 0.0);
  }
  sol.total.label = "m1_total";
  sol.total.grid.assign(t_grid.begin(), t_grid.end());
  sol.total.std_error.assign(t_grid.size(), 0.0);

  auto rhs = [&](double, const Eigen::VectorXd& y) -> Eigen::VectorXd { return m * y + sys.k; };
  Eigen::VectorXd y_rk = m0;
  double t_prev = 0.0;
  for (double t : t_grid) {
    const Eigen::VectorXd y = numerics::affine_flow(m, sys.k, m0, t);
    const auto steps = static_cast<std::size_t>(std::ceil((t - t_prev) / rk4_step - 1e-9));
    y_rk = numerics::rk4(rhs, t_prev, y_rk, t, steps);
    t_prev = t;
    sol.rk4_gap = std::max(sol.rk4_gap, (y - y_rk).cwiseAbs().maxCoeff());
    for (std::size_t x = 0; x < n; ++x) sol.per_site[x].values.push_back(y(static_cast<Eigen::Index>(x)));
    sol.total.values.push_back(y.sum());
  }

  Eigen::EigenSolver<Eigen::MatrixXd> es(m, false);
  sol.spectral_abscissa = es.eigenvalues().real().maxCoeff();
  sol.stable = sol.spectral_abscissa < 0.0;
  if (sol.stable) sol.steady_state = Eigen::VectorXd(m.partialPivLu().solve(-sys.k));
  return sol;
}

enum class DriftVerdict { Ergodic, Inconclusive };

inline std::string to_string(DriftVerdict v) { return v == DriftVerdict::Ergodic ? "Ergodic" : "Inconclusive"; }

struct LyapunovReport {
  DriftVerdict verdict = DriftVerdict::Inconclusive;
  double delta = 0.0;      // min_x (mu(x) - beta(x))
  double k_max = 0.0;
  double threshold = 0.0;  // drift of f(n) = |n|_1 is negative for |n|_1 > threshold
};

/// Drift of f(n) = sum_x n_x is sum_x ((beta - mu)(x) n_x + k(x)) <= -delta |n|_1 + sum k.
inline LyapunovReport lyapunov_check(const FirstMomentSystem& sys) {
  LyapunovReport r;
  r.delta = (-sys.v).minCoeff();
  r.k_max = sys.k.maxCoeff();
  if (r.delta > 0.0 && std::isfinite(r.k_max)) {
    r.verdict = DriftVerdict::Ergodic;
    r.threshold = sys.k.sum() / r.delta;
  }
  return r;
}

// --------------------------------------------------------------------------
// Lattice Fourier machinery

/// Frequencies 2 pi j / L of the discrete torus, one vector per site index.
inline std::vector<std::vector<double>> torus_frequencies(const Torus& torus) {
  std::vector<std::vector<double>> out(torus.sites());
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto c = torus.coords(i);
    out[i].resize(c.size());
    for (std::size_t d = 0; d < c.size(); ++d) out[i][d] = 2.0 * std::numbers::pi * c[d] / torus.side;
  }
  return out;
}

/// a^(theta) = sum_z a(z) cos(theta . z).
inline std::vector<double> kernel_symbol(const LatticeKernel& kernel, const std::vector<std::vector<double>>& thetas) {
  std::vector<double> out;
  out.reserve(thetas.size());
  for (const auto& th : thetas) {
    if (static_cast<int>(th.size()) != kernel.dim) throw std::invalid_argument("kernel_symbol: dimension mismatch");
    double s = 0.0;
    for (const auto& e : kernel.support) {
      double dot = 0.0;
      for (std::size_t d = 0; d < th.size(); ++d) dot += th[d] * e.offset[d];
      s += e.weight * std::cos(dot);
    }
    out.push_back(s);
  }
  return out;
}

namespace detail {

inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

/// Complex DFT over the torus in row-major order. sign = FFTW_FORWARD
/// computes sum_u f(u) e^{-i theta u}; the backward transform is unscaled.
inline std::vector<std::complex<double>> torus_dft(const Torus& torus, std::vector<std::complex<double>> data,
                                                   int sign) {
  std::vector<int> dims(static_cast<std::size_t>(torus.dim), torus.side);
  auto* buf = reinterpret_cast<fftw_complex*>(data.data());
  fftw_plan plan;
  {
    std::lock_guard lock(fftw_planner_mutex());
    plan = fftw_plan_dft(torus.dim, dims.data(), buf, buf, sign, FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(plan);
  }
  return data;
}

}  // namespace detail

/// Values indexed by torus site index, read as lags.
struct LagFunction {
  Torus torus;
  std::vector<double> values;

  double at(const std::vector<int>& u) const { return values[torus.index(u)]; }
  /// Lag u along the first axis.
  double at(int u) const { return at(axis_lag(u)); }

 private:
  std::vector<int> axis_lag(int u) const {
    std::vector<int> v(static_cast<std::size_t>(torus.dim), 0);
    v[0] = u;
    return v;
  }
};

/// Constants in M^2(theta) = (c1 + c2 a^(theta)) / (c3 + 1 - a^(theta)):
///   Theorem:   c1 = k/(mu-beta),        c2 = k/(mu-beta)
///   Elliptic:  c1 = k(mu+1)/(mu-beta),  c2 = k/(mu-beta)
///   Corrected: c1 = k(mu+1)/(mu-beta),  c2 = -k/(mu-beta)
/// with c3 = mu - beta in every case. Corrected is the stationary solution of
/// the pair-correlation equations of the conservative jump generator.
enum class CovarianceConvention { Theorem, Elliptic, Corrected };

inline std::string to_string(CovarianceConvention c) {
  switch (c) {
    case CovarianceConvention::Theorem:
      return "theorem";
    case CovarianceConvention::Elliptic:
      return "elliptic";
    case CovarianceConvention::Corrected:
      return "corrected";
  }
  return "?";
}

inline CovarianceConvention convention_from_string(const std::string& s) {
  if (s == "theorem") return CovarianceConvention::Theorem;
  if (s == "elliptic") return CovarianceConvention::Elliptic;
  if (s == "corrected") return CovarianceConvention::Corrected;
  throw ConfigError("unknown covariance convention '" + s + "' (theorem, elliptic, corrected)");
}

inline constexpr CovarianceConvention kDefaultConvention = CovarianceConvention::Corrected;

struct CovarianceConstants {
  double c1 = 0.0;
  double c2 = 0.0;
  double c3 = 0.0;
};

inline CovarianceConstants covariance_constants(const RateParams& p, CovarianceConvention conv) {
  const double d = p.mu - p.beta;
  const double c = p.k / d;
  switch (conv) {
    case CovarianceConvention::Theorem:
      return {c, c, d};
    case CovarianceConvention::Elliptic:
      return {c * (p.mu + 1.0), c, d};
    case CovarianceConvention::Corrected:
      return {c * (p.mu + 1.0), -c, d};
  }
  return {};
}

struct CovarianceSpectrum {
  Torus torus;
  CovarianceConvention convention = kDefaultConvention;
  CovarianceConstants constants;
  std::vector<std::vector<double>> thetas;
  std::vector<double> symbol;
  std::vector<double> values;  // M^2(theta)
};

struct LimitingCovariance {
  CovarianceSpectrum spectrum;
  LagFunction lag;  // M~2(u)
};

/// M~2(u) = (1/|T|) sum_theta M^2(theta) e^{-i theta u}.
inline LagFunction inverse_dft(const Torus& torus, std::span<const double> spectrum) {
  std::vector<std::complex<double>> data(spectrum.begin(), spectrum.end());
  data = detail::torus_dft(torus, std::move(data), FFTW_FORWARD);
  LagFunction lag{torus, {}};
  const double scale = 1.0 / static_cast<double>(data.size());
  lag.values.reserve(data.size());
  for (const auto& z : data) lag.values.push_back(z.real() * scale);
  return lag;
}

/// sum_u M~2(u) e^{i theta u}; returns the real part and the largest
/// imaginary part through `max_imag`.
inline std::vector<double> forward_dft(const LagFunction& lag, double* max_imag = nullptr) {
  std::vector<std::complex<double>> data(lag.values.begin(), lag.values.end());
  data = detail::torus_dft(lag.torus, std::move(data), FFTW_BACKWARD);
  std::vector<double> out;
  out.reserve(data.size());
  double mi = 0.0;
  for (const auto& z : data) {
    out.push_back(z.real());
    mi = std::max(mi, std::abs(z.imag()));
  }
  if (max_imag) *max_imag = mi;
  return out;
}

inline LimitingCovariance limiting_covariance(const RateParams& p, const LatticeKernel& kernel, int side,
                                              CovarianceConvention conv = kDefaultConvention) {
  if (!(p.mu > p.beta)) throw std::domain_error("limiting covariance needs mu > beta");
  if (p.kappa != 1.0) throw std::domain_error("limiting covariance is implemented at kappa = 1");
  Torus torus{side, kernel.dim, kernel};
  if (auto r = validate(torus); !r.ok()) throw std::invalid_argument("invalid torus: " + r.to_string());
  LimitingCovariance out;
  auto& sp = out.spectrum;
  sp.torus = torus;
  sp.convention = conv;
  sp.constants = covariance_constants(p, conv);
  sp.thetas = torus_frequencies(torus);
  sp.symbol = kernel_symbol(kernel, sp.thetas);
  sp.values.reserve(sp.symbol.size());
  for (double a : sp.symbol)
    sp.values.push_back((sp.constants.c1 + sp.constants.c2 * a) / (sp.constants.c3 + 1.0 - a));
  out.lag = inverse_dft(torus, sp.values);
  return out;
}

/// Largest |2 (L_a M)(u) - 2 c3 M(u) + 2 c1 delta_0(u) + 2 c2 a(u)| over lags,
/// evaluated directly in lag space.
inline double elliptic_residual(const LimitingCovariance& cov) {
  const auto& torus = cov.lag.torus;
  const auto& c = cov.spectrum.constants;
  double worst = 0.0;
  for (std::size_t u = 0; u < torus.sites(); ++u) {
    double la = 0.0;
    for (const auto& e : torus.kernel.support)
      la += e.weight * (cov.lag.values[torus.shift(u, e.offset)] - cov.lag.values[u]);
    const double delta0 = u == 0 ? 1.0 : 0.0;
    const double a_u = torus.kernel.weight_at(torus.lag(u));
    const double r = 2.0 * la - 2.0 * c.c3 * cov.lag.values[u] + 2.0 * c.c1 * delta0 + 2.0 * c.c2 * a_u;
    worst = std::max(worst, std::abs(r));
  }
  return worst;
}

struct DecayFit {
  stats::LinearFit fit;  // log|M~2(u)| against u
  double rate = 0.0;     // fitted rho = e^{slope}
};

/// Log-linear fit of |M~2(u)| along the first axis over u in [u_min, u_max].
inline DecayFit covariance_decay(const LagFunction& lag, int u_min, int u_max) {
  std::vector<double> xs, ys;
  for (int u = u_min; u <= u_max; ++u) {
    xs.push_back(u);
    ys.push_back(std::log(std::abs(lag.at(u))));
  }
  DecayFit d;
  d.fit = stats::linear_fit(xs, ys);
  d.rate = std::exp(d.fit.slope);
  return d;
}

struct SecondMomentSplit {
  double m21 = 0.0;  // (k / (mu - beta))^2
  LagFunction m22;   // limiting covariance
  LagFunction m2;    // m21 + m22(u)
};

inline SecondMomentSplit m2_split(const RateParams& p, const LatticeKernel& kernel, int side,
                                  CovarianceConvention conv = kDefaultConvention) {
  auto cov = limiting_covariance(p, kernel, side, conv);
  SecondMomentSplit s;
  const double m1 = p.k / (p.mu - p.beta);
  s.m21 = m1 * m1;
  s.m22 = cov.lag;
  s.m2 = cov.lag;
  for (auto& v : s.m2.values) v += s.m21;
  return s;
}

/// Spatially averaged lag covariance of one torus configuration around a
/// given mean: (1/|T|) sum_x (n(x) - m)(n(x+u) - m).
inline double lag_covariance(const Torus& torus, std::span<const std::uint64_t> counts, double mean,
                             const std::vector<int>& u) {
  double acc = 0.0;
  for (std::size_t x = 0; x < torus.sites(); ++x)
    acc += (static_cast<double>(counts[x]) - mean) * (static_cast<double>(counts[torus.shift(x, u)]) - mean);
  return acc / static_cast<double>(torus.sites());
}

}  // namespace branchimm
