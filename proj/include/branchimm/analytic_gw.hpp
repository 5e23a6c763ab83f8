#pragma once

// Single-site Galton-Watson process with immigration: closed-form moments,
// the moment ODE hierarchy, the invariant distribution, recurrence
// classification, the local CLT profile and the harmonic function psi_2.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "branchimm/models.hpp"
#include "branchimm/numerics.hpp"

namespace branchimm {

enum class RecurrenceClass { Transient, ZeroRecurrent, Ergodic };

inline std::string to_string(RecurrenceClass c) {
  switch (c) {
    case RecurrenceClass::Transient:
      return "Transient";
    case RecurrenceClass::ZeroRecurrent:
      return "ZeroRecurrent";
    case RecurrenceClass::Ergodic:
      return "Ergodic";
  }
  return "?";
}

/// mu == beta: no closed form; integrate the moment ODEs instead.
class CriticalRegime : public std::domain_error {
 public:
  CriticalRegime() : std::domain_error("critical regime mu == beta has no closed form; use moments_ode") {}
};

class NonErgodic : public std::domain_error {
 public:
  explicit NonErgodic(RecurrenceClass c)
      : std::domain_error("parameters are not ergodic (" + to_string(c) + ")"), cls(c) {}
  RecurrenceClass cls;
};

struct MomentVector {
  int order = 0;
  double t = 0.0;
  std::vector<double> m;  // m[j-1] = m_j

  double variance() const { return m.size() >= 2 ? m[1] - m[0] * m[0] : 0.0; }
};

/// m_1 and m_2 at time t (t = +inf gives the limits) started from n0.
inline MomentVector moments_closed_form(const RateParams& p, double t, int order = 2, double n0 = 1.0) {
  if (order < 1 || order > 2) throw std::invalid_argument("closed forms exist for order 1 and 2 only");
  if (p.mu == p.beta) throw CriticalRegime();
  const double d = p.mu - p.beta;
  const double c = p.k / d;
  const double e1 = std::exp(-d * t);
  MomentVector mv;
  mv.order = order;
  mv.t = t;
  mv.m.push_back(c + (n0 - c) * e1);
  if (order >= 2) {
    const double a = p.k * (p.k + p.mu) / (d * d);
    const double b = (p.beta + p.mu + 2.0 * p.k) * (n0 - c) / d;
    const double cc = n0 * n0 - a - b;
    mv.m.push_back(a + b * e1 + cc * e1 * e1);
  }
  return mv;
}

/// Linear system dm/dt = M m + s for m = (m_1..m_J):
///   dm_j/dt = sum_{i=1}^{j} C(j,i) [ (beta + (-1)^i mu) m_{j-i+1} + k m_{j-i} ],  m_0 = 1.
struct MomentSystem {
  Eigen::MatrixXd matrix;
  Eigen::VectorXd source;
};

inline MomentSystem moment_generator_matrix(const RateParams& p, int order) {
  if (order < 1) throw std::invalid_argument("moment order must be >= 1");
  MomentSystem sys;
  sys.matrix = Eigen::MatrixXd::Zero(order, order);
  sys.source = Eigen::VectorXd::Zero(order);
  for (int j = 1; j <= order; ++j) {
    double binom = 1.0;
    for (int i = 1; i <= j; ++i) {
      binom = binom * static_cast<double>(j - i + 1) / static_cast<double>(i);
      const double sign = (i % 2 == 0) ? 1.0 : -1.0;
      sys.matrix(j - 1, j - i) += binom * (p.beta + sign * p.mu);
      if (j - i >= 1)
        sys.matrix(j - 1, j - i - 1) += binom * p.k;
      else
        sys.source(j - 1) += binom * p.k;
    }
  }
  return sys;
}

struct MomentOdeResult {
  std::vector<MomentSeries> orders;
  double step = 0.0;
  /// Largest relative difference against the half-step run.
  double richardson_gap = 0.0;
  bool converged = false;
};

inline constexpr double kRichardsonTolerance = 1e-8;

/// RK4 integration of the moment hierarchy on t_grid (increasing, >= 0).
inline MomentOdeResult moments_ode(const RateParams& p, std::span<const double> t_grid, int max_order,
                                   double n0 = 1.0) {
  if (!validate(p).ok()) throw std::invalid_argument("invalid rate parameters");
  for (std::size_t i = 0; i < t_grid.size(); ++i)
    if (t_grid[i] < 0.0 || (i > 0 && !(t_grid[i] > t_grid[i - 1])))
      throw std::invalid_argument("t_grid must be non-negative and strictly increasing");
  const auto sys = moment_generator_matrix(p, max_order);
  auto rhs = [&](double, const Eigen::VectorXd& m) -> Eigen::VectorXd { return sys.matrix * m + sys.source; };

  MomentOdeResult res;
  res.step = std::min(1e-3, 0.1 / (max_order * std::abs(p.beta - p.mu) + 1.0));
  Eigen::VectorXd m0(max_order);
  for (int j = 0; j < max_order; ++j) m0(j) = std::pow(n0, j + 1);

  auto integrate = [&](double h) {
    std::vector<Eigen::VectorXd> out;
    Eigen::VectorXd m = m0;
    double t = 0.0;
    for (double target : t_grid) {
      const auto steps = static_cast<std::size_t>(std::ceil((target - t) / h - 1e-9));
      m = numerics::rk4(rhs, t, m, target, steps);
      t = target;
      out.push_back(m);
    }
    return out;
  };
  const auto coarse = integrate(res.step);
  const auto fine = integrate(0.5 * res.step);

  res.orders.resize(static_cast<std::size_t>(max_order));
  for (int j = 0; j < max_order; ++j) {
    auto& s = res.orders[static_cast<std::size_t>(j)];
    s.label = "m" + std::to_string(j + 1);
    s.grid.assign(t_grid.begin(), t_grid.end());
    s.std_error.assign(t_grid.size(), 0.0);
    for (std::size_t g = 0; g < t_grid.size(); ++g) {
      const double a = fine[g](j), b = coarse[g](j);
      s.values.push_back(a);
      res.richardson_gap = std::max(res.richardson_gap, std::abs(a - b) / std::max(1.0, std::abs(a)));
    }
  }
  res.converged = res.richardson_gap <= kRichardsonTolerance;
  return res;
}

// --------------------------------------------------------------------------
// Invariant distribution

struct InvariantDistribution {
  std::size_t n_max = 0;
  std::vector<double> weights;  // pi(0..n_max)
  double normalizer = 0.0;      // S~ from the recurrence
  double log_normalizer = 0.0;
  double tail_bound = 0.0;      // bound on sum_{n > n_max} pi(n)

  double at(std::size_t n) const { return n < weights.size() ? weights[n] : 0.0; }

  double mean() const {
    double s = 0.0;
    for (std::size_t n = 0; n < weights.size(); ++n) s += static_cast<double>(n) * weights[n];
    return s;
  }

  double variance() const {
    const double m = mean();
    double s = 0.0;
    for (std::size_t n = 0; n < weights.size(); ++n) s += (static_cast<double>(n) - m) * (static_cast<double>(n) - m) * weights[n];
    return s;
  }
};

struct InvariantOptions {
  std::size_t n_max = 0;            // 0: grow until the tail bound is below tail_tolerance
  double tail_tolerance = 1e-13;
  std::size_t hard_limit = 50'000'000;
};

/// Normalizer in closed form: (1 - beta/mu)^{-k/beta}, or e^{k/mu} at beta = 0.
inline double closed_form_normalizer(const RateParams& p) {
  if (p.beta == 0.0) return std::exp(p.k / p.mu);
  return std::pow(1.0 - p.beta / p.mu, -p.k / p.beta);
}

inline double log_closed_form_normalizer(const RateParams& p) {
  if (p.beta == 0.0) return p.k / p.mu;
  return -(p.k / p.beta) * std::log1p(-p.beta / p.mu);
}

inline RecurrenceClass classify(const RateParams& p);

/// pi(n) by pi~(n+1) = pi~(n) (k + beta n) / (mu (n+1)) in log space.
inline InvariantDistribution invariant_distribution(const RateParams& p, const InvariantOptions& opt = {}) {
  if (!validate(p).ok()) throw std::invalid_argument("invalid rate parameters");
  if (!(p.k > 0.0)) throw std::invalid_argument("invariant distribution needs k > 0");
  if (!(p.beta < p.mu)) throw NonErgodic(classify(p));

  auto ratio = [&](double n) { return (p.k + p.beta * n) / (p.mu * (n + 1.0)); };
  std::vector<double> logw{0.0};
  double log_peak = 0.0;
  auto log_tail = [&](std::size_t n) {
    const double rho = std::max(ratio(static_cast<double>(n)), p.beta / p.mu);
    if (rho >= 1.0) return std::numeric_limits<double>::infinity();
    return logw[n] + std::log(rho / (1.0 - rho));
  };
  std::size_t n = 0;
  while (true) {
    if (opt.n_max > 0 && n >= opt.n_max) break;
    if (opt.n_max == 0 && ratio(static_cast<double>(n)) < 1.0 &&
        log_tail(n) - log_peak < std::log(opt.tail_tolerance) - 10.0)
      break;
    if (n >= opt.hard_limit) throw std::runtime_error("invariant distribution: truncation limit reached");
    logw.push_back(logw.back() + std::log(ratio(static_cast<double>(n))));
    ++n;
    log_peak = std::max(log_peak, logw.back());
  }

  InvariantDistribution inv;
  inv.n_max = n;
  double scaled = 0.0;
  for (double lw : logw) scaled += std::exp(lw - log_peak);
  inv.log_normalizer = log_peak + std::log(scaled);
  inv.normalizer = std::exp(inv.log_normalizer);
  inv.weights.reserve(logw.size());
  for (double lw : logw) inv.weights.push_back(std::exp(lw - inv.log_normalizer));
  const double lt = log_tail(n);
  inv.tail_bound = std::isfinite(lt) ? std::exp(lt - inv.log_normalizer) : std::numeric_limits<double>::infinity();
  return inv;
}

// --------------------------------------------------------------------------
// Recurrence classification

inline RecurrenceClass classify(const RateParams& p) {
  if (!(p.k > 0.0)) throw std::invalid_argument("classify needs k > 0 (k = 0 is absorbing at 0)");
  if (p.beta > p.mu) return RecurrenceClass::Transient;
  if (p.beta < p.mu) return RecurrenceClass::Ergodic;
  if (p.beta == 0.0) return RecurrenceClass::Transient;  // pure immigration
  return p.k / p.beta <= 1.0 ? RecurrenceClass::ZeroRecurrent : RecurrenceClass::Transient;
}

struct SeriesTest {
  std::vector<double> log_partial;  // log of partial sums after 1..n_terms terms
  double ratio_limit = 0.0;         // extrapolated term ratio
  double raabe = std::numeric_limits<double>::quiet_NaN();
  bool converges = false;
};

struct SeriesReport {
  std::size_t n_terms = 0;
  SeriesTest s;        // sum_n prod_{i<=n} mu_i / lambda_i   (diverges iff recurrent)
  SeriesTest s_tilde;  // sum_n prod_{i<=n} lambda_{i-1} / mu_i (converges iff ergodic)
  RecurrenceClass verdict = RecurrenceClass::Transient;
};

namespace detail {

inline double log_add(double a, double b) {
  if (a == -INFINITY) return b;
  if (b == -INFINITY) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

/// Term ratio r(n) = t_{n+1}/t_n. Verdict from the extrapolated ratio, or
/// the Raabe quantity n (1 - r(n)) when the ratio tends to 1.
template <class Ratio>
SeriesTest run_series(Ratio&& r, std::size_t n_terms) {
  SeriesTest st;
  double log_term = 0.0, log_sum = 0.0;
  st.log_partial.push_back(log_sum);
  for (std::size_t n = 0; n + 1 < n_terms; ++n) {
    const double rn = r(static_cast<double>(n));
    log_term += rn > 0.0 ? std::log(rn) : -INFINITY;
    log_sum = log_add(log_sum, log_term);
    st.log_partial.push_back(log_sum);
  }
  const double n1 = static_cast<double>(std::max<std::size_t>(n_terms, 16));
  const double r1 = r(n1), r2 = r(2.0 * n1);
  st.ratio_limit = (std::isinf(r1) || std::isinf(r2)) ? INFINITY : 2.0 * r2 - r1;
  // After extrapolation the residual is O(|r1 - r2| / n).
  const double tol = std::max(1e-8, 10.0 * std::abs(r1 - r2) / n1);
  if (std::abs(st.ratio_limit - 1.0) >= tol) {
    st.converges = st.ratio_limit < 1.0;
  } else {
    const double h1 = n1 * (1.0 - r1), h2 = 2.0 * n1 * (1.0 - r2);
    st.raabe = 2.0 * h2 - h1;
    st.converges = st.raabe > 1.0 + 1e-6;
  }
  return st;
}

}  // namespace detail

/// Partial sums of both series with ratio/Raabe verdicts. The combined
/// verdict is Ergodic when S~ converges, ZeroRecurrent when S~ and S both
/// diverge, Transient when S converges.
inline SeriesReport series_criteria(const RateParams& p, std::size_t n_terms = 1000) {
  if (n_terms < 1) throw std::invalid_argument("n_terms must be >= 1");
  if (!(p.k > 0.0)) throw std::invalid_argument("series criteria need k > 0");
  SeriesReport rep;
  rep.n_terms = n_terms;
  // lambda_n = k + beta n, mu_n = mu n.
  rep.s = detail::run_series(
      [&](double n) {
        const double lam = p.k + p.beta * (n + 1.0);
        return p.mu * (n + 1.0) / lam;
      },
      n_terms);
  rep.s_tilde = detail::run_series(
      [&](double n) {
        const double down = p.mu * (n + 1.0);
        return down > 0.0 ? (p.k + p.beta * n) / down : INFINITY;
      },
      n_terms);
  if (rep.s_tilde.converges)
    rep.verdict = RecurrenceClass::Ergodic;
  else if (!rep.s.converges)
    rep.verdict = RecurrenceClass::ZeroRecurrent;
  else
    rep.verdict = RecurrenceClass::Transient;
  return rep;
}

// --------------------------------------------------------------------------
// Local CLT

enum class CltCentering {
  RoundedMean,  // n0 = round(k / (mu - beta))
  Mode,         // n0 = floor((k - beta) / (mu - beta)), the mode of pi
};

struct CltRow {
  long l = 0;
  double pi = 0.0;
  double gaussian = 0.0;
  double ratio = 0.0;  // pi sqrt(2 pi sigma^2) e^{l^2 / 2 sigma^2}
};

struct CltProfile {
  long n0 = 0;
  double sigma2 = 0.0;
  std::vector<CltRow> rows;

  double max_abs_error() const {
    double m = 0.0;
    for (const auto& r : rows) m = std::max(m, std::abs(r.ratio - 1.0));
    return m;
  }
};

inline long clt_center(const RateParams& p, CltCentering centering) {
  const double d = p.mu - p.beta;
  if (centering == CltCentering::RoundedMean) return std::lround(p.k / d);
  return std::max(0L, static_cast<long>(std::floor((p.k - p.beta) / d)));
}

/// Exact pi(n0 + l) against the Gaussian density with sigma^2 = mu k / (mu - beta)^2
/// for |l| <= l_max.
inline CltProfile local_clt_profile(const RateParams& p, long l_max,
                                    CltCentering centering = CltCentering::Mode) {
  if (!(p.beta < p.mu)) throw NonErgodic(classify(p));
  CltProfile prof;
  const double d = p.mu - p.beta;
  prof.sigma2 = p.mu * p.k / (d * d);
  prof.n0 = clt_center(p, centering);
  InvariantOptions opt;
  auto inv = invariant_distribution(p, opt);
  if (inv.n_max < static_cast<std::size_t>(prof.n0 + l_max)) {
    opt.n_max = static_cast<std::size_t>(prof.n0 + l_max) + 1;
    inv = invariant_distribution(p, opt);
  }
  const double norm = std::sqrt(2.0 * std::numbers::pi * prof.sigma2);
  for (long l = -l_max; l <= l_max; ++l) {
    const long n = prof.n0 + l;
    if (n < 0) continue;
    CltRow row;
    row.l = l;
    row.pi = inv.at(static_cast<std::size_t>(n));
    const double ld = static_cast<double>(l);
    row.gaussian = std::exp(-ld * ld / (2.0 * prof.sigma2)) / norm;
    row.ratio = row.pi * norm * std::exp(ld * ld / (2.0 * prof.sigma2));
    prof.rows.push_back(row);
  }
  return prof;
}

// --------------------------------------------------------------------------
// Harmonic function

/// psi_2(n) = 1 + sum_{j=1}^{n-1} prod_{i=1}^{j} mu_i / lambda_i, psi_2(0) = 0.
inline double harmonic_psi2(const RateParams& p, std::size_t n) {
  if (n == 0) return 0.0;
  double sum = 1.0, prod = 1.0;
  for (std::size_t j = 1; j < n; ++j) {
    const double jd = static_cast<double>(j);
    prod *= p.mu * jd / (p.beta * jd + p.k);
    sum += prod;
  }
  return sum;
}

}  // namespace branchimm
