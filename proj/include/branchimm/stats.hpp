#pragma once

// Statistical helpers shared by the simulators and the verification suite.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

namespace branchimm::stats {

/// Order-insensitive accumulator (count, sum, sum of squares).
struct RunningStats {
  std::size_t count = 0;
  double sum = 0.0;
  double sum_sq = 0.0;

  void add(double x) {
    ++count;
    sum += x;
    sum_sq += x * x;
  }

  void merge(const RunningStats& o) {
    count += o.count;
    sum += o.sum;
    sum_sq += o.sum_sq;
  }

  double mean() const { return count ? sum / static_cast<double>(count) : 0.0; }

  double variance() const {
    if (count < 2) return 0.0;
    const double n = static_cast<double>(count);
    return std::max(0.0, (sum_sq - sum * sum / n) / (n - 1.0));
  }

  double sem() const { return count ? std::sqrt(variance() / static_cast<double>(count)) : 0.0; }
};

/// Sample mean, unbiased variance and their standard errors. The variance SE
/// uses the fourth central moment: se^2 = (m4 - s^4 (n-3)/(n-1)) / n.
struct SampleSummary {
  std::size_t n = 0;
  double mean = 0.0;
  double variance = 0.0;
  double se_mean = 0.0;
  double se_variance = 0.0;
  double second_moment = 0.0;
  double se_second_moment = 0.0;
  double skewness = 0.0;
};

inline SampleSummary summarize(std::span<const double> xs) {
  SampleSummary s;
  s.n = xs.size();
  if (s.n == 0) return s;
  const double n = static_cast<double>(s.n);
  s.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  double m2 = 0.0, m3 = 0.0, m4 = 0.0, raw2 = 0.0, raw4 = 0.0;
  for (double x : xs) {
    const double d = x - s.mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
    raw2 += x * x;
    raw4 += x * x * x * x;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  raw2 /= n;
  raw4 /= n;
  if (s.n > 1) {
    s.variance = m2 * n / (n - 1.0);
    s.se_mean = std::sqrt(s.variance / n);
    s.se_variance = std::sqrt(std::max(0.0, (m4 - s.variance * s.variance * (n - 3.0) / (n - 1.0)) / n));
    s.se_second_moment = std::sqrt(std::max(0.0, (raw4 - raw2 * raw2) / (n - 1.0)));
  }
  s.second_moment = raw2;
  if (m2 > 0.0) s.skewness = m3 / std::pow(m2, 1.5);
  return s;
}

/// |value - target| <= sigmas * se (se = 0 demands exact equality).
inline bool within_se(double value, double target, double se, double sigmas = 3.0) {
  return std::abs(value - target) <= sigmas * se;
}

inline double z_score(double value, double target, double se) {
  if (se <= 0.0) return value == target ? 0.0 : std::copysign(INFINITY, value - target);
  return (value - target) / se;
}

/// Anderson-Darling test of normality with mean and variance estimated from
/// the sample (composite hypothesis). p-values from D'Agostino & Stephens
/// (1986), Table 4.9, applied to the small-sample adjusted statistic.
struct AndersonDarling {
  double a2 = 0.0;
  double a2_adjusted = 0.0;
  double p_value = 1.0;

  bool passes(double alpha) const { return p_value >= alpha; }
};

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

inline AndersonDarling anderson_darling_normal(std::vector<double> xs) {
  AndersonDarling res;
  const std::size_t n = xs.size();
  if (n < 8) throw std::invalid_argument("anderson_darling_normal: need at least 8 samples");
  const auto s = summarize(xs);
  const double sd = std::sqrt(s.variance);
  if (!(sd > 0.0)) {
    res.a2 = res.a2_adjusted = INFINITY;
    res.p_value = 0.0;
    return res;
  }
  std::sort(xs.begin(), xs.end());
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double zi = (xs[i] - s.mean) / sd;
    const double zj = (xs[n - 1 - i] - s.mean) / sd;
    const double fi = std::clamp(normal_cdf(zi), 1e-300, 1.0 - 1e-16);
    const double fj = std::clamp(normal_cdf(zj), 1e-300, 1.0 - 1e-16);
    acc += (2.0 * static_cast<double>(i) + 1.0) * (std::log(fi) + std::log1p(-fj));
  }
  const double nn = static_cast<double>(n);
  res.a2 = -nn - acc / nn;
  const double a = res.a2 * (1.0 + 0.75 / nn + 2.25 / (nn * nn));
  res.a2_adjusted = a;
  double p;
  if (a >= 0.6)
    p = std::exp(1.2937 - 5.709 * a + 0.0186 * a * a);
  else if (a >= 0.34)
    p = std::exp(0.9177 - 4.279 * a - 1.38 * a * a);
  else if (a >= 0.2)
    p = 1.0 - std::exp(-8.318 + 42.796 * a - 59.938 * a * a);
  else
    p = 1.0 - std::exp(-13.436 + 101.14 * a - 223.73 * a * a);
  res.p_value = std::clamp(p, 0.0, 1.0);
  return res;
}

/// Ordinary least squares y = intercept + slope x.
struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_se = 0.0;
  double r2 = 0.0;
};

inline LinearFit linear_fit(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("linear_fit: need at least two paired points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  const double sse = std::max(0.0, syy - f.slope * sxy);
  f.r2 = syy > 0.0 ? 1.0 - sse / syy : 1.0;
  if (x.size() > 2) f.slope_se = std::sqrt(sse / (n - 2.0) / sxx);
  return f;
}

/// Pearson chi-square goodness of fit; bins with expected count < 5 are
/// pooled into their neighbour.
struct ChiSquare {
  double statistic = 0.0;
  std::size_t dof = 0;
  double p_value = 1.0;
};

inline ChiSquare chi_square_gof(std::span<const double> observed, std::span<const double> expected) {
  if (observed.size() != expected.size() || observed.empty())
    throw std::invalid_argument("chi_square_gof: size mismatch");
  std::vector<double> o, e;
  double acc_o = 0.0, acc_e = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    acc_o += observed[i];
    acc_e += expected[i];
    if (acc_e >= 5.0) {
      o.push_back(acc_o);
      e.push_back(acc_e);
      acc_o = acc_e = 0.0;
    }
  }
  if (acc_e > 0.0) {
    if (e.empty()) {
      o.push_back(acc_o);
      e.push_back(acc_e);
    } else {
      o.back() += acc_o;
      e.back() += acc_e;
    }
  }
  ChiSquare c;
  for (std::size_t i = 0; i < o.size(); ++i) c.statistic += (o[i] - e[i]) * (o[i] - e[i]) / e[i];
  c.dof = o.size() > 1 ? o.size() - 1 : 1;
  boost::math::chi_squared_distribution<double> dist(static_cast<double>(c.dof));
  c.p_value = boost::math::cdf(boost::math::complement(dist, c.statistic));
  return c;
}

/// Total variation distance between two weight vectors (missing entries are
/// zero).
inline double total_variation(std::span<const double> p, std::span<const double> q) {
  const std::size_t n = std::max(p.size(), q.size());
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = i < p.size() ? p[i] : 0.0;
    const double b = i < q.size() ? q[i] : 0.0;
    s += std::abs(a - b);
  }
  return 0.5 * s;
}

}  // namespace branchimm::stats
