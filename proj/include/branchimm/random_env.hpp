#pragma once

// Random environment analyses: quenched series criterion, stationary first
// moment under a time-random environment, its spectral mean, two-state
// Markov environments, Feynman-Kac estimation and the spatial Case I / II
// dichotomy.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "branchimm/analytic_gw.hpp"
#include "branchimm/ctmc.hpp"
#include "branchimm/models.hpp"
#include "branchimm/numerics.hpp"
#include "branchimm/rng.hpp"
#include "branchimm/spatial.hpp"
#include "branchimm/stats.hpp"

namespace branchimm {

// --------------------------------------------------------------------------
// Quenched series

enum class EnvVerdict { Ergodic, NonErgodic, Boundary };

inline std::string to_string(EnvVerdict v) {
  switch (v) {
    case EnvVerdict::Ergodic:
      return "Ergodic";
    case EnvVerdict::NonErgodic:
      return "NonErgodic";
    case EnvVerdict::Boundary:
      return "Boundary";
  }
  return "?";
}

/// E[ln X] for X drawn from `law`; exact for all kinds but Triangular.
struct LogMoment {
  double value = 0.0;
  double se = 0.0;
  bool exact = true;
};

inline constexpr std::size_t kLogMomentSamples = 1'000'000;

inline LogMoment mean_log(const RateLaw& law, std::uint64_t seed = 0x6c6f67) {
  LogMoment m;
  switch (law.kind) {
    case RateLaw::Kind::Constant:
      m.value = std::log(law.a);
      break;
    case RateLaw::Kind::TwoPoint:
      m.value = law.p * std::log(law.a) + (1.0 - law.p) * std::log(law.b);
      break;
    case RateLaw::Kind::Uniform:
      if (law.a == law.b)
        m.value = std::log(law.a);
      else
        m.value = (law.b * std::log(law.b) - law.a * std::log(law.a)) / (law.b - law.a) - 1.0;
      break;
    case RateLaw::Kind::Triangular: {
      Rng rng(seed);
      stats::RunningStats rs;
      for (std::size_t i = 0; i < kLogMomentSamples; ++i) rs.add(std::log(law.quantile(rng.uniform())));
      m.value = rs.mean();
      m.se = rs.sem();
      m.exact = false;
      break;
    }
  }
  return m;
}

/// ln beta - ln mu can fluctuate (so a zero criterion is a genuine boundary).
inline bool log_ratio_fluctuates(const ByPopulationLevel& env) {
  return !(env.beta.degenerate() && env.mu.degenerate());
}

struct QuenchedSeriesReport {
  std::uint64_t env_seed = 0;
  std::size_t n_terms = 0;
  std::vector<double> log_partial;  // log S_n, n = 1..n_terms
  double log_term_slope = 0.0;      // mean increment of log t_n over the second half
  double slope_se = 0.0;
  double criterion = 0.0;           // <ln beta> - <ln mu>
  double criterion_se = 0.0;
  bool criterion_exact = true;
  EnvVerdict verdict = EnvVerdict::Boundary;        // from the criterion
  EnvVerdict slope_verdict = EnvVerdict::Boundary;  // from the sampled series
};

/// Terms t_n = prod_{j=0}^{n-1} (k(j) + j beta(j)) / ((j+1) mu(j+1)) for one
/// environment realisation drawn from env_seed.
inline QuenchedSeriesReport quenched_series(const ByPopulationLevel& env, std::size_t n_terms,
                                            std::uint64_t env_seed) {
  if (auto r = validate(EnvironmentSpec{env}); !r.ok()) throw std::invalid_argument("invalid environment: " + r.to_string());
  if (n_terms < 4) throw std::invalid_argument("quenched_series needs at least 4 terms");
  ByPopulationLevel e = env;
  e.env_seed = env_seed;
  QuenchedSeriesReport rep;
  rep.env_seed = env_seed;
  rep.n_terms = n_terms;

  RateTriple cur = LevelEnvironment::sample(e, 0);
  double log_term = 0.0, log_sum = 0.0;
  rep.log_partial.reserve(n_terms);
  rep.log_partial.push_back(0.0);
  stats::RunningStats second_half;
  for (std::size_t j = 0; j + 1 < n_terms; ++j) {
    const RateTriple next = LevelEnvironment::sample(e, j + 1);
    const double jd = static_cast<double>(j);
    const double inc = std::log(cur.k + jd * cur.beta) - std::log((jd + 1.0) * next.mu);
    log_term += inc;
    log_sum = detail::log_add(log_sum, log_term);
    rep.log_partial.push_back(log_sum);
    if (j + 1 >= n_terms / 2) second_half.add(inc);
    cur = next;
  }
  rep.log_term_slope = second_half.mean();
  rep.slope_se = second_half.sem();
  // The O(1/j) corrections in the increments bias the slope by O(1/n).
  const double slope_band = 3.0 * rep.slope_se + 10.0 / static_cast<double>(n_terms);
  if (rep.log_term_slope < -slope_band)
    rep.slope_verdict = EnvVerdict::Ergodic;
  else if (rep.log_term_slope > slope_band)
    rep.slope_verdict = EnvVerdict::NonErgodic;
  else
    rep.slope_verdict = log_ratio_fluctuates(env) ? EnvVerdict::Boundary : EnvVerdict::NonErgodic;

  const auto lb = mean_log(env.beta), lm = mean_log(env.mu);
  rep.criterion = lb.value - lm.value;
  rep.criterion_se = std::hypot(lb.se, lm.se);
  rep.criterion_exact = lb.exact && lm.exact;
  const double band = rep.criterion_exact ? 0.0 : 3.0 * rep.criterion_se;
  if (rep.criterion < -band)
    rep.verdict = EnvVerdict::Ergodic;
  else if (rep.criterion > band)
    rep.verdict = EnvVerdict::NonErgodic;
  else
    rep.verdict = log_ratio_fluctuates(env) ? EnvVerdict::Boundary : EnvVerdict::NonErgodic;
  return rep;
}

// --------------------------------------------------------------------------
// Stationary first moment in a time-random environment

/// Periodic piecewise-constant path: value values[i] on
/// [knots[i], knots[i+1]) modulo `period`, with knots[0] = 0.
struct StepPath {
  double period = 1.0;
  std::vector<double> knots{0.0};
  std::vector<double> values{1.0};

  static StepPath constant(double v) { return {1.0, {0.0}, {v}}; }

  double at(double t) const {
    double r = std::fmod(t, period);
    if (r < 0.0) r += period;
    auto it = std::upper_bound(knots.begin(), knots.end(), r);
    return values[static_cast<std::size_t>(it - knots.begin()) - 1];
  }

  double min() const { return *std::min_element(values.begin(), values.end()); }
  double max() const { return *std::max_element(values.begin(), values.end()); }

  /// Breakpoints of the periodic extension inside (a, b).
  std::vector<double> breaks(double a, double b) const {
    std::vector<double> out;
    const double first = std::floor(a / period);
    for (double c = first;; c += 1.0) {
      bool past = false;
      for (double kn : knots) {
        const double x = c * period + kn;
        if (x >= b) {
          past = true;
          break;
        }
        if (x > a) out.push_back(x);
      }
      if (past) break;
    }
    return out;
  }
};

struct StationaryMoment {
  double value = 0.0;
  double cutoff_bound = 0.0;  // (1/delta) e^{-delta T} / delta
  bool cutoff_ok = true;
  double delta = 0.0;
};

/// int_{t-T}^{t} k(s) exp(-int_s^t Delta(u) du) ds by per-cell trapezoid on
/// a grid refined to contain every breakpoint of k and Delta.
inline StationaryMoment stationary_m1_quadrature(const StepPath& k, const StepPath& delta, double t, double cutoff,
                                                 double step = 1e-4, double tolerance = 1e-8) {
  if (!(cutoff > 0.0) || !(step > 0.0)) throw std::invalid_argument("cutoff and step must be positive");
  StationaryMoment sm;
  sm.delta = std::min({delta.min(), k.min(), 1.0 / delta.max(), 1.0 / k.max()});
  if (!(sm.delta > 0.0)) throw std::invalid_argument("paths must be bounded away from 0");
  const double lo = t - cutoff;
  std::vector<double> nodes{lo, t};
  for (double x : k.breaks(lo, t)) nodes.push_back(x);
  for (double x : delta.breaks(lo, t)) nodes.push_back(x);
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());

  // Walk backwards from t, accumulating I(s) = int_s^t Delta exactly.
  double inner = 0.0, acc = 0.0;
  for (std::size_t i = nodes.size() - 1; i > 0; --i) {
    const double b = nodes[i], a = nodes[i - 1];
    const double mid = 0.5 * (a + b);
    const double kv = k.at(mid), dv = delta.at(mid);
    const auto cells = static_cast<std::size_t>(std::max(1.0, std::ceil((b - a) / step)));
    const double h = (b - a) / static_cast<double>(cells);
    for (std::size_t c = 0; c < cells; ++c) {
      const double f_right = kv * std::exp(-inner);
      inner += dv * h;
      const double f_left = kv * std::exp(-inner);
      acc += 0.5 * h * (f_left + f_right);
    }
  }
  sm.value = acc;
  sm.cutoff_bound = (1.0 / sm.delta) * std::exp(-sm.delta * cutoff) / sm.delta;
  sm.cutoff_ok = sm.cutoff_bound <= tolerance;
  return sm;
}

// --------------------------------------------------------------------------
// Spectral mean

/// H = L + V with symmetric generator L and V = -Delta, Delta >= delta > 0.
struct SpectralEnvironment {
  Eigen::MatrixXd generator;
  Eigen::VectorXd delta;

  std::size_t size() const { return static_cast<std::size_t>(delta.size()); }

  Eigen::MatrixXd hamiltonian() const {
    Eigen::MatrixXd h = generator;
    h.diagonal() -= delta;
    return h;
  }
};

struct SpectralMean {
  double eigen_sum = 0.0;     // -(<k>/N) sum_i (psi_i . 1)^2 / lambda_i
  double linear_solve = 0.0;  // <k> pi^T (-H)^{-1} 1, pi = 1/N
  Eigen::VectorXd eigenvalues;
  double gram_error = 0.0;    // max |Psi^T Psi - I|
  double top_eigenvalue = 0.0;
};

inline SpectralMean spectral_mean(const SpectralEnvironment& env, double mean_k) {
  const auto n = env.delta.size();
  if (n == 0 || env.generator.rows() != n || env.generator.cols() != n)
    throw std::invalid_argument("spectral environment has inconsistent dimensions");
  if ((env.generator - env.generator.transpose()).cwiseAbs().maxCoeff() > 1e-12)
    throw std::invalid_argument("spectral environment generator must be symmetric");
  const Eigen::MatrixXd h = env.hamiltonian();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h);
  if (es.info() != Eigen::Success) throw std::runtime_error("eigendecomposition failed");
  SpectralMean sm;
  sm.eigenvalues = es.eigenvalues();
  sm.top_eigenvalue = sm.eigenvalues.maxCoeff();
  const Eigen::MatrixXd& psi = es.eigenvectors();
  sm.gram_error = (psi.transpose() * psi - Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff();
  const double nd = static_cast<double>(n);
  double s = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double proj = psi.col(i).sum();
    s += proj * proj / sm.eigenvalues(i);
  }
  sm.eigen_sum = -(mean_k / nd) * s;
  const Eigen::VectorXd x = (-h).ldlt().solve(Eigen::VectorXd::Ones(n));
  sm.linear_solve = mean_k * x.sum() / nd;
  return sm;
}

// --------------------------------------------------------------------------
// Two-state Markov environment

struct TwoStateReport {
  DriftVerdict verdict = DriftVerdict::Inconclusive;
  double delta = 0.0;      // min_i (mu_i - beta_i)
  double a = 0.0;          // max_i k_i
  double threshold = 0.0;  // drift of f(n, x) = n is negative for n > A / delta
};

inline TwoStateReport two_state_ergodicity(const MarkovChainEnv& env) {
  if (env.states() != 2) throw std::invalid_argument("two_state_ergodicity needs exactly two states");
  TwoStateReport r;
  r.delta = std::min(env.mu[0] - env.beta[0], env.mu[1] - env.beta[1]);
  r.a = std::max(env.k[0], env.k[1]);
  if (r.delta > 0.0 && std::isfinite(r.a)) {
    r.verdict = DriftVerdict::Ergodic;
    r.threshold = r.a / r.delta;
  }
  return r;
}

// --------------------------------------------------------------------------
// Feynman-Kac

/// Generator of the walk: G(x, y) = rate of x -> y, rows sum to 0.
inline Eigen::MatrixXd walk_generator(const FiniteSet& fs) {
  const auto n = static_cast<Eigen::Index>(fs.size());
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index x = 0; x < n; ++x) {
    for (Eigen::Index y = 0; y < n; ++y)
      if (x != y) g(x, y) = fs.rates[static_cast<std::size_t>(x)][static_cast<std::size_t>(y)];
    g(x, x) = -g.row(x).sum();
  }
  return g;
}

inline Eigen::MatrixXd walk_generator(const Torus& torus, double kappa = 1.0) {
  const auto n = static_cast<Eigen::Index>(torus.sites());
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t x = 0; x < torus.sites(); ++x) {
    const auto xi = static_cast<Eigen::Index>(x);
    for (const auto& e : torus.kernel.support) g(xi, static_cast<Eigen::Index>(torus.shift(x, e.offset))) += kappa * e.weight;
    g(xi, xi) -= kappa * torus.kernel.total_weight();
  }
  return g;
}

struct FeynmanKacEstimate {
  std::optional<double> mc;  // absent when no walker ended at y
  double se = 0.0;
  std::size_t hits = 0;
  std::size_t walkers = 0;
  double oracle = 0.0;       // [exp(s (G + V))]_{xy}
  double z = 0.0;
  double total_mc = 0.0;     // E_x[exp(int V)] without the endpoint filter
  double total_se = 0.0;
  double total_oracle = 0.0; // sum_y q(s, x, y)
};

inline constexpr std::size_t kWalkerBlock = 1000;

/// q(s,x,y) = E_x[exp(int_0^s (beta - mu)(X_u) du); X_s = y] by walker Monte
/// Carlo, checked against the matrix exponential.
inline FeynmanKacEstimate feynman_kac_q(const Eigen::MatrixXd& generator, std::span<const double> beta_field,
                                        std::span<const double> mu_field, double s, std::size_t x, std::size_t y,
                                        std::size_t walkers, std::uint64_t seed, unsigned jobs = 1) {
  const auto n = generator.rows();
  if (generator.cols() != n || beta_field.size() != static_cast<std::size_t>(n) ||
      mu_field.size() != static_cast<std::size_t>(n))
    throw std::invalid_argument("feynman_kac_q: dimension mismatch");
  if (x >= static_cast<std::size_t>(n) || y >= static_cast<std::size_t>(n))
    throw std::invalid_argument("feynman_kac_q: site out of range");
  if (walkers < 1000) throw std::invalid_argument("feynman_kac_q: need at least 1000 walkers");
  if (!(s >= 0.0)) throw std::invalid_argument("feynman_kac_q: s must be non-negative");

  std::vector<double> v(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = beta_field[i] - mu_field[i];
  std::vector<std::vector<std::pair<std::size_t, double>>> out(static_cast<std::size_t>(n));
  std::vector<double> out_rate(static_cast<std::size_t>(n), 0.0);
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = 0; b < n; ++b)
      if (a != b && generator(a, b) > 0.0) {
        out_rate[static_cast<std::size_t>(a)] += generator(a, b);
        out[static_cast<std::size_t>(a)].push_back({static_cast<std::size_t>(b), out_rate[static_cast<std::size_t>(a)]});
      }

  struct Block {
    stats::RunningStats hit;
    stats::RunningStats total;
    std::size_t hits = 0;
  };
  const std::size_t blocks = (walkers + kWalkerBlock - 1) / kWalkerBlock;
  auto results = run_replicas(blocks, seed, jobs, [&](std::uint64_t bseed, std::size_t b) {
    Rng rng(bseed);
    Block blk;
    const std::size_t count = std::min(kWalkerBlock, walkers - b * kWalkerBlock);
    for (std::size_t w = 0; w < count; ++w) {
      std::size_t pos = x;
      double t = 0.0, integral = 0.0;
      while (true) {
        const double r = out_rate[pos];
        const double hold = r > 0.0 ? rng.exponential(r) : std::numeric_limits<double>::infinity();
        if (t + hold >= s) {
          integral += v[pos] * (s - t);
          break;
        }
        integral += v[pos] * hold;
        t += hold;
        const double u = rng.uniform() * r;
        const auto& cum = out[pos];
        auto it = std::upper_bound(cum.begin(), cum.end(), u,
                                   [](double val, const auto& e) { return val < e.second; });
        if (it == cum.end()) --it;
        pos = it->first;
      }
      const double weight = std::exp(integral);
      blk.total.add(weight);
      const bool hit = pos == y;
      blk.hit.add(hit ? weight : 0.0);
      blk.hits += hit;
    }
    return blk;
  });

  FeynmanKacEstimate est;
  est.walkers = walkers;
  stats::RunningStats hit, total;
  for (const auto& b : results) {
    hit.merge(b.hit);
    total.merge(b.total);
    est.hits += b.hits;
  }
  Eigen::MatrixXd m = generator;
  for (Eigen::Index i = 0; i < n; ++i) m(i, i) += v[static_cast<std::size_t>(i)];
  const Eigen::MatrixXd q = numerics::expm(m * s);
  est.oracle = q(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y));
  est.total_oracle = q.row(static_cast<Eigen::Index>(x)).sum();
  est.total_mc = total.mean();
  est.total_se = total.sem();
  if (est.hits > 0) {
    est.mc = hit.mean();
    est.se = hit.sem();
    est.z = stats::z_score(*est.mc, est.oracle, est.se);
  }
  return est;
}

// --------------------------------------------------------------------------
// Spatial random environment: Case I / Case II

enum class SpatialCase { CaseI, CaseII, Neither };

inline std::string to_string(SpatialCase c) {
  switch (c) {
    case SpatialCase::CaseI:
      return "CaseI";
    case SpatialCase::CaseII:
      return "CaseII";
    case SpatialCase::Neither:
      return "Neither";
  }
  return "?";
}

struct DichotomyReport {
  SpatialCase which = SpatialCase::Neither;
  MomentSeries mean;        // per-site mean over sites and replicas
  double delta1 = 0.0;      // lower immigration bound
  double k_sup = 0.0;       // ||k||_inf
  double mortality_gap = 0.0;  // min_x (mu - beta)(x)
  // Case I
  double slope = 0.0;       // mean of per-replica least-squares slopes (second half of the grid)
  double slope_se = 0.0;
  bool growth_ok = false;   // slope >= delta1 - 3 SE
  // Case II
  double bound = 0.0;       // ||k||_inf / mortality gap
  double plateau_diff = 0.0;
  double plateau_se = 0.0;
  bool bound_ok = false;    // last mean <= bound + 3 SE
  bool plateau_ok = false;  // last two grid means within 3 SE

  bool ok() const {
    if (which == SpatialCase::CaseI) return growth_ok;
    if (which == SpatialCase::CaseII) return bound_ok && plateau_ok;
    return false;
  }
};

inline SpatialCase spatial_case(const SpatialField& env) {
  bool critical = true, sub = true;
  for (std::size_t x = 0; x < env.beta.size(); ++x) {
    critical = critical && env.beta[x] == env.mu[x];
    sub = sub && env.mu[x] > env.beta[x];
  }
  if (critical) return SpatialCase::CaseI;
  if (sub) return SpatialCase::CaseII;
  return SpatialCase::Neither;
}

inline DichotomyReport case_dichotomy(const SpatialField& env, const InitialCondition& n0,
                                      std::span<const double> t_grid, std::size_t replicas, std::uint64_t seed,
                                      unsigned jobs = 1) {
  if (t_grid.size() < 4) throw std::invalid_argument("case_dichotomy needs at least 4 grid points");
  DichotomyReport rep;
  rep.which = spatial_case(env);
  rep.delta1 = env.delta1;
  rep.k_sup = env.k.sup();
  rep.mortality_gap = std::numeric_limits<double>::infinity();
  for (std::size_t x = 0; x < env.beta.size(); ++x) rep.mortality_gap = std::min(rep.mortality_gap, env.mu[x] - env.beta[x]);

  const EnvironmentSpec spec{env};
  const double sites = static_cast<double>(env.torus.sites());
  auto paths = run_replicas(replicas, seed, jobs, [&](std::uint64_t s, std::size_t) {
    auto res = simulate_env(spec, n0, t_grid.back(), t_grid, s);
    std::vector<double> avg;
    avg.reserve(res.samples.size());
    for (const auto& st : res.samples) avg.push_back(static_cast<double>(st.total()) / sites);
    return avg;
  });

  const std::size_t g = t_grid.size();
  rep.mean.label = "site_mean";
  rep.mean.grid.assign(t_grid.begin(), t_grid.end());
  for (std::size_t i = 0; i < g; ++i) {
    stats::RunningStats rs;
    for (const auto& p : paths) rs.add(p[i]);
    rep.mean.values.push_back(rs.mean());
    rep.mean.std_error.push_back(rs.sem());
  }

  if (rep.which == SpatialCase::CaseI) {
    const std::size_t start = g / 2;
    std::vector<double> xs(t_grid.begin() + static_cast<std::ptrdiff_t>(start), t_grid.end());
    stats::RunningStats slopes;
    for (const auto& p : paths) {
      std::vector<double> ys(p.begin() + static_cast<std::ptrdiff_t>(start), p.end());
      slopes.add(stats::linear_fit(xs, ys).slope);
    }
    rep.slope = slopes.mean();
    rep.slope_se = slopes.sem();
    rep.growth_ok = rep.slope >= rep.delta1 - 3.0 * rep.slope_se;
  } else if (rep.which == SpatialCase::CaseII) {
    rep.bound = rep.k_sup / rep.mortality_gap;
    rep.bound_ok = rep.mean.values.back() <= rep.bound + 3.0 * rep.mean.std_error.back();
    stats::RunningStats diff;
    for (const auto& p : paths) diff.add(p[g - 1] - p[g - 2]);
    rep.plateau_diff = diff.mean();
    rep.plateau_se = diff.sem();
    rep.plateau_ok = std::abs(rep.plateau_diff) <= 3.0 * rep.plateau_se;
  }
  return rep;
}

}  // namespace branchimm
