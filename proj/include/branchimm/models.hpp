#pragma once

// Shared domain types for the Galton-Watson-with-immigration family of
// models: rate parameters, site spaces, migration kernels, population states
// and random environment descriptors.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace branchimm {

/// Raised for malformed model descriptors and configuration files.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string fmt_num(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

inline std::string fmt_offset(const std::vector<int>& z) {
  std::string s = "(";
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(z[i]);
  }
  return s + ")";
}

}  // namespace detail

/// Per-particle birth and death rates, per-site immigration rate and the
/// per-particle migration rate.
struct RateParams {
  double beta = 0.0;
  double mu = 0.0;
  double k = 0.0;
  double kappa = 1.0;

  /// Excess mortality mu - beta; positive in the subcritical regime.
  double gap() const { return mu - beta; }

  bool operator==(const RateParams&) const = default;
};

struct KernelEntry {
  std::vector<int> offset;
  double weight = 0.0;

  bool operator==(const KernelEntry&) const = default;
};

/// Symmetric probability kernel a(z) on Z^d with finite support. a(0) is
/// never stored.
struct LatticeKernel {
  int dim = 1;
  std::vector<KernelEntry> support;

  static LatticeKernel nearest_neighbor(int d) {
    LatticeKernel kern;
    kern.dim = d;
    for (int axis = 0; axis < d; ++axis) {
      for (int sign : {+1, -1}) {
        KernelEntry e;
        e.offset.assign(static_cast<std::size_t>(d), 0);
        e.offset[static_cast<std::size_t>(axis)] = sign;
        e.weight = 1.0 / (2.0 * d);
        kern.support.push_back(std::move(e));
      }
    }
    return kern;
  }

  double total_weight() const {
    double s = 0.0;
    for (const auto& e : support) s += e.weight;
    return s;
  }

  /// Largest |z_i| over the support.
  int max_offset() const {
    int m = 0;
    for (const auto& e : support)
      for (int c : e.offset) m = std::max(m, std::abs(c));
    return m;
  }

  /// Weight stored for offset z (0 when absent).
  double weight_at(const std::vector<int>& z) const {
    for (const auto& e : support)
      if (e.offset == z) return e.weight;
    return 0.0;
  }

  bool operator==(const LatticeKernel&) const = default;
};

struct SingleSite {
  bool operator==(const SingleSite&) const = default;
};

/// Finite site set X with transition rates a(x, y) for x != y. Diagonal
/// entries are ignored.
struct FiniteSet {
  std::vector<std::vector<double>> rates;
  bool require_symmetric = false;

  std::size_t size() const { return rates.size(); }

  double out_rate(std::size_t x) const {
    double s = 0.0;
    for (std::size_t y = 0; y < rates[x].size(); ++y)
      if (y != x) s += rates[x][y];
    return s;
  }

  /// Ring of n sites with nearest-neighbour jump rate `rate` each way.
  static FiniteSet ring(std::size_t n, double rate) {
    FiniteSet fs;
    fs.rates.assign(n, std::vector<double>(n, 0.0));
    if (n < 2) return fs;
    for (std::size_t x = 0; x < n; ++x) {
      fs.rates[x][(x + 1) % n] += rate;
      fs.rates[x][(x + n - 1) % n] += rate;
    }
    fs.require_symmetric = true;
    return fs;
  }

  /// Complete graph: every ordered pair jumps at `rate`.
  static FiniteSet complete(std::size_t n, double rate) {
    FiniteSet fs;
    fs.rates.assign(n, std::vector<double>(n, rate));
    for (std::size_t x = 0; x < n; ++x) fs.rates[x][x] = 0.0;
    fs.require_symmetric = true;
    return fs;
  }

  bool operator==(const FiniteSet&) const = default;
};

/// Discrete torus (Z / L Z)^d carrying a migration kernel. Sites are indexed
/// in row-major order.
struct Torus {
  int side = 0;
  int dim = 1;
  LatticeKernel kernel;

  std::size_t sites() const {
    std::size_t n = 1;
    for (int i = 0; i < dim; ++i) n *= static_cast<std::size_t>(side);
    return n;
  }

  std::vector<int> coords(std::size_t index) const {
    std::vector<int> c(static_cast<std::size_t>(dim));
    for (int i = dim - 1; i >= 0; --i) {
      c[static_cast<std::size_t>(i)] = static_cast<int>(index % static_cast<std::size_t>(side));
      index /= static_cast<std::size_t>(side);
    }
    return c;
  }

  std::size_t index(const std::vector<int>& c) const {
    std::size_t idx = 0;
    for (int i = 0; i < dim; ++i) {
      int v = c[static_cast<std::size_t>(i)] % side;
      if (v < 0) v += side;
      idx = idx * static_cast<std::size_t>(side) + static_cast<std::size_t>(v);
    }
    return idx;
  }

  /// Site reached from `from` by offset z, with wrap-around.
  std::size_t shift(std::size_t from, const std::vector<int>& z) const {
    auto c = coords(from);
    for (std::size_t i = 0; i < c.size(); ++i) c[i] += z[i];
    return index(c);
  }

  /// Canonical lag representative in (-L/2, L/2]^d.
  std::vector<int> lag(std::size_t index_value) const {
    auto c = coords(index_value);
    for (auto& v : c)
      if (2 * v > side) v -= side;
    return c;
  }

  bool operator==(const Torus&) const = default;
};

using SiteSpace = std::variant<SingleSite, FiniteSet, Torus>;

inline std::size_t site_count(const SiteSpace& space) {
  return std::visit(
      [](const auto& s) -> std::size_t {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, SingleSite>) {
          return 1;
        } else if constexpr (std::is_same_v<T, FiniteSet>) {
          return s.size();
        } else {
          return s.sites();
        }
      },
      space);
}

/// Occupation numbers at a given time.
struct PopulationState {
  double time = 0.0;
  std::vector<std::uint64_t> counts;

  std::uint64_t total() const {
    return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
  }

  bool operator==(const PopulationState&) const = default;
};

/// Time grid plus a moment curve. std_error is zero for analytic curves.
struct MomentSeries {
  std::string label;
  std::vector<double> grid;
  std::vector<double> values;
  std::vector<double> std_error;

  bool well_formed() const {
    if (values.size() != grid.size() || std_error.size() != grid.size()) return false;
    for (std::size_t i = 1; i < grid.size(); ++i)
      if (!(grid[i] > grid[i - 1])) return false;
    return std::all_of(std_error.begin(), std_error.end(), [](double s) { return s >= 0.0; });
  }
};

// --------------------------------------------------------------------------
// Random environments

/// Law of one rate component in a population-level environment.
struct RateLaw {
  enum class Kind { Constant, TwoPoint, Uniform, Triangular };

  Kind kind = Kind::Constant;
  double a = 1.0;  // Constant value, first atom, lower end
  double b = 1.0;  // second atom, upper end
  double c = 1.0;  // triangular mode
  double p = 0.5;  // probability of the first atom

  static RateLaw constant(double v) { return {Kind::Constant, v, v, v, 1.0}; }
  static RateLaw two_point(double lo, double hi, double p_lo = 0.5) {
    return {Kind::TwoPoint, lo, hi, lo, p_lo};
  }
  static RateLaw uniform(double lo, double hi) { return {Kind::Uniform, lo, hi, lo, 0.5}; }
  static RateLaw triangular(double lo, double mode, double hi) {
    return {Kind::Triangular, lo, hi, mode, 0.5};
  }

  double lower() const { return kind == Kind::Constant ? a : std::min(a, b); }
  double upper() const { return kind == Kind::Constant ? a : std::max(a, b); }

  /// Maps a uniform variate in (0, 1) to a draw from the law.
  double quantile(double u) const {
    switch (kind) {
      case Kind::Constant:
        return a;
      case Kind::TwoPoint:
        return u < p ? a : b;
      case Kind::Uniform:
        return a + (b - a) * u;
      case Kind::Triangular: {
        const double f = (c - a) / (b - a);
        if (u < f) return a + std::sqrt(u * (b - a) * (c - a));
        return b - std::sqrt((1.0 - u) * (b - a) * (b - c));
      }
    }
    return a;
  }

  bool degenerate() const {
    return kind == Kind::Constant || (kind != Kind::TwoPoint && a == b) ||
           (kind == Kind::TwoPoint && (a == b || p == 0.0 || p == 1.0));
  }

  bool operator==(const RateLaw&) const = default;
};

/// i.i.d. rate triples (mu, beta, k)(n) indexed by the population level n.
struct ByPopulationLevel {
  RateLaw beta;
  RateLaw mu;
  RateLaw k;
  double c_minus = 0.0;
  double c_plus = std::numeric_limits<double>::infinity();
  std::uint64_t env_seed = 0;

  bool operator==(const ByPopulationLevel&) const = default;
};

/// Environment driven by a finite continuous-time Markov chain; each state
/// carries its own birth, death and immigration rates.
struct MarkovChainEnv {
  std::vector<std::vector<double>> generator;  // off-diagonal switch rates
  std::vector<double> beta;
  std::vector<double> mu;
  std::vector<double> k;
  std::size_t initial_state = 0;

  std::size_t states() const { return beta.size(); }

  double switch_rate(std::size_t x) const {
    double s = 0.0;
    for (std::size_t y = 0; y < generator[x].size(); ++y)
      if (y != x) s += generator[x][y];
    return s;
  }

  static MarkovChainEnv two_state(double b1, double b2, double m1, double m2, double k1,
                                  double k2, double alpha1, double alpha2) {
    MarkovChainEnv env;
    env.generator = {{0.0, alpha1}, {alpha2, 0.0}};
    env.beta = {b1, b2};
    env.mu = {m1, m2};
    env.k = {k1, k2};
    return env;
  }

  bool operator==(const MarkovChainEnv&) const = default;
};

/// Piecewise-constant immigration field k(t, x): values[i] holds the per-site
/// rates on [breakpoints[i], breakpoints[i+1]); the last piece extends to
/// infinity.
struct ImmigrationSchedule {
  std::vector<double> breakpoints{0.0};
  std::vector<std::vector<double>> values;

  static ImmigrationSchedule constant(std::size_t sites, double k) {
    ImmigrationSchedule s;
    s.values.assign(1, std::vector<double>(sites, k));
    return s;
  }

  std::size_t piece(double t) const {
    auto it = std::upper_bound(breakpoints.begin(), breakpoints.end(), t);
    if (it == breakpoints.begin()) return 0;
    return static_cast<std::size_t>(it - breakpoints.begin()) - 1;
  }

  double at(double t, std::size_t site) const { return values[piece(t)][site]; }

  double sup() const {
    double m = 0.0;
    for (const auto& row : values)
      for (double v : row) m = std::max(m, v);
    return m;
  }

  double inf() const {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& row : values)
      for (double v : row) m = std::min(m, v);
    return m;
  }

  bool operator==(const ImmigrationSchedule&) const = default;
};

/// Spatial environment on a torus: per-site birth and death, piecewise
/// constant immigration bounded in [delta1, delta2].
struct SpatialField {
  Torus torus;
  std::vector<double> beta;
  std::vector<double> mu;
  ImmigrationSchedule k;
  double delta1 = 0.0;
  double delta2 = 0.0;
  double kappa = 1.0;

  bool operator==(const SpatialField&) const = default;
};

using EnvironmentSpec = std::variant<ByPopulationLevel, MarkovChainEnv, SpatialField>;

// --------------------------------------------------------------------------
// Validation

struct ValidationReport {
  std::vector<std::string> issues;
  /// 1 - sum of stored kernel weights (mass lost to truncation).
  double kernel_mass_deficit = 0.0;

  bool ok() const { return issues.empty(); }

  bool mentions(const std::string& needle) const {
    return std::any_of(issues.begin(), issues.end(),
                       [&](const std::string& s) { return s.find(needle) != std::string::npos; });
  }

  void merge(const ValidationReport& other) {
    issues.insert(issues.end(), other.issues.begin(), other.issues.end());
    kernel_mass_deficit = std::max(kernel_mass_deficit, other.kernel_mass_deficit);
  }

  std::string to_string() const {
    std::string s;
    for (const auto& i : issues) s += i + "\n";
    return s;
  }
};

inline constexpr double kKernelSumTolerance = 1e-12;

inline void check_rate(ValidationReport& r, const std::string& name, double v) {
  if (!std::isfinite(v))
    r.issues.push_back(name + " not finite");
  else if (v < 0.0)
    r.issues.push_back(name + " negative");
}

inline ValidationReport validate(const RateParams& params) {
  ValidationReport r;
  check_rate(r, "beta", params.beta);
  check_rate(r, "mu", params.mu);
  check_rate(r, "k", params.k);
  check_rate(r, "kappa", params.kappa);
  return r;
}

inline ValidationReport validate(const LatticeKernel& kernel) {
  ValidationReport r;
  if (kernel.dim < 1) r.issues.push_back("kernel dimension must be positive");
  if (kernel.support.empty()) r.issues.push_back("kernel support empty");
  for (const auto& e : kernel.support) {
    if (static_cast<int>(e.offset.size()) != kernel.dim) {
      r.issues.push_back("kernel offset " + detail::fmt_offset(e.offset) + " has wrong dimension");
      continue;
    }
    if (std::all_of(e.offset.begin(), e.offset.end(), [](int c) { return c == 0; }))
      r.issues.push_back("kernel stores zero offset");
    if (!(e.weight > 0.0) || !std::isfinite(e.weight))
      r.issues.push_back("kernel weight at " + detail::fmt_offset(e.offset) + " not positive");
    std::vector<int> neg(e.offset.size());
    std::transform(e.offset.begin(), e.offset.end(), neg.begin(), [](int c) { return -c; });
    const double w_neg = kernel.weight_at(neg);
    if (std::abs(w_neg - e.weight) > kKernelSumTolerance)
      r.issues.push_back("kernel not symmetric at offset " + detail::fmt_offset(e.offset));
  }
  for (std::size_t i = 0; i < kernel.support.size(); ++i)
    for (std::size_t j = i + 1; j < kernel.support.size(); ++j)
      if (kernel.support[i].offset == kernel.support[j].offset)
        r.issues.push_back("kernel offset " + detail::fmt_offset(kernel.support[i].offset) +
                           " listed twice");
  const double total = kernel.total_weight();
  r.kernel_mass_deficit = 1.0 - total;
  if (std::abs(total - 1.0) > kKernelSumTolerance)
    r.issues.push_back("kernel weights sum " + detail::fmt_num(total) + " ≠ 1");
  return r;
}

inline ValidationReport validate(const FiniteSet& fs) {
  ValidationReport r;
  const std::size_t n = fs.size();
  if (n == 0) r.issues.push_back("finite set is empty");
  for (std::size_t x = 0; x < n; ++x) {
    if (fs.rates[x].size() != n) {
      r.issues.push_back("transition matrix is not square");
      return r;
    }
    for (std::size_t y = 0; y < n; ++y) {
      if (x == y) continue;
      const double v = fs.rates[x][y];
      if (!std::isfinite(v) || v < 0.0)
        r.issues.push_back("transition rate a(" + std::to_string(x) + "," + std::to_string(y) +
                           ") negative or not finite");
      if (fs.require_symmetric && std::abs(v - fs.rates[y][x]) > 1e-12)
        r.issues.push_back("transition matrix not symmetric at (" + std::to_string(x) + "," +
                           std::to_string(y) + ")");
    }
  }
  if (n > 0) {
    const double common = fs.out_rate(0);
    for (std::size_t x = 1; x < n; ++x) {
      const double rx = fs.out_rate(x);
      if (std::abs(rx - common) > 1e-12 * std::max(1.0, std::abs(common)))
        r.issues.push_back("row " + std::to_string(x) + " total jump rate " + detail::fmt_num(rx) +
                           " ≠ common rate " + detail::fmt_num(common));
    }
  }
  return r;
}

inline ValidationReport validate(const Torus& torus) {
  ValidationReport r = validate(torus.kernel);
  if (torus.dim < 1) r.issues.push_back("torus dimension must be positive");
  if (torus.kernel.dim != torus.dim)
    r.issues.push_back("kernel dimension " + std::to_string(torus.kernel.dim) +
                       " differs from torus dimension " + std::to_string(torus.dim));
  const int need = 3 * torus.kernel.max_offset();
  if (torus.side < std::max(need, 1))
    r.issues.push_back("torus side " + std::to_string(torus.side) + " < 3·max offset " +
                       std::to_string(torus.kernel.max_offset()));
  return r;
}

inline ValidationReport validate(const SiteSpace& space) {
  return std::visit(
      [](const auto& s) -> ValidationReport {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, SingleSite>) {
          return {};
        } else {
          return validate(s);
        }
      },
      space);
}

/// Checks every invariant of the rates and the site space.
inline ValidationReport validate(const RateParams& params, const SiteSpace& space) {
  ValidationReport r = validate(params);
  r.merge(validate(space));
  return r;
}

inline ValidationReport validate(const RateLaw& law, const std::string& name) {
  ValidationReport r;
  check_rate(r, name + " law lower end", law.lower());
  check_rate(r, name + " law upper end", law.upper());
  if (law.kind == RateLaw::Kind::TwoPoint && !(law.p >= 0.0 && law.p <= 1.0))
    r.issues.push_back(name + " two-point probability outside [0,1]");
  if (law.kind == RateLaw::Kind::Triangular && !(law.a <= law.c && law.c <= law.b && law.a < law.b))
    r.issues.push_back(name + " triangular law needs lower <= mode <= upper");
  if (law.kind == RateLaw::Kind::Uniform && !(law.a <= law.b))
    r.issues.push_back(name + " uniform law needs lower <= upper");
  return r;
}

inline ValidationReport validate(const EnvironmentSpec& env) {
  return std::visit(
      [](const auto& e) -> ValidationReport {
        using T = std::decay_t<decltype(e)>;
        ValidationReport r;
        if constexpr (std::is_same_v<T, ByPopulationLevel>) {
          r.merge(validate(e.beta, "beta"));
          r.merge(validate(e.mu, "mu"));
          r.merge(validate(e.k, "k"));
          if (!(e.c_minus > 0.0)) r.issues.push_back("C- must be positive");
          if (!(e.c_plus < std::numeric_limits<double>::infinity()) || !(e.c_plus >= e.c_minus))
            r.issues.push_back("C+ must be finite and >= C-");
          for (const auto* law : {&e.beta, &e.mu, &e.k})
            if (law->lower() < e.c_minus || law->upper() > e.c_plus)
              r.issues.push_back("environment rates leave [C-, C+]");
        } else if constexpr (std::is_same_v<T, MarkovChainEnv>) {
          const std::size_t n = e.states();
          if (n == 0) r.issues.push_back("environment has no states");
          if (e.mu.size() != n || e.k.size() != n || e.generator.size() != n)
            r.issues.push_back("environment arrays have inconsistent sizes");
          else {
            for (std::size_t x = 0; x < n; ++x) {
              check_rate(r, "beta[" + std::to_string(x) + "]", e.beta[x]);
              check_rate(r, "mu[" + std::to_string(x) + "]", e.mu[x]);
              check_rate(r, "k[" + std::to_string(x) + "]", e.k[x]);
              if (e.generator[x].size() != n) {
                r.issues.push_back("environment generator is not square");
                break;
              }
              for (std::size_t y = 0; y < n; ++y)
                if (y != x) check_rate(r, "switch rate", e.generator[x][y]);
            }
            if (e.initial_state >= n) r.issues.push_back("initial environment state out of range");
          }
        } else {
          r.merge(validate(e.torus));
          const std::size_t n = e.torus.sites();
          if (e.beta.size() != n || e.mu.size() != n)
            r.issues.push_back("field arrays do not match the torus size");
          for (double v : e.beta) check_rate(r, "beta field", v);
          for (double v : e.mu) check_rate(r, "mu field", v);
          check_rate(r, "kappa", e.kappa);
          if (!(e.delta1 > 0.0 && e.delta1 < e.delta2 && std::isfinite(e.delta2)))
            r.issues.push_back("need 0 < delta1 < delta2 < inf");
          if (e.k.values.size() != e.k.breakpoints.size())
            r.issues.push_back("immigration schedule pieces do not match breakpoints");
          for (std::size_t i = 1; i < e.k.breakpoints.size(); ++i)
            if (!(e.k.breakpoints[i] > e.k.breakpoints[i - 1]))
              r.issues.push_back("immigration breakpoints not increasing");
          for (const auto& row : e.k.values) {
            if (row.size() != n) {
              r.issues.push_back("immigration piece does not match the torus size");
              break;
            }
            for (double v : row)
              if (v < e.delta1 || v > e.delta2) {
                r.issues.push_back("immigration rate leaves [delta1, delta2]");
                break;
              }
          }
        }
        return r;
      },
      env);
}

}  // namespace branchimm
