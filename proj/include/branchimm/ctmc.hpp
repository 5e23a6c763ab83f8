#pragma once

// Exact event-by-event simulation of the birth / death / immigration /
// migration chains, with a seeded replica contract:
//   - replica i of an ensemble with master seed M uses derive_seed(M, i);
//   - identical (model, seed, grid) gives a bit-identical ReplicaResult;
//   - grid samples are the cadlag value just after the last event <= t.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "branchimm/models.hpp"
#include "branchimm/rng.hpp"

namespace branchimm {

/// Hard cap on the number of particles in one replica.
inline constexpr std::uint64_t kPopulationLimit = std::uint64_t{1} << 32;

/// A replica grew past kPopulationLimit. Typical of supercritical runs.
class PopulationOverflow : public std::runtime_error {
 public:
  PopulationOverflow(std::uint64_t seed, double time)
      : std::runtime_error("population overflow (seed " + std::to_string(seed) + ", t=" +
                           std::to_string(time) + ")"),
        seed_(seed),
        time_(time) {}

  std::uint64_t seed() const { return seed_; }
  double time() const { return time_; }

 private:
  std::uint64_t seed_;
  double time_;
};

enum class EventKind : char { Birth = 'B', Death = 'D', Jump = 'J' };

/// Immigration and environment switches are logged as births (immigration) or
/// not at all (switches do not change occupation numbers).
struct EventRecord {
  double time = 0.0;
  std::size_t site = 0;
  EventKind kind = EventKind::Birth;
  std::optional<std::size_t> target;
};

using EventSink = std::function<void(const EventRecord&)>;

/// `time<TAB>site<TAB>event<TAB>target_site`, with "-" as target for births
/// and deaths.
inline std::string format_event(const EventRecord& e) {
  std::ostringstream os;
  os.precision(17);
  os << e.time << '\t' << e.site << '\t' << static_cast<char>(e.kind) << '\t';
  if (e.target)
    os << *e.target;
  else
    os << '-';
  return os.str();
}

struct ReplicaResult {
  std::uint64_t seed = 0;
  std::vector<PopulationState> samples;
  PopulationState final_state;
  std::uint64_t events = 0;
  /// Environment state at each grid time (Markov chain environments only).
  std::vector<std::size_t> env_states;

  bool operator==(const ReplicaResult&) const = default;
};

struct InitialCondition {
  enum class Kind { Fixed, Poisson };

  Kind kind = Kind::Fixed;
  std::vector<std::uint64_t> counts;  // one entry broadcasts to every site
  double poisson_mean = 0.0;

  static InitialCondition fixed(std::uint64_t n) { return {Kind::Fixed, {n}, 0.0}; }
  static InitialCondition fixed(std::vector<std::uint64_t> per_site) {
    return {Kind::Fixed, std::move(per_site), 0.0};
  }
  static InitialCondition poisson(double mean) { return {Kind::Poisson, {}, mean}; }

  std::vector<std::uint64_t> draw(std::size_t sites, Rng& rng) const {
    std::vector<std::uint64_t> out(sites, 0);
    if (kind == Kind::Poisson) {
      for (auto& c : out) c = rng.poisson(poisson_mean);
    } else if (counts.size() == 1) {
      std::fill(out.begin(), out.end(), counts.front());
    } else if (counts.size() == sites) {
      out = counts;
    } else if (!counts.empty()) {
      throw std::invalid_argument("initial condition has " + std::to_string(counts.size()) +
                                  " entries for " + std::to_string(sites) + " sites");
    }
    return out;
  }

  bool operator==(const InitialCondition&) const = default;
};

// --------------------------------------------------------------------------
// Site dynamics: the common description used by the multi-site engine.

struct JumpTarget {
  std::size_t site = 0;
  double rate = 0.0;  // per particle
};

struct SiteDynamics {
  std::vector<double> beta;
  std::vector<double> mu;
  std::vector<std::vector<JumpTarget>> jumps;
  ImmigrationSchedule immigration;

  std::size_t sites() const { return beta.size(); }

  double jump_rate(std::size_t x) const {
    double s = 0.0;
    for (const auto& j : jumps[x]) s += j.rate;
    return s;
  }

  static SiteDynamics single(const RateParams& p) {
    SiteDynamics d;
    d.beta = {p.beta};
    d.mu = {p.mu};
    d.jumps.resize(1);
    d.immigration = ImmigrationSchedule::constant(1, p.k);
    return d;
  }

  /// Per-site rates on a finite set; a(x, y) are per-particle jump rates.
  static SiteDynamics finite(std::span<const RateParams> per_site, const FiniteSet& fs) {
    const std::size_t n = fs.size();
    if (per_site.size() != n && per_site.size() != 1)
      throw std::invalid_argument("finite space: need one RateParams per site");
    SiteDynamics d;
    d.jumps.resize(n);
    d.immigration.values.assign(1, std::vector<double>(n, 0.0));
    for (std::size_t x = 0; x < n; ++x) {
      const RateParams& p = per_site.size() == 1 ? per_site[0] : per_site[x];
      d.beta.push_back(p.beta);
      d.mu.push_back(p.mu);
      d.immigration.values[0][x] = p.k;
      for (std::size_t y = 0; y < n; ++y)
        if (y != x && fs.rates[x][y] > 0.0) d.jumps[x].push_back({y, fs.rates[x][y]});
    }
    return d;
  }

  static SiteDynamics torus(const RateParams& p, const Torus& torus) {
    const std::size_t n = torus.sites();
    SiteDynamics d;
    d.beta.assign(n, p.beta);
    d.mu.assign(n, p.mu);
    d.immigration = ImmigrationSchedule::constant(n, p.k);
    d.jumps.resize(n);
    for (std::size_t x = 0; x < n; ++x)
      for (const auto& e : torus.kernel.support)
        d.jumps[x].push_back({torus.shift(x, e.offset), p.kappa * e.weight});
    return d;
  }

  static SiteDynamics field(const SpatialField& f) {
    RateParams base;
    base.kappa = f.kappa;
    SiteDynamics d = torus(base, f.torus);
    d.beta = f.beta;
    d.mu = f.mu;
    d.immigration = f.k;
    return d;
  }
};

struct SiteEventRates {
  double birth = 0.0;  // beta n + k
  double death = 0.0;  // mu n
  double jump = 0.0;   // kappa n (sum over targets)

  double total() const { return birth + death + jump; }
};

struct EventRateTable {
  std::vector<SiteEventRates> sites;
  double total = 0.0;
};

/// Per-site event rates of the chain in state `counts` at time t.
inline EventRateTable event_rate_table(const SiteDynamics& dyn, std::span<const std::uint64_t> counts,
                                       double t = 0.0) {
  EventRateTable tab;
  tab.sites.resize(dyn.sites());
  const std::size_t piece = dyn.immigration.piece(t);
  for (std::size_t x = 0; x < dyn.sites(); ++x) {
    const double n = static_cast<double>(counts[x]);
    auto& s = tab.sites[x];
    s.birth = dyn.beta[x] * n + dyn.immigration.values[piece][x];
    s.death = dyn.mu[x] * n;
    s.jump = dyn.jump_rate(x) * n;
    tab.total += s.total();
  }
  return tab;
}

namespace detail {

/// Fenwick tree over non-negative site rates with prefix search.
class RateTree {
 public:
  void build(std::vector<double> values) {
    values_ = std::move(values);
    const std::size_t n = values_.size();
    tree_.assign(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      tree_[i + 1] += values_[i];
      const std::size_t parent = (i + 1) + ((i + 1) & (~(i + 1) + 1));
      if (parent <= n) tree_[parent] += tree_[i + 1];
    }
    positive_ = static_cast<std::size_t>(
        std::count_if(values_.begin(), values_.end(), [](double v) { return v > 0.0; }));
    top_ = 1;
    while (top_ * 2 <= n) top_ *= 2;
  }

  void set(std::size_t i, double v) {
    const double delta = v - values_[i];
    if (values_[i] > 0.0) --positive_;
    if (v > 0.0) ++positive_;
    values_[i] = v;
    for (std::size_t j = i + 1; j < tree_.size(); j += j & (~j + 1)) tree_[j] += delta;
  }

  double value(std::size_t i) const { return values_[i]; }
  const std::vector<double>& values() const { return values_; }

  double total() const {
    if (positive_ == 0) return 0.0;
    double s = 0.0;
    for (std::size_t j = tree_.size() - 1; j > 0; j -= j & (~j + 1)) s += tree_[j];
    return std::max(s, 0.0);
  }

  /// Smallest i with prefix(i+1) > u; lands on a site with positive rate.
  std::size_t find(double u) const {
    std::size_t pos = 0;
    for (std::size_t step = top_; step > 0; step >>= 1) {
      const std::size_t next = pos + step;
      if (next < tree_.size() && tree_[next] <= u) {
        pos = next;
        u -= tree_[next];
      }
    }
    std::size_t i = std::min(pos, values_.size() - 1);
    if (values_[i] > 0.0) return i;
    for (std::size_t j = i; j-- > 0;)
      if (values_[j] > 0.0) return j;
    for (std::size_t j = i + 1; j < values_.size(); ++j)
      if (values_[j] > 0.0) return j;
    return i;
  }

 private:
  std::vector<double> values_;
  std::vector<double> tree_;
  std::size_t positive_ = 0;
  std::size_t top_ = 1;
};

inline void check_grid(std::span<const double> grid, double horizon) {
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] >= 0.0)) throw std::invalid_argument("grid times must be non-negative");
    if (i > 0 && grid[i] < grid[i - 1]) throw std::invalid_argument("grid must be non-decreasing");
  }
  if (!grid.empty() && grid.back() > horizon)
    throw std::invalid_argument("horizon must be >= max(grid)");
}

inline void require_valid(const ValidationReport& r) {
  if (!r.ok()) throw std::invalid_argument("invalid model: " + r.to_string());
}

}  // namespace detail

/// Runs the multi-site chain from `counts` using `rng`. The engine keeps the
/// per-site total rates in a Fenwick tree, updated per event and rebuilt
/// every 4096 events and at every immigration breakpoint.
inline ReplicaResult simulate_sites(const SiteDynamics& dyn, std::vector<std::uint64_t> counts,
                                    double horizon, std::span<const double> grid, Rng& rng,
                                    std::uint64_t seed, const EventSink& sink = {}) {
  detail::check_grid(grid, horizon);
  const std::size_t n = dyn.sites();
  if (counts.size() != n) throw std::invalid_argument("initial counts do not match the site count");

  std::vector<double> jump_total(n);
  std::vector<std::vector<double>> jump_cum(n);
  for (std::size_t x = 0; x < n; ++x) {
    double acc = 0.0;
    for (const auto& j : dyn.jumps[x]) {
      acc += j.rate;
      jump_cum[x].push_back(acc);
    }
    jump_total[x] = acc;
  }

  const auto& bps = dyn.immigration.breakpoints;
  std::size_t piece = dyn.immigration.piece(0.0);
  auto next_break = [&]() {
    return piece + 1 < bps.size() ? bps[piece + 1] : std::numeric_limits<double>::infinity();
  };
  auto site_rate = [&](std::size_t x) {
    return (dyn.beta[x] + dyn.mu[x] + jump_total[x]) * static_cast<double>(counts[x]) +
           dyn.immigration.values[piece][x];
  };
  detail::RateTree tree;
  auto rebuild = [&]() {
    std::vector<double> r(n);
    for (std::size_t x = 0; x < n; ++x) r[x] = site_rate(x);
    tree.build(std::move(r));
  };
  rebuild();

  std::uint64_t total = std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
  ReplicaResult res;
  res.seed = seed;
  res.samples.reserve(grid.size());
  std::size_t gi = 0;
  double t = 0.0;
  auto record_before = [&](double limit) {
    while (gi < grid.size() && grid[gi] < limit) {
      res.samples.push_back({grid[gi], counts});
      ++gi;
    }
  };

  std::uint64_t since_rebuild = 0;
  while (true) {
    const double rate = tree.total();
    const double t_next = rate > 0.0 ? t + rng.exponential(rate) : std::numeric_limits<double>::infinity();
    const double brk = next_break();
    if (brk <= horizon && t_next >= brk) {
      record_before(brk);
      t = brk;
      ++piece;
      rebuild();
      since_rebuild = 0;
      continue;
    }
    if (t_next > horizon) break;
    record_before(t_next);
    t = t_next;

    const std::size_t x = tree.find(rng.uniform() * rate);
    const double nx = static_cast<double>(counts[x]);
    const double birth = dyn.beta[x] * nx + dyn.immigration.values[piece][x];
    const double death = dyn.mu[x] * nx;
    const double v = rng.uniform() * tree.value(x);
    if (v < birth) {
      ++counts[x];
      if (++total > kPopulationLimit) throw PopulationOverflow(seed, t);
      tree.set(x, site_rate(x));
      if (sink) sink({t, x, EventKind::Birth, std::nullopt});
    } else {
      if (counts[x] == 0) throw std::logic_error("death or jump selected on an empty site");
      if (v < birth + death || jump_total[x] <= 0.0) {
        --counts[x];
        --total;
        tree.set(x, site_rate(x));
        if (sink) sink({t, x, EventKind::Death, std::nullopt});
      } else {
        const auto& cum = jump_cum[x];
        const double w = rng.uniform() * jump_total[x];
        auto it = std::upper_bound(cum.begin(), cum.end(), w);
        if (it == cum.end()) --it;
        const std::size_t y = dyn.jumps[x][static_cast<std::size_t>(it - cum.begin())].site;
        --counts[x];
        ++counts[y];
        tree.set(x, site_rate(x));
        tree.set(y, site_rate(y));
        if (sink) sink({t, x, EventKind::Jump, y});
      }
    }
    ++res.events;
    if (++since_rebuild >= 4096) {
      rebuild();
      since_rebuild = 0;
    }
  }
  record_before(std::numeric_limits<double>::infinity());
  res.final_state = {horizon, counts};
  return res;
}

/// Birth-death chain on {0, 1, ...}: up at beta n + k, down at mu n.
inline ReplicaResult simulate_single_site(const RateParams& params, std::uint64_t n0, double horizon,
                                          std::span<const double> grid, std::uint64_t seed,
                                          const EventSink& sink = {}) {
  detail::require_valid(validate(params));
  detail::check_grid(grid, horizon);
  Rng rng(seed);
  ReplicaResult res;
  res.seed = seed;
  res.samples.reserve(grid.size());
  std::uint64_t n = n0;
  double t = 0.0;
  std::size_t gi = 0;
  const double beta = params.beta, mu = params.mu, k = params.k;
  while (true) {
    const double nd = static_cast<double>(n);
    const double up = beta * nd + k;
    const double rate = up + mu * nd;
    if (!(rate > 0.0)) break;
    const double t_next = t + rng.exponential(rate);
    if (t_next > horizon) break;
    while (gi < grid.size() && grid[gi] < t_next) {
      res.samples.push_back({grid[gi], {n}});
      ++gi;
    }
    t = t_next;
    if (rng.uniform() * rate < up) {
      if (++n > kPopulationLimit) throw PopulationOverflow(seed, t);
      if (sink) sink({t, 0, EventKind::Birth, std::nullopt});
    } else {
      if (n == 0) throw std::logic_error("death selected on an empty site");
      --n;
      if (sink) sink({t, 0, EventKind::Death, std::nullopt});
    }
    ++res.events;
  }
  for (; gi < grid.size(); ++gi) res.samples.push_back({grid[gi], {n}});
  res.final_state = {horizon, {n}};
  return res;
}

/// Fraction of time one path of the single-site chain spends at each level
/// during its first `events` events, started from n0.
inline std::vector<double> occupation_measure(const RateParams& params, std::uint64_t n0, std::uint64_t events,
                                              std::uint64_t seed) {
  detail::require_valid(validate(params));
  Rng rng(seed);
  std::vector<double> time;
  std::uint64_t n = n0;
  double total = 0.0;
  for (std::uint64_t e = 0; e < events; ++e) {
    const double nd = static_cast<double>(n);
    const double up = params.beta * nd + params.k;
    const double rate = up + params.mu * nd;
    if (!(rate > 0.0)) break;
    const double hold = rng.exponential(rate);
    if (time.size() <= n) time.resize(n + 1, 0.0);
    time[n] += hold;
    total += hold;
    if (rng.uniform() * rate < up) {
      if (++n > kPopulationLimit) throw PopulationOverflow(seed, total);
    } else {
      --n;
    }
  }
  if (total > 0.0)
    for (auto& t : time) t /= total;
  return time;
}

/// Vector chain on a finite site set with per-site rates.
inline ReplicaResult simulate_finite_space(std::span<const RateParams> per_site, const FiniteSet& space,
                                           const InitialCondition& n0, double horizon,
                                           std::span<const double> grid, std::uint64_t seed,
                                           const EventSink& sink = {}) {
  for (const auto& p : per_site) detail::require_valid(validate(p));
  detail::require_valid(validate(space));
  Rng rng(seed);
  auto dyn = SiteDynamics::finite(per_site, space);
  return simulate_sites(dyn, n0.draw(space.size(), rng), horizon, grid, rng, seed, sink);
}

/// Branching random walk with immigration on a torus.
inline ReplicaResult simulate_torus(const RateParams& params, const Torus& torus,
                                    const InitialCondition& n0, double horizon,
                                    std::span<const double> grid, std::uint64_t seed,
                                    const EventSink& sink = {}) {
  detail::require_valid(validate(params, torus));
  Rng rng(seed);
  auto dyn = SiteDynamics::torus(params, torus);
  return simulate_sites(dyn, n0.draw(torus.sites(), rng), horizon, grid, rng, seed, sink);
}

// --------------------------------------------------------------------------
// Random environments

struct RateTriple {
  double beta = 0.0;
  double mu = 0.0;
  double k = 0.0;
};

/// Quenched population-level environment. The triple at level n is a pure
/// function of (env_seed, n), sampled on first use and cached.
class LevelEnvironment {
 public:
  explicit LevelEnvironment(const ByPopulationLevel& spec) : spec_(spec) {}

  const RateTriple& at(std::uint64_t level) {
    while (cache_.size() <= level) cache_.push_back(sample(spec_, cache_.size()));
    return cache_[level];
  }

  static RateTriple sample(const ByPopulationLevel& spec, std::uint64_t level) {
    Rng r(derive_seed(spec.env_seed, level));
    RateTriple t;
    t.beta = spec.beta.quantile(r.uniform());
    t.mu = spec.mu.quantile(r.uniform());
    t.k = spec.k.quantile(r.uniform());
    return t;
  }

 private:
  ByPopulationLevel spec_;
  std::vector<RateTriple> cache_;
};

namespace detail {

inline ReplicaResult simulate_level_env(const ByPopulationLevel& env, std::uint64_t n0, double horizon,
                                        std::span<const double> grid, std::uint64_t seed,
                                        const EventSink& sink) {
  LevelEnvironment levels(env);
  Rng rng(seed);
  ReplicaResult res;
  res.seed = seed;
  std::uint64_t n = n0;
  double t = 0.0;
  std::size_t gi = 0;
  while (true) {
    const auto& tr = levels.at(n);
    const double nd = static_cast<double>(n);
    const double up = tr.beta * nd + tr.k;
    const double rate = up + tr.mu * nd;
    if (!(rate > 0.0)) break;
    const double t_next = t + rng.exponential(rate);
    if (t_next > horizon) break;
    while (gi < grid.size() && grid[gi] < t_next) res.samples.push_back({grid[gi++], {n}});
    t = t_next;
    if (rng.uniform() * rate < up) {
      if (++n > kPopulationLimit) throw PopulationOverflow(seed, t);
      if (sink) sink({t, 0, EventKind::Birth, std::nullopt});
    } else {
      --n;
      if (sink) sink({t, 0, EventKind::Death, std::nullopt});
    }
    ++res.events;
  }
  for (; gi < grid.size(); ++gi) res.samples.push_back({grid[gi], {n}});
  res.final_state = {horizon, {n}};
  return res;
}

inline ReplicaResult simulate_chain_env(const MarkovChainEnv& env, std::uint64_t n0, double horizon,
                                        std::span<const double> grid, std::uint64_t seed,
                                        const EventSink& sink) {
  Rng rng(seed);
  ReplicaResult res;
  res.seed = seed;
  std::uint64_t n = n0;
  std::size_t x = env.initial_state;
  double t = 0.0;
  std::size_t gi = 0;
  std::vector<double> switch_total(env.states());
  for (std::size_t s = 0; s < env.states(); ++s) switch_total[s] = env.switch_rate(s);
  auto record_before = [&](double limit) {
    while (gi < grid.size() && grid[gi] < limit) {
      res.samples.push_back({grid[gi++], {n}});
      res.env_states.push_back(x);
    }
  };
  while (true) {
    const double nd = static_cast<double>(n);
    const double up = env.beta[x] * nd + env.k[x];
    const double down = env.mu[x] * nd;
    const double rate = up + down + switch_total[x];
    if (!(rate > 0.0)) break;
    const double t_next = t + rng.exponential(rate);
    if (t_next > horizon) break;
    record_before(t_next);
    t = t_next;
    const double v = rng.uniform() * rate;
    if (v < up) {
      if (++n > kPopulationLimit) throw PopulationOverflow(seed, t);
      if (sink) sink({t, 0, EventKind::Birth, std::nullopt});
    } else if (v < up + down) {
      --n;
      if (sink) sink({t, 0, EventKind::Death, std::nullopt});
    } else {
      double w = rng.uniform() * switch_total[x];
      std::size_t y = x;
      for (std::size_t s = 0; s < env.states(); ++s) {
        if (s == x) continue;
        y = s;
        if (w < env.generator[x][s]) break;
        w -= env.generator[x][s];
      }
      x = y;
    }
    ++res.events;
  }
  record_before(std::numeric_limits<double>::infinity());
  res.final_state = {horizon, {n}};
  return res;
}

}  // namespace detail

/// Simulates a chain in a random environment. For population-level
/// environments the environment is frozen by env_seed; `seed` drives the
/// dynamics only.
inline ReplicaResult simulate_env(const EnvironmentSpec& env, const InitialCondition& n0, double horizon,
                                  std::span<const double> grid, std::uint64_t seed,
                                  const EventSink& sink = {}) {
  detail::require_valid(validate(env));
  detail::check_grid(grid, horizon);
  return std::visit(
      [&](const auto& e) -> ReplicaResult {
        using T = std::decay_t<decltype(e)>;
        if constexpr (std::is_same_v<T, SpatialField>) {
          Rng rng(seed);
          auto dyn = SiteDynamics::field(e);
          return simulate_sites(dyn, n0.draw(e.torus.sites(), rng), horizon, grid, rng, seed, sink);
        } else {
          Rng init(seed ^ 0x5bd1e995ULL);
          const std::uint64_t start = n0.draw(1, init).front();
          if constexpr (std::is_same_v<T, ByPopulationLevel>)
            return detail::simulate_level_env(e, start, horizon, grid, seed, sink);
          else
            return detail::simulate_chain_env(e, start, horizon, grid, seed, sink);
        }
      },
      env);
}

// --------------------------------------------------------------------------
// Replica ensembles

inline unsigned default_jobs() { return std::max(1u, std::thread::hardware_concurrency()); }

/// Runs fn(derive_seed(master, i), i) for i in [0, replicas) on up to `jobs`
/// threads. Results come back indexed by replica, so any reduction over them
/// is independent of scheduling. The lowest-index exception is rethrown.
template <class Fn>
auto run_replicas(std::size_t replicas, std::uint64_t master_seed, unsigned jobs, Fn&& fn) {
  using R = std::invoke_result_t<Fn&, std::uint64_t, std::size_t>;
  std::vector<std::optional<R>> slots(replicas);
  std::exception_ptr error;
  std::size_t error_index = std::numeric_limits<std::size_t>::max();
  std::mutex error_mutex;
  std::atomic<std::size_t> next{0};

  auto worker = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= replicas) return;
      try {
        slots[i].emplace(fn(derive_seed(master_seed, i), i));
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (i < error_index) {
          error_index = i;
          error = std::current_exception();
        }
      }
    }
  };

  const unsigned n_threads = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, jobs), replicas));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(n_threads);
    for (unsigned i = 0; i < n_threads; ++i) pool.emplace_back(worker);
  }
  if (error) std::rethrow_exception(error);

  std::vector<R> out;
  out.reserve(replicas);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

}  // namespace branchimm
