#pragma once

// JSON run configuration: sections `rates`, `space`, `kernel`,
// `environment`, `simulation`, plus command-specific `options`.
// Parsing is strict (unknown keys are errors) and every parsed model is
// validated; both failures raise ConfigError.

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "branchimm/ctmc.hpp"
#include "branchimm/models.hpp"

namespace branchimm {

using json = nlohmann::json;

struct SimulationSettings {
  std::size_t replicas = 1000;
  double horizon = 20.0;
  std::uint64_t seed = 12345;
  std::vector<double> grid;  // empty: the single point {horizon}
  InitialCondition n0 = InitialCondition::fixed(1);
  unsigned jobs = 1;

  std::vector<double> effective_grid() const { return grid.empty() ? std::vector<double>{horizon} : grid; }

  bool operator==(const SimulationSettings&) const = default;
};

struct RunConfig {
  std::string command;
  RateParams rates{1.0, 2.0, 1.0, 1.0};
  std::vector<RateParams> per_site;  // finite spaces: optional per-site rates
  SiteSpace space = SingleSite{};
  std::optional<EnvironmentSpec> environment;
  SimulationSettings simulation;
  json options = json::object();

  bool operator==(const RunConfig&) const = default;
};

namespace config_detail {

inline void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : j.items())
    if (!ok.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
}

template <class T>
T get(const json& j, const char* key, const std::string& where, std::optional<T> fallback = std::nullopt) {
  if (!j.contains(key)) {
    if (fallback) return *fallback;
    throw ConfigError(where + ": missing key '" + key + "'");
  }
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

inline std::vector<double> doubles(const json& j, const std::string& where) {
  try {
    return j.get<std::vector<double>>();
  } catch (const json::exception&) {
    throw ConfigError(where + ": expected an array of numbers");
  }
}

inline std::vector<std::vector<double>> matrix(const json& j, const std::string& where) {
  try {
    return j.get<std::vector<std::vector<double>>>();
  } catch (const json::exception&) {
    throw ConfigError(where + ": expected an array of number arrays");
  }
}

/// A number broadcasts to `n` entries; an array must have exactly n.
inline std::vector<double> field(const json& j, std::size_t n, const std::string& where) {
  if (j.is_number()) return std::vector<double>(n, j.get<double>());
  auto v = doubles(j, where);
  if (v.size() != n) throw ConfigError(where + ": expected " + std::to_string(n) + " entries");
  return v;
}

}  // namespace config_detail

// --------------------------------------------------------------------------
// Component (de)serialisation

inline json rates_to_json(const RateParams& p) {
  return {{"beta", p.beta}, {"mu", p.mu}, {"k", p.k}, {"kappa", p.kappa}};
}

inline RateParams rates_from_json(const json& j, const std::string& where) {
  using namespace config_detail;
  check_keys(j, {"beta", "mu", "k", "kappa"}, where);
  RateParams p;
  p.beta = get<double>(j, "beta", where);
  p.mu = get<double>(j, "mu", where);
  p.k = get<double>(j, "k", where);
  p.kappa = get<double>(j, "kappa", where, 1.0);
  return p;
}

inline json kernel_to_json(const LatticeKernel& k) {
  json support = json::array();
  for (const auto& e : k.support) support.push_back({{"offset", e.offset}, {"weight", e.weight}});
  return {{"dim", k.dim}, {"support", support}};
}

inline LatticeKernel kernel_from_json(const json& j) {
  using namespace config_detail;
  const std::string where = "kernel";
  check_keys(j, {"dim", "type", "support"}, where);
  const int dim = get<int>(j, "dim", where, 1);
  const auto type = get<std::string>(j, "type", where, std::string("explicit"));
  if (type == "nearest_neighbor") return LatticeKernel::nearest_neighbor(dim);
  if (type != "explicit") throw ConfigError("kernel.type: unknown kernel type '" + type + "'");
  LatticeKernel k;
  k.dim = dim;
  if (!j.contains("support") || !j["support"].is_array()) throw ConfigError("kernel.support: expected an array");
  for (const auto& e : j["support"]) {
    check_keys(e, {"offset", "weight"}, "kernel.support[]");
    KernelEntry ke;
    ke.offset = get<std::vector<int>>(e, "offset", "kernel.support[]");
    ke.weight = get<double>(e, "weight", "kernel.support[]");
    k.support.push_back(std::move(ke));
  }
  return k;
}

inline json law_to_json(const RateLaw& law) {
  switch (law.kind) {
    case RateLaw::Kind::Constant:
      return {{"law", "constant"}, {"value", law.a}};
    case RateLaw::Kind::TwoPoint:
      return {{"law", "two_point"}, {"values", {law.a, law.b}}, {"p", law.p}};
    case RateLaw::Kind::Uniform:
      return {{"law", "uniform"}, {"lower", law.a}, {"upper", law.b}};
    case RateLaw::Kind::Triangular:
      return {{"law", "triangular"}, {"lower", law.a}, {"mode", law.c}, {"upper", law.b}};
  }
  return {};
}

inline RateLaw law_from_json(const json& j, const std::string& where) {
  using namespace config_detail;
  if (j.is_number()) return RateLaw::constant(j.get<double>());
  const auto kind = get<std::string>(j, "law", where);
  if (kind == "constant") {
    check_keys(j, {"law", "value"}, where);
    return RateLaw::constant(get<double>(j, "value", where));
  }
  if (kind == "two_point") {
    check_keys(j, {"law", "values", "p"}, where);
    auto v = doubles(j.at("values"), where + ".values");
    if (v.size() != 2) throw ConfigError(where + ".values: expected two atoms");
    return RateLaw::two_point(v[0], v[1], get<double>(j, "p", where, 0.5));
  }
  if (kind == "uniform") {
    check_keys(j, {"law", "lower", "upper"}, where);
    return RateLaw::uniform(get<double>(j, "lower", where), get<double>(j, "upper", where));
  }
  if (kind == "triangular") {
    check_keys(j, {"law", "lower", "mode", "upper"}, where);
    return RateLaw::triangular(get<double>(j, "lower", where), get<double>(j, "mode", where),
                               get<double>(j, "upper", where));
  }
  throw ConfigError(where + ".law: unknown law '" + kind + "'");
}

inline json initial_to_json(const InitialCondition& ic) {
  if (ic.kind == InitialCondition::Kind::Poisson) return {{"poisson", ic.poisson_mean}};
  if (ic.counts.size() == 1) return ic.counts.front();
  return ic.counts;
}

inline InitialCondition initial_from_json(const json& j) {
  using namespace config_detail;
  try {
    if (j.is_number_unsigned() || (j.is_number_integer() && j.get<long long>() >= 0))
      return InitialCondition::fixed(j.get<std::uint64_t>());
    if (j.is_array()) return InitialCondition::fixed(j.get<std::vector<std::uint64_t>>());
    if (j.is_object()) {
      check_keys(j, {"poisson"}, "simulation.n0");
      return InitialCondition::poisson(get<double>(j, "poisson", "simulation.n0"));
    }
  } catch (const json::exception&) {
  }
  throw ConfigError("simulation.n0: expected a count, an array of counts or {\"poisson\": mean}");
}

inline json schedule_to_json(const ImmigrationSchedule& s) {
  return {{"breakpoints", s.breakpoints}, {"values", s.values}};
}

inline json environment_to_json(const EnvironmentSpec& env) {
  return std::visit(
      [](const auto& e) -> json {
        using T = std::decay_t<decltype(e)>;
        if constexpr (std::is_same_v<T, ByPopulationLevel>) {
          return {{"type", "population_level"}, {"beta", law_to_json(e.beta)}, {"mu", law_to_json(e.mu)},
                  {"k", law_to_json(e.k)},       {"c_minus", e.c_minus},       {"c_plus", e.c_plus},
                  {"env_seed", e.env_seed}};
        } else if constexpr (std::is_same_v<T, MarkovChainEnv>) {
          return {{"type", "markov_chain"}, {"generator", e.generator}, {"beta", e.beta},
                  {"mu", e.mu},             {"k", e.k},                 {"initial_state", e.initial_state}};
        } else {
          return {{"type", "spatial_field"}, {"beta", e.beta},     {"mu", e.mu},
                  {"k", schedule_to_json(e.k)}, {"delta1", e.delta1}, {"delta2", e.delta2},
                  {"kappa", e.kappa}};
        }
      },
      env);
}

inline EnvironmentSpec environment_from_json(const json& j, const SiteSpace& space) {
  using namespace config_detail;
  const std::string where = "environment";
  const auto type = get<std::string>(j, "type", where);
  if (type == "population_level") {
    check_keys(j, {"type", "beta", "mu", "k", "c_minus", "c_plus", "env_seed"}, where);
    ByPopulationLevel e;
    e.beta = law_from_json(j.at("beta"), where + ".beta");
    e.mu = law_from_json(j.at("mu"), where + ".mu");
    e.k = law_from_json(j.at("k"), where + ".k");
    e.c_minus = get<double>(j, "c_minus", where);
    e.c_plus = get<double>(j, "c_plus", where);
    e.env_seed = get<std::uint64_t>(j, "env_seed", where, std::uint64_t{0});
    return e;
  }
  if (type == "markov_chain") {
    check_keys(j, {"type", "generator", "beta", "mu", "k", "initial_state"}, where);
    MarkovChainEnv e;
    e.generator = matrix(j.at("generator"), where + ".generator");
    e.beta = doubles(j.at("beta"), where + ".beta");
    e.mu = doubles(j.at("mu"), where + ".mu");
    e.k = doubles(j.at("k"), where + ".k");
    e.initial_state = get<std::size_t>(j, "initial_state", where, std::size_t{0});
    return e;
  }
  if (type == "spatial_field") {
    check_keys(j, {"type", "beta", "mu", "k", "delta1", "delta2", "kappa"}, where);
    const auto* torus = std::get_if<Torus>(&space);
    if (!torus) throw ConfigError("environment.spatial_field needs a torus space");
    SpatialField f;
    f.torus = *torus;
    const std::size_t n = torus->sites();
    f.beta = field(j.at("beta"), n, where + ".beta");
    f.mu = field(j.at("mu"), n, where + ".mu");
    const auto& kj = j.at("k");
    if (kj.is_number()) {
      f.k = ImmigrationSchedule::constant(n, kj.get<double>());
    } else {
      check_keys(kj, {"breakpoints", "values"}, where + ".k");
      f.k.breakpoints = doubles(kj.at("breakpoints"), where + ".k.breakpoints");
      f.k.values.clear();
      for (const auto& row : kj.at("values")) f.k.values.push_back(field(row, n, where + ".k.values[]"));
    }
    f.delta1 = get<double>(j, "delta1", where);
    f.delta2 = get<double>(j, "delta2", where);
    f.kappa = get<double>(j, "kappa", where, 1.0);
    return f;
  }
  throw ConfigError("environment.type: unknown environment '" + type + "'");
}

// --------------------------------------------------------------------------
// Whole configuration

inline json to_json(const RunConfig& c) {
  json j;
  if (!c.command.empty()) j["command"] = c.command;
  j["rates"] = rates_to_json(c.rates);
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, SingleSite>) {
          j["space"] = {{"type", "single"}};
        } else if constexpr (std::is_same_v<T, FiniteSet>) {
          j["space"] = {{"type", "finite"}, {"rates", s.rates}, {"symmetric", s.require_symmetric}};
        } else {
          j["space"] = {{"type", "torus"}, {"side", s.side}, {"dim", s.dim}};
          j["kernel"] = kernel_to_json(s.kernel);
        }
      },
      c.space);
  if (!c.per_site.empty()) {
    json ps = json::array();
    for (const auto& p : c.per_site) ps.push_back(rates_to_json(p));
    j["space"]["per_site"] = ps;
  }
  if (c.environment) j["environment"] = environment_to_json(*c.environment);
  const auto& s = c.simulation;
  j["simulation"] = {{"replicas", s.replicas}, {"horizon", s.horizon}, {"seed", s.seed},
                     {"grid", s.grid},         {"n0", initial_to_json(s.n0)}, {"jobs", s.jobs}};
  if (!c.options.empty()) j["options"] = c.options;
  return j;
}

inline RunConfig parse_config(const json& j) {
  using namespace config_detail;
  check_keys(j, {"command", "rates", "space", "kernel", "environment", "simulation", "options"}, "config");
  RunConfig c;
  c.command = get<std::string>(j, "command", "config", std::string());
  if (j.contains("rates")) c.rates = rates_from_json(j["rates"], "rates");

  if (j.contains("space")) {
    const auto& sj = j["space"];
    const auto type = get<std::string>(sj, "type", "space");
    if (type == "single") {
      check_keys(sj, {"type"}, "space");
      c.space = SingleSite{};
    } else if (type == "finite") {
      check_keys(sj, {"type", "rates", "symmetric", "per_site"}, "space");
      FiniteSet fs;
      fs.rates = matrix(sj.at("rates"), "space.rates");
      fs.require_symmetric = get<bool>(sj, "symmetric", "space", false);
      c.space = fs;
      if (sj.contains("per_site"))
        for (const auto& p : sj["per_site"]) c.per_site.push_back(rates_from_json(p, "space.per_site[]"));
    } else if (type == "torus") {
      check_keys(sj, {"type", "side", "dim"}, "space");
      Torus t;
      t.side = get<int>(sj, "side", "space");
      t.dim = get<int>(sj, "dim", "space", 1);
      if (!j.contains("kernel")) throw ConfigError("kernel: a torus space needs a kernel section");
      t.kernel = kernel_from_json(j["kernel"]);
      c.space = t;
    } else {
      throw ConfigError("space.type: unknown space '" + type + "'");
    }
  } else if (j.contains("kernel")) {
    throw ConfigError("kernel: only meaningful with a torus space");
  }

  if (j.contains("environment")) c.environment = environment_from_json(j["environment"], c.space);

  if (j.contains("simulation")) {
    const auto& sj = j["simulation"];
    const std::string where = "simulation";
    check_keys(sj, {"replicas", "horizon", "seed", "grid", "n0", "jobs"}, where);
    auto& s = c.simulation;
    s.replicas = get<std::size_t>(sj, "replicas", where, s.replicas);
    s.horizon = get<double>(sj, "horizon", where, s.horizon);
    s.seed = get<std::uint64_t>(sj, "seed", where, s.seed);
    s.jobs = get<unsigned>(sj, "jobs", where, s.jobs);
    if (sj.contains("grid")) {
      const auto& g = sj["grid"];
      if (g.is_object()) {
        check_keys(g, {"start", "stop", "step"}, "simulation.grid");
        const double a = get<double>(g, "start", "simulation.grid", 0.0);
        const double b = get<double>(g, "stop", "simulation.grid");
        const double h = get<double>(g, "step", "simulation.grid");
        if (!(h > 0.0) || b < a) throw ConfigError("simulation.grid: need step > 0 and stop >= start");
        const auto n = static_cast<std::size_t>(std::floor((b - a) / h + 1e-9));
        s.grid.clear();
        for (std::size_t i = 0; i <= n; ++i) s.grid.push_back(a + h * static_cast<double>(i));
      } else {
        s.grid = doubles(g, "simulation.grid");
      }
    }
    if (sj.contains("n0")) s.n0 = initial_from_json(sj["n0"]);
    if (!(s.horizon >= 0.0)) throw ConfigError("simulation.horizon: must be non-negative");
    for (std::size_t i = 0; i < s.grid.size(); ++i)
      if (s.grid[i] < 0.0 || (i && !(s.grid[i] > s.grid[i - 1])) || s.grid[i] > s.horizon)
        throw ConfigError("simulation.grid: must be increasing within [0, horizon]");
  }
  if (j.contains("options")) {
    if (!j["options"].is_object()) throw ConfigError("options: expected an object");
    c.options = j["options"];
  }

  ValidationReport r = validate(c.rates, c.space);
  for (const auto& p : c.per_site) r.merge(validate(p));
  if (!c.per_site.empty() && c.per_site.size() != site_count(c.space))
    r.issues.push_back("space.per_site: expected one entry per site");
  if (c.environment) r.merge(validate(*c.environment));
  if (!r.ok()) throw ConfigError("invalid model:\n" + r.to_string());
  return c;
}

inline RunConfig parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(j);
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

/// 64-bit FNV-1a of the canonical JSON dump, as 16 hex digits.
inline std::string config_hash(const RunConfig& c) {
  const std::string s = to_json(c).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

}  // namespace branchimm
