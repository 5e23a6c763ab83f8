#pragma once

// Fluid limit and Gaussian fluctuations of the density-dependent family
// Z_k = n / k, where n jumps +1 at rate k f(n/k, +1) and -1 at k f(n/k, -1).

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "branchimm/ctmc.hpp"
#include "branchimm/models.hpp"
#include "branchimm/numerics.hpp"
#include "branchimm/stats.hpp"

namespace branchimm {

struct DensityFamily {
  double beta = 0.0;
  double mu = 0.0;

  explicit DensityFamily(const RateParams& p) : beta(p.beta), mu(p.mu) {}

  /// Jump intensities for j = +1 and j = -1 (j = 0 is never used).
  double f(double z, int j) const {
    if (j == +1) return beta * z + 1.0;
    if (j == -1) return mu * z;
    throw std::invalid_argument("DensityFamily::f: j must be +1 or -1");
  }

  double drift(double z) const { return (beta - mu) * z + 1.0; }
  double diffusion(double z) const { return (beta + mu) * z + 1.0; }
  double drift_derivative(double) const { return beta - mu; }
};

struct OUParams {
  double q = 0.0;       // F'(z*)
  double a = 0.0;       // G(z*)
  double z_star = 0.0;  // fixed point of the fluid ODE

  double stationary_variance() const { return a / (-2.0 * q); }
};

inline void require_subcritical(const RateParams& p) {
  if (!(p.mu > p.beta)) throw std::domain_error("scaling limits need mu > beta");
}

inline OUParams ou_params(const RateParams& p) {
  require_subcritical(p);
  OUParams ou;
  ou.z_star = 1.0 / (p.mu - p.beta);
  ou.q = p.beta - p.mu;
  ou.a = DensityFamily(p).diffusion(ou.z_star);
  return ou;
}

/// Z(t) = z* + (z0 - z*) e^{-(mu - beta) t}.
inline double fluid_solution(const RateParams& p, double z0, double t) {
  require_subcritical(p);
  const double zs = 1.0 / (p.mu - p.beta);
  return zs + (z0 - zs) * std::exp(-(p.mu - p.beta) * t);
}

struct FluctuationMoments {
  double mean = 0.0;
  double variance = 0.0;
  double l_s = 1.0;  // exp(int_0^s F'(Z(u)) du)
};

inline constexpr std::size_t kFluctuationPanels = 10'000;

/// Mean zeta0 L_s and variance L_s^2 int_0^s L_u^{-2} G(Z(u)) du, both by
/// Simpson quadrature.
inline FluctuationMoments fluctuation_moments(const RateParams& p, double z0, double zeta0, double s) {
  require_subcritical(p);
  const DensityFamily fam(p);
  FluctuationMoments fm;
  auto log_l = [&](double u) {
    if (u == 0.0) return 0.0;
    return numerics::simpson([&](double v) { return fam.drift_derivative(fluid_solution(p, z0, v)); }, 0.0, u, 16);
  };
  const double log_ls = log_l(s);
  fm.l_s = std::exp(log_ls);
  fm.mean = zeta0 * fm.l_s;
  if (s > 0.0) {
    const double integral = numerics::simpson(
        [&](double u) { return std::exp(-2.0 * log_l(u)) * fam.diffusion(fluid_solution(p, z0, u)); }, 0.0, s,
        kFluctuationPanels);
    fm.variance = fm.l_s * fm.l_s * integral;
  }
  return fm;
}

/// Equilibrium-start variance a / (-2q) (1 - e^{2 q s}).
inline double ou_variance(const RateParams& p, double s) {
  const auto ou = ou_params(p);
  return ou.stationary_variance() * (1.0 - std::exp(2.0 * ou.q * s));
}

struct CltReport {
  double k = 0.0;
  double t = 0.0;
  std::uint64_t n0 = 0;
  std::size_t replicas = 0;
  double zeta0 = 0.0;
  double fluid_value = 0.0;       // Z(t) from z0 = n0 / k
  FluctuationMoments target;     // mean / variance of zeta(t)
  stats::SampleSummary summary;  // of the zeta samples
  stats::AndersonDarling normality;
  std::vector<double> zeta;

  bool variance_ok(double sigmas = 3.0) const {
    return stats::within_se(summary.variance, target.variance, summary.se_variance, sigmas);
  }
  bool mean_ok(double sigmas = 3.0) const {
    return stats::within_se(summary.mean, target.mean, summary.se_mean, sigmas);
  }
  bool normal_ok(double alpha = 0.01) const { return normality.passes(alpha); }
};

/// Simulates zeta_k(t) = sqrt(k) (n(t)/k - Z(t)) from n0 = round(k z*).
inline CltReport verify_clt(const RateParams& base, double k_scale, std::size_t replicas, double t,
                            std::uint64_t master_seed, unsigned jobs = 1) {
  require_subcritical(base);
  if (!(k_scale > 0.0)) throw std::invalid_argument("k_scale must be positive");
  RateParams p = base;
  p.k = k_scale;
  CltReport rep;
  rep.k = k_scale;
  rep.t = t;
  rep.replicas = replicas;
  const double zs = 1.0 / (p.mu - p.beta);
  rep.n0 = static_cast<std::uint64_t>(std::llround(k_scale * zs));
  const double z0 = static_cast<double>(rep.n0) / k_scale;
  const double sk = std::sqrt(k_scale);
  rep.zeta0 = sk * (z0 - zs);
  rep.fluid_value = fluid_solution(p, z0, t);
  rep.target = fluctuation_moments(p, z0, 0.0, t);

  const std::vector<double> grid{t};
  auto finals = run_replicas(replicas, master_seed, jobs, [&](std::uint64_t seed, std::size_t) {
    return simulate_single_site(p, rep.n0, t, grid, seed).samples.front().counts.front();
  });
  rep.zeta.reserve(replicas);
  for (auto n : finals) rep.zeta.push_back(sk * (static_cast<double>(n) / k_scale - rep.fluid_value));
  rep.summary = stats::summarize(rep.zeta);
  rep.normality = stats::anderson_darling_normal(rep.zeta);
  return rep;
}

}  // namespace branchimm
