#ifndef ESCAPE_ATLAS_INVARIANTS_HPP
#define ESCAPE_ATLAS_INVARIANTS_HPP

// Self-checks of the numerical core, runnable from the CLI (`selftest`) and the
// acceptance driver. Each returns the worst deviation seen and its tolerance.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "escape_atlas/action_angle.hpp"
#include "escape_atlas/elliptic.hpp"
#include "escape_atlas/model.hpp"
#include "escape_atlas/ode.hpp"
#include "escape_atlas/simulate.hpp"
#include "escape_atlas/slow_flow.hpp"

namespace escape_atlas::invariants {

struct CheckResult {
  std::string name;
  double worst = 0.0;
  double tolerance = 0.0;
  std::size_t samples = 0;

  bool passed() const { return worst <= tolerance; }
};

namespace detail {

inline double uniform(std::mt19937_64& rng, double a, double b) {
  return a + (b - a) * static_cast<double>(rng() >> 11) * 0x1p-53;
}

}  // namespace detail

/// sn^2 + cn^2 = 1 and dn^2 + k^2 sn^2 = 1 at random (u, k).
inline CheckResult jacobi_identities(std::size_t n = 10000, std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  CheckResult r{"jacobi identities", 0.0, 1e-12, n};
  for (std::size_t i = 0; i < n; ++i) {
    const double k = detail::uniform(rng, 0.0, 0.9999);
    const double u = detail::uniform(rng, -20.0, 20.0);
    const auto j = jacobi_sn_cn_dn(u, k);
    r.worst = std::max({r.worst, std::abs(j.sn * j.sn + j.cn * j.cn - 1.0),
                        std::abs(j.dn * j.dn + k * k * j.sn * j.sn - 1.0)});
  }
  return r;
}

/// E K' + E' K - K K' = pi/2.
inline CheckResult legendre_relation(std::size_t n = 1000, std::uint64_t seed = 2) {
  std::mt19937_64 rng(seed);
  CheckResult r{"legendre relation", 0.0, 1e-12, n};
  for (std::size_t i = 0; i < n; ++i) {
    const double k = detail::uniform(rng, 0.001, 0.999);
    const Modulus m(k);
    const Modulus mc = Modulus::with_complement(m.complement(), k);
    const double K = ellint_K(m);
    const double Kc = ellint_K(mc);
    r.worst = std::max(r.worst, std::abs(ellint_E(m) * Kc + ellint_E(mc) * K - K * Kc - std::numbers::pi / 2));
  }
  return r;
}

/// F(pi/2, k) = K(k), relative.
inline CheckResult incomplete_complete_consistency(std::size_t n = 1000, std::uint64_t seed = 3) {
  std::mt19937_64 rng(seed);
  CheckResult r{"F(pi/2,k) = K(k)", 0.0, 1e-13, n};
  for (std::size_t i = 0; i < n; ++i) {
    const double k = detail::uniform(rng, 0.0, 0.999);
    const double K = ellint_K(k);
    r.worst = std::max(r.worst, std::abs(ellint_F(std::numbers::pi / 2, k) - K) / K);
  }
  return r;
}

/// H0(q(theta, E), p(theta, E)) = E on a 40 x 25 grid.
inline CheckResult energy_identity() {
  CheckResult r{"action-angle energy identity", 0.0, 1e-10, 0};
  for (int a = 0; a < 40; ++a) {
    const double E = 0.2499 * (a + 0.5) / 40.0;
    for (int b = 0; b < 25; ++b) {
      const double th = 2.0 * std::numbers::pi * b / 25.0;
      r.worst = std::max(r.worst, std::abs(hamiltonian({q_of_angle(th, E), p_of_angle(th, E)}) - E));
      ++r.samples;
    }
  }
  return r;
}

/// (theta, E) -> (q, p) -> (theta, E) -> (q, p) agrees in phase space.
inline CheckResult angle_round_trip(std::size_t n = 5000, std::uint64_t seed = 4) {
  std::mt19937_64 rng(seed);
  CheckResult r{"angle round trip", 0.0, 1e-9, n};
  for (std::size_t i = 0; i < n; ++i) {
    const double E = detail::uniform(rng, 1e-6, 0.2499);
    const double th = detail::uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const PhasePoint x{q_of_angle(th, E), p_of_angle(th, E)};
    const auto back = angle_of_state(x);
    r.worst = std::max(r.worst, std::abs(x.q - q_of_angle(back.theta, back.E)) +
                                    std::abs(x.p - p_of_angle(back.theta, back.E)));
  }
  return r;
}

/// dI/dE from the closed-form action against 1 / theta', relative.
inline CheckResult action_frequency_consistency(std::size_t n = 200, std::uint64_t seed = 5) {
  std::mt19937_64 rng(seed);
  CheckResult r{"dI/dE = 1/theta'", 0.0, 1e-6, n};
  for (std::size_t i = 0; i < n; ++i) {
    const double E = detail::uniform(rng, 0.005, 0.24);
    const double h = 1e-6;
    const double dI = (action_of_energy(E + h) - action_of_energy(E - h)) / (2 * h);
    const double expected = 1.0 / angle_frequency(E);
    r.worst = std::max(r.worst, std::abs(dI - expected) / expected);
  }
  return r;
}

/// C drift over tau = 1000 along the averaged flow, for states whose level
/// curve stays clear of xi = 0, the separatrix and any saddle.
inline CheckResult slow_flow_conservation(std::size_t n = 100, std::uint64_t seed = 2024) {
  std::mt19937_64 rng(seed);
  CheckResult r{"first integral drift", 0.0, 1e-8, 0};
  for (int attempts = 0; r.samples < n && attempts < 10000; ++attempts) {
    const FirstIntegralContext ctx{detail::uniform(rng, 0.005, 0.1), detail::uniform(rng, 0.5, 1.3)};
    const SlowState s{detail::uniform(rng, 0.0, 2.0 * std::numbers::pi), detail::uniform(rng, 0.02, 0.22)};
    const auto span = level_span(ctx, s, 0.0, 0.245, 400);
    if (span.xi_lo < 0.01 || span.xi_hi > 0.24) continue;
    bool near_saddle = false;
    for (const auto& sp : find_saddles(ctx)) near_saddle |= std::abs(sp.C_value - span.level) < 1e-4;
    if (near_saddle) continue;
    StepControl sc;
    sc.rtol = 1e-12;
    sc.atol = 1e-14;
    auto rhs = [ctx](double, const std::array<double, 2>& y) {
      const auto v = slow_rhs({y[0], y[1]}, ctx);
      return std::array<double, 2>{v.gamma, v.xi};
    };
    Dop853 solver(rhs, 0.0, std::array<double, 2>{s.gamma, s.xi}, 1000.0, sc);
    while (!solver.finished()) solver.step();
    r.worst = std::max(r.worst, std::abs(C_value({solver.y()[0], solver.y()[1]}, ctx) - span.level));
    ++r.samples;
  }
  if (r.samples < n) r.worst = std::numeric_limits<double>::infinity();
  return r;
}

/// Unforced H0 drift over `horizon_ec` cycles, sampled once per cycle.
inline CheckResult unforced_energy_drift(double horizon_ec = 3000.0,
                                         const SimulationSettings& settings = SimulationSettings::precise()) {
  CheckResult r{"unforced energy drift", 0.0, 1e-9, 0};
  const ModelParams p{0.0, 0.9, 0.0, kBarrierEnergy};
  const std::vector<PhasePoint> ics = {{0.1, 0.0}, {0.5, 0.1}, {0.0, 0.69}};
  const auto orbits = strobe_map(ics, p, static_cast<long>(horizon_ec), EscapeCriterion::energy(kBarrierEnergy),
                                 settings);
  for (std::size_t i = 0; i < ics.size(); ++i) {
    const double h0 = hamiltonian(ics[i]);
    for (const auto& s : orbits[i].samples) r.worst = std::max(r.worst, std::abs(hamiltonian(s) - h0));
    r.samples += orbits[i].samples.size();
    if (orbits[i].escaped) r.worst = std::numeric_limits<double>::infinity();
  }
  return r;
}

inline std::vector<CheckResult> run_all() {
  return {jacobi_identities(),      legendre_relation(),      incomplete_complete_consistency(),
          energy_identity(),        angle_round_trip(),       action_frequency_consistency(),
          slow_flow_conservation(), unforced_energy_drift()};
}

}  // namespace escape_atlas::invariants

#endif  // ESCAPE_ATLAS_INVARIANTS_HPP
