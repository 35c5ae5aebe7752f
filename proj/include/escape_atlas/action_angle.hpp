#ifndef ESCAPE_ATLAS_ACTION_ANGLE_HPP
#define ESCAPE_ATLAS_ACTION_ANGLE_HPP

// Action-angle variables of the unforced quartic well and the averaged
// 1:1 coupling G(xi) that drives the slow flow.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

#include "escape_atlas/elliptic.hpp"
#include "escape_atlas/model.hpp"

namespace escape_atlas {

/// Which expression stands in for the first Fourier coefficient of q(theta).
///
/// Truncated keeps only the leading nome term, pi sqrt(1+mu)/K * exp(-pi K'/(2K)).
/// FullFourier is the exact coefficient, Truncated / (1 - nome). They differ by
/// under 1% for xi <= 0.1 and by about 7% at xi = 0.24.
enum class CouplingModel { Truncated, FullFourier };

inline const char* to_string(CouplingModel m) {
  return m == CouplingModel::Truncated ? "truncated" : "full_fourier";
}

namespace detail {

inline void require_energy(double E, bool allow_separatrix, const char* what) {
  const bool ok = allow_separatrix ? (E >= 0.0 && E <= kBarrierEnergy) : (E >= 0.0 && E < kBarrierEnergy);
  if (!ok) {
    throw std::domain_error(std::string(what) + ": energy must lie in [0, 1/4" + (allow_separatrix ? "]" : ")") +
                            ", got " + std::to_string(E));
  }
}

}  // namespace detail

/// Orbit geometry at energy E: mu = sqrt(1-4E), modulus k, amplitude sqrt(1-mu).
struct EnergyShape {
  double E = 0.0;
  double mu = 1.0;
  double k = 0.0;
  double kp = 1.0;  ///< complementary modulus sqrt(2 mu / (1 + mu))
  double amplitude = 0.0;

  /// Accepts E in [0, 1/4]; at the separatrix k is clamped just below the
  /// singular edge so K stays finite.
  static EnergyShape of(double E) {
    detail::require_energy(E, true, "EnergyShape");
    EnergyShape s;
    s.E = E;
    s.mu = std::sqrt(1.0 - 4.0 * E);
    // sqrt((1-mu)/(1+mu)) rewritten without the 1 - mu cancellation.
    s.k = 2.0 * std::sqrt(E) / (1.0 + s.mu);
    s.kp = std::sqrt(2.0 * s.mu / (1.0 + s.mu));
    s.amplitude = q_max_of(E);
    const double k_cap = std::nextafter(1.0 - kSingularGuard, 0.0);
    if (s.k > k_cap) {
      s.k = k_cap;
      s.kp = std::sqrt((1.0 - k_cap) * (1.0 + k_cap));
    }
    return s;
  }

  Modulus modulus() const { return Modulus::with_complement(k, kp); }
};

/// Slow coordinates on the resonance-manifold cylinder.
struct SlowState {
  double gamma = 0.0;  ///< slow phase theta - Psi - Omega tau, cyclic
  double xi = 0.0;     ///< averaged energy, < 1/4

  bool operator==(const SlowState&) const = default;
};

/// Action I(E) = (2 sqrt2 / 3 pi) sqrt(1+mu) (E(k) - mu K(k)), E in [0, 1/4].
inline double action_of_energy(double E) {
  detail::require_energy(E, true, "action_of_energy");
  if (E == 0.0) return 0.0;
  constexpr double separatrix = 2.0 * std::numbers::sqrt2 / (3.0 * std::numbers::pi);
  const auto s = EnergyShape::of(E);
  if (s.mu == 0.0) return separatrix;  // E(1) = 1
  const auto m = s.modulus();
  // mu K(k) -> 0 at the separatrix: the mu factor beats the log divergence of K.
  return separatrix * std::sqrt(1.0 + s.mu) * (ellint_E(m) - s.mu * ellint_K(m));
}

/// Angular frequency dE/dI = pi sqrt(1+mu) / (2 sqrt2 K(k)), E in [0, 1/4).
inline double angle_frequency(double E) {
  detail::require_energy(E, false, "angle_frequency");
  const auto s = EnergyShape::of(E);
  return std::numbers::pi * std::sqrt(1.0 + s.mu) / (2.0 * std::numbers::sqrt2 * ellint_K(s.modulus()));
}

/// Displacement on the unforced orbit: sqrt(1-mu) sn(2 theta K / pi).
inline double q_of_angle(double theta, double E) {
  detail::require_energy(E, false, "q_of_angle");
  if (E == 0.0) return 0.0;
  const auto s = EnergyShape::of(E);
  const auto m = s.modulus();
  const double u = 2.0 * theta * ellint_K(m) / std::numbers::pi;
  return s.amplitude * jacobi_sn_cn_dn(u, m).sn;
}

/// Momentum on the unforced orbit: sqrt((1-mu^2)/2) cn dn at 2 theta K / pi.
inline double p_of_angle(double theta, double E) {
  detail::require_energy(E, false, "p_of_angle");
  if (E == 0.0) return 0.0;
  const auto s = EnergyShape::of(E);
  const auto m = s.modulus();
  const double u = 2.0 * theta * ellint_K(m) / std::numbers::pi;
  const auto j = jacobi_sn_cn_dn(u, m);
  return std::sqrt(0.5 * (1.0 - s.mu) * (1.0 + s.mu)) * j.cn * j.dn;
}

struct AngleEnergy {
  double theta = 0.0;
  double E = 0.0;
};

/// Inverse transform: (q, p) -> (theta in [0, 2pi), E). The origin maps to theta = 0.
inline AngleEnergy angle_of_state(const PhasePoint& pt) {
  if (!(std::abs(pt.q) < 1.0)) {
    throw std::domain_error("angle_of_state: state lies outside the well (|q| >= 1)");
  }
  const double E = hamiltonian(pt);
  if (!(E >= 0.0 && E < kBarrierEnergy)) {
    throw std::domain_error("angle_of_state: state is on or above the separatrix, H0 = " + std::to_string(E));
  }
  if (E == 0.0) return {0.0, 0.0};
  const auto s = EnergyShape::of(E);
  const auto m = s.modulus();
  const double sn = std::clamp(pt.q / s.amplitude, -1.0, 1.0);
  const double dn = std::sqrt(1.0 - s.k * s.k * sn * sn);
  // p = A omega cn dn with omega = sqrt((1+mu)/2); cn carries the sign of p.
  const double cn = pt.p / (s.amplitude * std::sqrt(0.5 * (1.0 + s.mu)) * dn);
  const double phi = std::atan2(sn, cn);
  const double u = ellint_F(phi, m);
  return {wrap_two_pi(std::numbers::pi * u / (2.0 * ellint_K(m))), E};
}

namespace detail {

struct CouplingParts {
  double G;      ///< truncated coupling
  double dlnG;   ///< d ln G / d xi
  double nome;
  double dlnq;   ///< d ln(nome) / d xi
};

inline CouplingParts coupling_parts(double xi) {
  const auto s = EnergyShape::of(xi);
  const auto m = s.modulus();
  const double K = ellint_K(m);
  const double Kp = ellint_Kp(m);
  const double E = ellint_E(m);
  const double G = std::numbers::pi * std::sqrt(1.0 + s.mu) / K * std::exp(-std::numbers::pi * Kp / (2.0 * K));
  const double q = std::exp(-std::numbers::pi * Kp / K);

  const double kp2 = s.kp * s.kp;
  const double rt = std::sqrt(xi);
  const double dk = 1.0 / (rt * (1.0 + s.mu)) + 4.0 * rt / (s.mu * (1.0 + s.mu) * (1.0 + s.mu));
  const double dmu = -2.0 / s.mu;
  const double dK_dk = (E - kp2 * K) / (s.k * kp2);
  // Legendre's relation gives d(K'/K)/dk = -pi / (2 k k'^2 K^2).
  const double dratio_dk = -std::numbers::pi / (2.0 * s.k * kp2 * K * K);
  const double dlnG = 0.5 * dmu / (1.0 + s.mu) - dK_dk / K * dk - 0.5 * std::numbers::pi * dratio_dk * dk;
  const double dlnq = -std::numbers::pi * dratio_dk * dk;
  return {G, dlnG, q, dlnq};
}

}  // namespace detail

/// Averaged 1:1 coupling G(xi), xi in [0, 1/4). G(0) = 0.
inline double coupling_G(double xi, CouplingModel model = CouplingModel::Truncated) {
  detail::require_energy(xi, false, "coupling_G");
  if (xi == 0.0) return 0.0;
  const auto c = detail::coupling_parts(xi);
  return model == CouplingModel::Truncated ? c.G : c.G / (1.0 - c.nome);
}

/// dG/dxi, analytic; +inf at xi = 0 where G ~ sqrt(xi/2).
inline double coupling_G_derivative(double xi, CouplingModel model = CouplingModel::Truncated) {
  detail::require_energy(xi, false, "coupling_G_derivative");
  if (xi == 0.0) return std::numeric_limits<double>::infinity();
  const auto c = detail::coupling_parts(xi);
  if (model == CouplingModel::Truncated) return c.G * c.dlnG;
  const double full = c.G / (1.0 - c.nome);
  return full * (c.dlnG + c.nome / (1.0 - c.nome) * c.dlnq);
}

/// Slow coordinates of an initial condition at tau = 0: (theta - Psi mod 2pi, H0).
inline SlowState slow_coords_of_ic(const PhasePoint& pt, double Psi) {
  const auto ae = angle_of_state(pt);
  return {wrap_two_pi(ae.theta - Psi), ae.E};
}

}  // namespace escape_atlas

#endif  // ESCAPE_ATLAS_ACTION_ANGLE_HPP
