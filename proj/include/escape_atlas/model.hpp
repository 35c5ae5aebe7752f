#ifndef ESCAPE_ATLAS_MODEL_HPP
#define ESCAPE_ATLAS_MODEL_HPP

// Harmonically forced particle in the truncated quartic well
//   q'' + q - q^3 = F sin(Omega tau + Psi).

#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>

namespace escape_atlas {

/// Barrier energy of the untruncated well V(+-1).
inline constexpr double kBarrierEnergy = 0.25;

inline double wrap_two_pi(double angle) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double r = std::fmod(angle, two_pi);
  if (r < 0.0) r += two_pi;
  if (r >= two_pi) r = 0.0;
  return r;
}

inline void require_truncation_level(double xi_max) {
  if (!(xi_max > 0.0 && xi_max <= kBarrierEnergy)) {
    throw std::domain_error("truncation energy xi_max must lie in (0, 1/4], got " + std::to_string(xi_max));
  }
}

/// Forcing and truncation parameters; the control-plane coordinates.
struct ModelParams {
  double F = 0.0;      ///< forcing amplitude, >= 0
  double Omega = 1.0;  ///< forcing frequency, > 0
  double Psi = 0.0;    ///< forcing phase [rad]
  double xi_max = kBarrierEnergy;

  /// Throws std::domain_error on out-of-range fields; reduces Psi into [0, 2pi).
  ModelParams& validate() {
    if (!(F >= 0.0) || !std::isfinite(F)) throw std::domain_error("forcing amplitude F must be >= 0");
    if (!(Omega > 0.0) || !std::isfinite(Omega)) throw std::domain_error("forcing frequency Omega must be > 0");
    if (!std::isfinite(Psi)) throw std::domain_error("forcing phase Psi must be finite");
    require_truncation_level(xi_max);
    Psi = wrap_two_pi(Psi);
    return *this;
  }

  /// One excitation cycle (EC), T = 2 pi / Omega.
  double period() const { return 2.0 * std::numbers::pi / Omega; }

  bool operator==(const ModelParams&) const = default;
};

struct PhasePoint {
  double q = 0.0;
  double p = 0.0;

  bool operator==(const PhasePoint&) const = default;
};

inline double potential_full(double q) {
  const double q2 = q * q;
  return 0.5 * q2 - 0.25 * q2 * q2;
}

/// Displacement at which V(q) = xi_max, sqrt(1 - sqrt(1 - 4 xi_max)).
inline double q_max_of(double xi_max) {
  if (!(xi_max >= 0.0 && xi_max <= kBarrierEnergy)) {
    throw std::domain_error("q_max_of: xi_max must lie in [0, 1/4], got " + std::to_string(xi_max));
  }
  // 1 - sqrt(1 - 4x) written as 4x / (1 + sqrt(1 - 4x)) to avoid cancellation.
  return std::sqrt(4.0 * xi_max / (1.0 + std::sqrt(1.0 - 4.0 * xi_max)));
}

/// Truncated potential: the quartic shifted by -V(q_max) inside |q| < q_max, zero outside.
inline double potential_truncated(double q, double xi_max) {
  require_truncation_level(xi_max);
  const double qm = q_max_of(xi_max);
  if (std::abs(q) >= qm) return 0.0;
  return potential_full(q) - potential_full(qm);
}

/// Unforced Hamiltonian H0 = p^2/2 + q^2/2 - q^4/4.
inline double hamiltonian(const PhasePoint& pt) { return 0.5 * pt.p * pt.p + potential_full(pt.q); }

/// Phase-space velocity (dq/dtau, dp/dtau). Follows the equation of motion
/// directly: dq/dtau = dH/dp, dp/dtau = -dH/dq.
inline PhasePoint eom_rhs(const PhasePoint& pt, double tau, const ModelParams& params) {
  return {pt.p, -pt.q + pt.q * pt.q * pt.q + params.F * std::sin(params.Omega * tau + params.Psi)};
}

/// A running-maximum escape test, either on |q| or on H0.
struct EscapeCriterion {
  enum class Kind { Displacement, Energy };

  Kind kind = Kind::Energy;
  double threshold = kBarrierEnergy;  ///< q_max (Displacement) or xi_max (Energy)

  static EscapeCriterion displacement(double q_max) { return {Kind::Displacement, q_max}; }
  static EscapeCriterion energy(double xi_max) { return {Kind::Energy, xi_max}; }

  /// Criterion of `kind` with threshold derived from the truncation level.
  static EscapeCriterion from_truncation(Kind kind, double xi_max) {
    require_truncation_level(xi_max);
    return kind == Kind::Energy ? energy(xi_max) : displacement(q_max_of(xi_max));
  }

  /// True when the state lies past the threshold. For the Energy criterion H0
  /// is only defined on |q| < q_max, so leaving that interval also counts:
  /// a continuous path cannot reach |q| = q_max without H0 >= xi_max first.
  bool exceeded(const PhasePoint& pt) const {
    if (kind == Kind::Displacement) return std::abs(pt.q) > threshold;
    if (std::abs(pt.q) >= domain_limit()) return true;
    return hamiltonian(pt) > threshold;
  }

  double domain_limit() const {
    if (kind == Kind::Displacement) return threshold;
    return threshold >= kBarrierEnergy ? 1.0 : q_max_of(threshold);
  }

  bool operator==(const EscapeCriterion&) const = default;
};

inline const char* to_string(EscapeCriterion::Kind kind) {
  return kind == EscapeCriterion::Kind::Energy ? "energy" : "displacement";
}

struct TrajectorySample {
  double tau = 0.0;
  PhasePoint state;
};

/// Time of the first sample at which the running maximum crosses the threshold.
inline std::optional<double> escape_detect(std::span<const TrajectorySample> trajectory,
                                           const EscapeCriterion& criterion) {
  for (const auto& s : trajectory) {
    if (criterion.exceeded(s.state)) return s.tau;
  }
  return std::nullopt;
}

}  // namespace escape_atlas

#endif  // ESCAPE_ATLAS_MODEL_HPP
