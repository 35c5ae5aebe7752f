#ifndef ESCAPE_ATLAS_SLOW_FLOW_HPP
#define ESCAPE_ATLAS_SLOW_FLOW_HPP

// Slow flow on the 1:1 resonance manifold and the escape thresholds it predicts.
//
// First integral: C(gamma, xi) = -F G(xi) cos(gamma) - Omega J(xi) + xi, with
// J(xi) the action. A level set C = c is {cos(gamma) = (a(xi) - c) / (F G(xi))}
// where a = xi - Omega J, so its connected pieces are exactly the xi-intervals
// on which |a - c| <= F G. Escape happens when the piece through the initial
// state reaches xi_max.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "escape_atlas/action_angle.hpp"

namespace escape_atlas {

/// Saddles closer to the separatrix than this are not searched for: G' changes
/// sign near xi = 0.2492 and the averaged picture is meaningless there.
inline constexpr double kSaddleSearchCeiling = 0.2495;

struct FirstIntegralContext {
  double F = 0.0;
  double Omega = 1.0;
  CouplingModel coupling = CouplingModel::Truncated;

  const FirstIntegralContext& validate() const {
    if (!(F >= 0.0) || !std::isfinite(F)) throw std::domain_error("first integral: F must be >= 0");
    if (!(Omega > 0.0) || !std::isfinite(Omega)) throw std::domain_error("first integral: Omega must be > 0");
    return *this;
  }
};

/// xi - Omega J(xi): the gamma-independent part of C.
inline double resonance_offset(double xi, double Omega) { return xi - Omega * action_of_energy(xi); }

inline double C_value(const SlowState& s, const FirstIntegralContext& ctx) {
  if (!(s.xi >= 0.0 && s.xi < kBarrierEnergy)) {
    throw std::domain_error("C_value: xi must lie in [0, 1/4), got " + std::to_string(s.xi));
  }
  return -ctx.F * coupling_G(s.xi, ctx.coupling) * std::cos(s.gamma) + resonance_offset(s.xi, ctx.Omega);
}

struct SlowVector {
  double gamma = 0.0;
  double xi = 0.0;
};

/// (dC/dgamma, dC/dxi); dJ/dxi = 1 / angle_frequency.
inline SlowVector C_gradient(const SlowState& s, const FirstIntegralContext& ctx) {
  const double G = coupling_G(s.xi, ctx.coupling);
  const double dG = coupling_G_derivative(s.xi, ctx.coupling);
  return {ctx.F * G * std::sin(s.gamma),
          -ctx.F * dG * std::cos(s.gamma) - ctx.Omega / angle_frequency(s.xi) + 1.0};
}

/// Time derivatives (dgamma/dtau, dxi/dtau) of the averaged flow.
///
/// With theta' = angle_frequency(xi), dxi/dtau = -theta' dC/dgamma and
/// dgamma/dtau = theta' dC/dxi, so C is an exact invariant.
inline SlowVector slow_rhs(const SlowState& s, const FirstIntegralContext& ctx) {
  if (!(s.xi > 0.0 && s.xi < kBarrierEnergy)) {
    throw std::domain_error("slow_rhs: xi must lie in (0, 1/4), got " + std::to_string(s.xi));
  }
  const double w = angle_frequency(s.xi);
  const auto g = C_gradient(s, ctx);
  return {w * g.xi, -w * g.gamma};
}

/// Hessian determinant of C at a point with sin(gamma) = 0.
inline double C_hessian_det_on_axis(double xi, double cos_gamma, const FirstIntegralContext& ctx) {
  const double h = 1e-6 * std::min(xi, kBarrierEnergy - xi);
  auto phi = [&](double x) {
    return 1.0 - ctx.Omega / angle_frequency(x) - cos_gamma * ctx.F * coupling_G_derivative(x, ctx.coupling);
  };
  const double c_xixi = (phi(xi + h) - phi(xi - h)) / (2.0 * h);
  const double c_gg = ctx.F * coupling_G(xi, ctx.coupling) * cos_gamma;
  return c_gg * c_xixi;
}

namespace detail {

/// Illinois-modified regula falsi on a sign-changing bracket.
inline double bracket_root(const std::function<double(double)>& f, double a, double b, double fa, double fb,
                           double xtol = 1e-14) {
  if (fa == 0.0) return a;
  if (fb == 0.0) return b;
  int side = 0;
  for (int i = 0; i < 200 && std::abs(b - a) > xtol * std::max(1.0, std::abs(a)); ++i) {
    double c = (a * fb - b * fa) / (fb - fa);
    if (!(c > std::min(a, b) && c < std::max(a, b))) c = 0.5 * (a + b);
    const double fc = f(c);
    if (fc == 0.0) return c;
    if ((fc > 0.0) == (fb > 0.0)) {
      b = c;
      fb = fc;
      if (side == -1) fa *= 0.5;
      side = -1;
    } else {
      a = c;
      fa = fc;
      if (side == 1) fb *= 0.5;
      side = 1;
    }
  }
  return std::abs(fa) < std::abs(fb) ? a : b;
}

/// Golden-section maximiser on [a, b].
template <class Fn>
double golden_max(Fn&& f, double a, double b, double xtol = 1e-13) {
  const double r = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = b - r * (b - a);
  double d = a + r * (b - a);
  double fc = f(c);
  double fd = f(d);
  for (int i = 0; i < 200 && (b - a) > xtol * std::max(1.0, std::abs(a)); ++i) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - r * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + r * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

inline void require_ic_below(const SlowState& ic, double xi_max) {
  require_truncation_level(xi_max);
  if (!(ic.xi >= 0.0 && ic.xi < xi_max)) {
    throw std::domain_error("initial slow state must satisfy 0 <= xi_ini < xi_max");
  }
}

}  // namespace detail

struct SaddlePoint {
  double gamma_dag = 0.0;  ///< 0 or pi
  double xi_dag = 0.0;
  double C_value = 0.0;
};

/// Every saddle of C with xi in (0, kSaddleSearchCeiling], ordered by xi.
///
/// Critical points sit on gamma in {0, pi} where dC/dxi = 0. With sigma = cos(gamma),
/// det H = sigma F G * d/dxi(dC/dxi), so a saddle is a falling zero of dC/dxi on
/// gamma = 0 or a rising zero on gamma = pi.
inline std::vector<SaddlePoint> find_saddles(const FirstIntegralContext& ctx, int grid = 400) {
  ctx.validate();
  std::vector<SaddlePoint> out;
  if (ctx.F == 0.0) return out;
  for (double sigma : {1.0, -1.0}) {
    std::function<double(double)> phi = [&](double x) {
      return 1.0 - ctx.Omega / angle_frequency(x) - sigma * ctx.F * coupling_G_derivative(x, ctx.coupling);
    };
    const double lo = 1e-6;
    const double hi = kSaddleSearchCeiling;
    double x0 = lo;
    double f0 = phi(x0);
    for (int i = 1; i <= grid; ++i) {
      const double x1 = lo + (hi - lo) * i / grid;
      const double f1 = phi(x1);
      if ((f0 > 0.0) != (f1 > 0.0)) {
        const double root = detail::bracket_root(phi, x0, x1, f0, f1);
        const bool falling = f1 < f0;
        if ((sigma > 0.0) == falling) {
          SaddlePoint sp{sigma > 0.0 ? 0.0 : std::numbers::pi, root, 0.0};
          sp.C_value = C_value({sp.gamma_dag, sp.xi_dag}, ctx);
          out.push_back(sp);
        }
      }
      x0 = x1;
      f0 = f1;
    }
  }
  std::sort(out.begin(), out.end(), [](const SaddlePoint& a, const SaddlePoint& b) { return a.xi_dag < b.xi_dag; });
  return out;
}

/// The lowest-energy saddle, if any.
inline std::optional<SaddlePoint> find_saddle(const FirstIntegralContext& ctx) {
  auto all = find_saddles(ctx);
  if (all.empty()) return std::nullopt;
  return all.front();
}

enum class MechanismKind { MM, SM, SMM };

inline const char* to_string(MechanismKind m) {
  switch (m) {
    case MechanismKind::MM: return "MM";
    case MechanismKind::SM: return "SM";
    case MechanismKind::SMM: return "SMM";
  }
  return "?";
}

struct MmThreshold {
  double F_cr = 0.0;
  double gamma_star = 0.0;  ///< 0 or pi
};

/// Smallest F >= 0 putting the initial state on the level through (gamma*, xi_max).
///
/// Both sides of C(ic) = C(gamma*, xi_max) are linear in F, so each gamma* branch
/// is a single division.
inline std::optional<MmThreshold> fcr_mm(double Omega, const SlowState& ic, double xi_max,
                                         CouplingModel coupling = CouplingModel::Truncated) {
  if (!(Omega > 0.0)) throw std::domain_error("fcr_mm: Omega must be > 0");
  require_truncation_level(xi_max);
  if (!(ic.xi >= 0.0 && ic.xi <= xi_max)) throw std::domain_error("fcr_mm: xi_ini must lie in [0, xi_max]");
  if (xi_max >= kBarrierEnergy) throw std::domain_error("fcr_mm: tangency at the separatrix is undefined");
  const double g = coupling_G(ic.xi, coupling) * std::cos(ic.gamma);
  const double Gm = coupling_G(xi_max, coupling);
  const double da = resonance_offset(ic.xi, Omega) - resonance_offset(xi_max, Omega);
  std::optional<MmThreshold> best;
  for (double gamma_star : {0.0, std::numbers::pi}) {
    const double denom = g - Gm * std::cos(gamma_star);
    double F;
    if (std::abs(denom) <= 1e-15) {
      if (std::abs(da) > 1e-15) continue;
      F = 0.0;
    } else {
      F = da / denom;
    }
    if (!(F >= 0.0) || !std::isfinite(F)) continue;
    if (!best || F < best->F_cr) best = MmThreshold{F, gamma_star};
  }
  return best;
}

struct SmCurvePoint {
  double Omega = 0.0;
  double F_cr = 0.0;
  double xi_dag = 0.0;
  double gamma_dag = 0.0;
};

/// Threshold curve (Omega(xi_dag), F(xi_dag)) for escape over a saddle.
///
/// For each xi_dag and branch sigma = cos(gamma_dag) the conditions
///   Omega / theta'(xi_dag) + F sigma G'(xi_dag) = 1
///   Omega (J_ini - J_dag) + F (G_ini cos(gamma_ini) - sigma G_dag) = xi_ini - xi_dag
/// are a 2x2 linear system. Only solutions with F > 0, Omega > 0 and a negative
/// Hessian determinant are kept. Failed points are reported through `skipped`.
inline std::vector<SmCurvePoint> fcr_sm_curve(std::span<const double> xi_dag_grid, const SlowState& ic,
                                              double xi_max, CouplingModel coupling = CouplingModel::Truncated,
                                              std::vector<std::string>* skipped = nullptr) {
  require_truncation_level(xi_max);
  std::vector<SmCurvePoint> out;
  const double g = coupling_G(ic.xi, coupling) * std::cos(ic.gamma);
  const double Ji = action_of_energy(ic.xi);
  for (double xd : xi_dag_grid) {
    if (!(xd > 0.0 && xd < std::min(xi_max, kBarrierEnergy))) {
      if (skipped) skipped->push_back("xi_dag " + std::to_string(xd) + " outside (0, min(xi_max, 1/4))");
      continue;
    }
    const double w = angle_frequency(xd);
    const double Gd = coupling_G(xd, coupling);
    const double dGd = coupling_G_derivative(xd, coupling);
    const double Jd = action_of_energy(xd);
    for (double sigma : {1.0, -1.0}) {
      // [1/w, sigma dG; Ji - Jd, g - sigma Gd] (Omega, F) = (1, xi_ini - xi_dag)
      const double a11 = 1.0 / w;
      const double a12 = sigma * dGd;
      const double a21 = Ji - Jd;
      const double a22 = g - sigma * Gd;
      const double det = a11 * a22 - a12 * a21;
      if (std::abs(det) < 1e-300) {
        if (skipped) skipped->push_back("singular system at xi_dag " + std::to_string(xd));
        continue;
      }
      const double b2 = ic.xi - xd;
      const double Omega = (a22 - a12 * b2) / det;
      const double F = (a11 * b2 - a21) / det;
      if (!(Omega > 0.0 && F > 0.0)) continue;
      const FirstIntegralContext ctx{F, Omega, coupling};
      if (!(C_hessian_det_on_axis(xd, sigma, ctx) < 0.0)) continue;
      out.push_back({Omega, F, xd, sigma > 0.0 ? 0.0 : std::numbers::pi});
    }
  }
  return out;
}

/// Interval of xi covered by the level-set piece of C through `s`, searched
/// within [floor, ceiling]. Grid-and-bracket search: pinch points narrower than
/// the grid spacing can be stepped over.
struct LevelSpan {
  double xi_lo = 0.0;
  double xi_hi = 0.0;
  double level = 0.0;
};

inline LevelSpan level_span(const FirstIntegralContext& ctx, const SlowState& s, double floor = 0.0,
                            double ceiling = kSaddleSearchCeiling, int grid = 2000) {
  ctx.validate();
  const double c = C_value(s, ctx);
  std::function<double(double)> h = [&](double x) {
    return ctx.F * coupling_G(x, ctx.coupling) - std::abs(resonance_offset(x, ctx.Omega) - c);
  };
  const double step = (ceiling - floor) / grid;
  auto walk = [&](double dir, double limit) {
    double x0 = s.xi;
    double f0 = std::max(h(x0), 0.0);
    while ((dir > 0.0) ? x0 < limit : x0 > limit) {
      const double x1 = (dir > 0.0) ? std::min(x0 + step, limit) : std::max(x0 - step, limit);
      const double f1 = h(x1);
      if (f1 < 0.0) return detail::bracket_root(h, x0, x1, f0 == 0.0 ? 1e-300 : f0, f1);
      x0 = x1;
      f0 = f1;
    }
    return limit;
  };
  return {walk(-1.0, floor), walk(1.0, ceiling), c};
}

struct EnvelopePoint {
  double Omega = 0.0;
  double F_cr = 0.0;
  MechanismKind mechanism = MechanismKind::MM;
  double gamma_star = 0.0;  ///< gamma where the critical level pinches or touches xi_star
  double xi_star = 0.0;     ///< energy of the bottleneck (xi_max for MM/SMM, xi_dag for SM)
};

/// Exact averaged escape threshold for one initial state and truncation level.
///
/// The level piece through the IC reaches xi_max iff, for every xi in
/// [xi_ini, xi_max], F (G - g) >= a(xi) - a_ini and F (G + g) >= a_ini - a(xi)
/// with g = G_ini cos(gamma_ini). F_cr is the largest of these pointwise lower
/// bounds. J and G are tabulated once, so sweeping Omega is cheap. When the
/// IC sits on gamma = 0 the supremum can be the limit xi -> xi_ini, i.e. the
/// IC itself becomes the saddle.
class ThresholdProfile {
 public:
  ThresholdProfile(const SlowState& ic, double xi_max, CouplingModel coupling = CouplingModel::Truncated,
                   int grid = 2048)
      : ic_(ic), xi_max_(xi_max), coupling_(coupling) {
    detail::require_ic_below(ic, xi_max);
    if (xi_max >= kBarrierEnergy) throw std::domain_error("ThresholdProfile: xi_max must be < 1/4");
    if (grid < 8) throw std::invalid_argument("ThresholdProfile: grid too coarse");
    g_ = coupling_G(ic.xi, coupling) * std::cos(ic.gamma);
    Ji_ = action_of_energy(ic.xi);
    xs_.resize(grid);
    J_.resize(grid);
    G_.resize(grid);
    for (int j = 0; j < grid; ++j) {
      // Quadratic spacing: the bound can peak within ~1e-5 of xi_ini when gamma_ini is near 0.
      const double t = static_cast<double>(j + 1) / grid;
      xs_[j] = ic.xi + (xi_max - ic.xi) * t * t;
      J_[j] = action_of_energy(xs_[j]);
      G_[j] = coupling_G(xs_[j], coupling);
    }
  }

  const SlowState& ic() const { return ic_; }
  double xi_max() const { return xi_max_; }
  CouplingModel coupling() const { return coupling_; }

  /// Lower bound on F imposed at energy xi, and which gamma branch imposes it.
  struct Bound {
    double F;
    double gamma;
  };

  Bound bound(double xi, double J, double G, double Omega) const {
    const double da = (xi - ic_.xi) - Omega * (J - Ji_);
    if (da > 0.0) return {G - g_ > 0.0 ? da / (G - g_) : std::numeric_limits<double>::infinity(), 0.0};
    if (da < 0.0) {
      return {G + g_ > 0.0 ? -da / (G + g_) : std::numeric_limits<double>::infinity(), std::numbers::pi};
    }
    return {0.0, 0.0};
  }

  Bound bound_at(double xi, double Omega) const {
    return bound(xi, action_of_energy(xi), coupling_G(xi, coupling_), Omega);
  }

  EnvelopePoint at(double Omega) const {
    if (!(Omega > 0.0)) throw std::domain_error("ThresholdProfile: Omega must be > 0");
    const int n = static_cast<int>(xs_.size());
    int best = 0;
    double best_f = -1.0;
    for (int j = 0; j < n; ++j) {
      const double f = bound(xs_[j], J_[j], G_[j], Omega).F;
      if (f > best_f) {
        best_f = f;
        best = j;
      }
    }
    EnvelopePoint pt;
    pt.Omega = Omega;
    if (best == n - 1) {
      const auto b = bound(xs_[best], J_[best], G_[best], Omega);
      pt.F_cr = b.F;
      pt.xi_star = xi_max_;
      pt.gamma_star = b.gamma;
      pt.mechanism = MechanismKind::MM;
      if (b.gamma == 0.0 && std::isfinite(b.F) && b.F > 0.0) {
        for (const auto& sp : find_saddles({b.F, Omega, coupling_})) {
          if (sp.gamma_dag == 0.0 && sp.xi_dag > xi_max_) {
            pt.mechanism = MechanismKind::SMM;
            break;
          }
        }
      }
      return pt;
    }
    const double a = best == 0 ? ic_.xi : xs_[best - 1];
    const double b = xs_[best + 1];
    const double xs = detail::golden_max([&](double x) { return bound_at(x, Omega).F; }, a, b);
    const auto bx = bound_at(xs, Omega);
    const double f = std::max(bx.F, best_f);
    pt.F_cr = f;
    pt.xi_star = bx.F >= best_f ? xs : xs_[best];
    pt.gamma_star = bx.gamma;
    pt.mechanism = MechanismKind::SM;
    return pt;
  }

 private:
  SlowState ic_;
  double xi_max_;
  CouplingModel coupling_;
  double g_ = 0.0;
  double Ji_ = 0.0;
  std::vector<double> xs_;
  std::vector<double> J_;
  std::vector<double> G_;
};

/// Analytic threshold curve over an Omega grid, in grid order.
inline std::vector<EnvelopePoint> fcr_envelope(std::span<const double> Omega_grid, const SlowState& ic,
                                               double xi_max, CouplingModel coupling = CouplingModel::Truncated) {
  const ThresholdProfile profile(ic, xi_max, coupling);
  std::vector<EnvelopePoint> out;
  out.reserve(Omega_grid.size());
  for (double w : Omega_grid) out.push_back(profile.at(w));
  return out;
}

/// Mechanism through which the IC's level piece first reaches xi_max as F grows
/// past the threshold. With F = 0 nothing escapes and MM is returned.
inline MechanismKind classify_mechanism(double Omega, const SlowState& ic, double xi_max, double F,
                                        CouplingModel coupling = CouplingModel::Truncated) {
  if (!(F > 0.0)) return MechanismKind::MM;
  return ThresholdProfile(ic, xi_max, coupling).at(Omega).mechanism;
}

/// True when the level piece through `ic` reaches xi_max (boundary inclusive).
inline bool escapes_analytically(const FirstIntegralContext& ctx, const SlowState& ic, double xi_max) {
  ctx.validate();
  if (ic.xi >= xi_max) return true;
  if (ctx.F == 0.0) return false;
  const ThresholdProfile profile(ic, xi_max, ctx.coupling, 512);
  return ctx.F >= profile.at(ctx.Omega).F_cr;
}

}  // namespace escape_atlas

#endif  // ESCAPE_ATLAS_SLOW_FLOW_HPP
