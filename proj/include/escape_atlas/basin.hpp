#ifndef ESCAPE_ATLAS_BASIN_HPP
#define ESCAPE_ATLAS_BASIN_HPP

// Analytic safe basins on the (gamma, xi) cylinder and their images on the
// (q0, p0) plane.
//
// A level set C = L is the graph cos(gamma) = c(xi) = (a(xi) - L) / (F G(xi))
// over the xi intervals where |c| <= 1. One such interval [xi_lo, xi_hi] is one
// closed curve: at both ends c = +-1 and the two branches +-acos(c) meet.
// Equal end signs give a loop around gamma = 0 or pi (island); opposite signs
// give a curve that winds once around the cylinder (peninsula). The enclosed
// side is fixed by the sign of C - L, which is what membership tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "escape_atlas/action_angle.hpp"
#include "escape_atlas/model.hpp"
#include "escape_atlas/slow_flow.hpp"

namespace escape_atlas {

enum class BasinType { SBMT_island, SBMT_peninsula, SBST };

inline const char* to_string(BasinType t) {
  switch (t) {
    case BasinType::SBMT_island: return "SBMT_island";
    case BasinType::SBMT_peninsula: return "SBMT_peninsula";
    case BasinType::SBST: return "SBST";
  }
  return "?";
}

/// Levels this close to zero are treated as the limiting phase trajectory,
/// whose closed curve runs down to the rest state xi = 0.
inline constexpr double kLptLevelTolerance = 1e-12;

/// Default number of samples per branch of a traced curve.
inline constexpr int kBoundarySamples = 513;

struct BasinBoundary {
  BasinType basin_type = BasinType::SBMT_peninsula;
  double level = 0.0;
  double xi_lo = 0.0;
  double xi_hi = 0.0;
  /// +1 if the curve meets xi_lo at gamma = 0, -1 if at gamma = pi.
  int end_sign_lo = 1;
  bool wraps = true;
  bool lpt = false;
  /// Closed curve on the cylinder; gamma is unwrapped so an island spans less
  /// than 2 pi and a wrapping curve exactly 2 pi.
  std::vector<SlowState> cylinder_polyline;
  std::vector<std::vector<PhasePoint>> plane_polylines;

  double gamma_span() const {
    if (cylinder_polyline.empty()) return 0.0;
    auto [lo, hi] = std::minmax_element(cylinder_polyline.begin(), cylinder_polyline.end(),
                                        [](const SlowState& a, const SlowState& b) { return a.gamma < b.gamma; });
    return hi->gamma - lo->gamma;
  }
};

struct SafeRegion {
  FirstIntegralContext ctx;
  double xi_max = kBarrierEnergy;
  double Psi = 0.0;
  /// F = 0: every state with xi <= xi_max is safe and the boundary is the circle xi = xi_max.
  bool unforced = false;
  std::vector<BasinBoundary> boundaries;

  bool empty() const { return boundaries.empty() && !unforced; }
  bool has(BasinType t) const {
    return std::any_of(boundaries.begin(), boundaries.end(), [t](const BasinBoundary& b) { return b.basin_type == t; });
  }
  /// Both basin types present at once.
  bool coexisting() const {
    return has(BasinType::SBST) && (has(BasinType::SBMT_island) || has(BasinType::SBMT_peninsula));
  }
};

namespace detail {

/// Where the curve of level L sits at xi: c = cos(gamma), unclamped.
inline double level_cosine(double xi, double level, const FirstIntegralContext& ctx) {
  return (resonance_offset(xi, ctx.Omega) - level) / (ctx.F * coupling_G(xi, ctx.coupling));
}

/// Closed curve over [xi_lo, xi_hi]. Samples are clustered toward the ends,
/// where gamma moves like sqrt(xi - xi_end).
inline BasinBoundary build_boundary(BasinType type, double level, double xi_lo, double xi_hi, int end_sign_lo,
                                    bool lpt, const FirstIntegralContext& ctx, int samples) {
  BasinBoundary b;
  b.basin_type = type;
  b.level = level;
  b.xi_lo = xi_lo;
  b.xi_hi = xi_hi;
  b.end_sign_lo = end_sign_lo;
  b.lpt = lpt;
  std::vector<double> xi(samples);
  std::vector<double> g(samples);
  for (int i = 0; i < samples; ++i) {
    const double t = static_cast<double>(i) / (samples - 1);
    xi[i] = i == samples - 1 ? xi_hi : xi_lo + (xi_hi - xi_lo) * 0.5 * (1.0 - std::cos(std::numbers::pi * t));
    if (xi[i] == 0.0) {
      // G(0) = 0: the limit of c is 0, so the LPT leaves the rest state at gamma = +-pi/2.
      g[i] = 0.5 * std::numbers::pi;
    } else {
      g[i] = std::acos(std::clamp(level_cosine(xi[i], level, ctx), -1.0, 1.0));
    }
  }
  const double end_hi = std::cos(g.back()) >= 0.0 ? 1.0 : -1.0;
  b.wraps = !lpt && end_hi != end_sign_lo;
  auto& poly = b.cylinder_polyline;
  poly.reserve(2 * samples);
  if (!b.wraps) {
    // Loop around gamma = 0 (branches +-acos) or pi (acos and 2 pi - acos).
    const double centre = end_sign_lo > 0 ? 0.0 : std::numbers::pi;
    for (int i = 0; i < samples; ++i) poly.push_back({centre + std::abs(g[i] - centre), xi[i]});
    for (int i = samples - 2; i >= 1; --i) poly.push_back({centre - std::abs(g[i] - centre), xi[i]});
    poly.push_back(poly.front());
  } else if (end_sign_lo > 0) {
    // gamma = 0 at xi_lo, +-pi at xi_hi.
    for (int i = samples - 1; i >= 0; --i) poly.push_back({-g[i], xi[i]});
    for (int i = 1; i < samples; ++i) poly.push_back({g[i], xi[i]});
  } else {
    // gamma = pi at xi_lo, 0 and 2 pi at xi_hi.
    for (int i = samples - 1; i >= 0; --i) poly.push_back({g[i], xi[i]});
    for (int i = 1; i < samples; ++i) poly.push_back({2.0 * std::numbers::pi - g[i], xi[i]});
  }
  return b;
}

/// Lower end of the xi interval of {C = level} that contains `from`, searched
/// down to `floor`. Returns floor when the curve runs all the way down.
inline double level_interval_floor(const FirstIntegralContext& ctx, double level, double from, double floor,
                                   int grid) {
  std::function<double(double)> h = [&](double x) {
    return ctx.F * coupling_G(x, ctx.coupling) - std::abs(resonance_offset(x, ctx.Omega) - level);
  };
  const double step = (from - floor) / grid;
  double x0 = from;
  double f0 = std::max(h(x0), 0.0);
  for (int i = 1; i <= grid; ++i) {
    const double x1 = i == grid ? floor : from - step * i;
    const double f1 = h(x1);
    if (f1 < 0.0) return bracket_root(h, x0, x1, f0 == 0.0 ? 1e-300 : f0, f1);
    x0 = x1;
    f0 = f1;
  }
  return floor;
}

/// Upper counterpart; returns `ceiling` when h stays non-negative up to it.
inline double level_interval_ceiling(const FirstIntegralContext& ctx, double level, double from, double ceiling,
                                     int grid) {
  std::function<double(double)> h = [&](double x) {
    return ctx.F * coupling_G(x, ctx.coupling) - std::abs(resonance_offset(x, ctx.Omega) - level);
  };
  const double step = (ceiling - from) / grid;
  double x0 = from;
  double f0 = std::max(h(x0), 0.0);
  for (int i = 1; i <= grid; ++i) {
    const double x1 = i == grid ? ceiling : from + step * i;
    const double f1 = h(x1);
    if (f1 < 0.0) return bracket_root(h, x0, x1, f0 == 0.0 ? 1e-300 : f0, f1);
    x0 = x1;
    f0 = f1;
  }
  return ceiling;
}

inline int end_sign(double xi, double level, const FirstIntegralContext& ctx) {
  if (xi == 0.0) return level <= 0.0 ? 1 : -1;
  return level_cosine(xi, level, ctx) >= 0.0 ? 1 : -1;
}

inline constexpr int kIntervalGrid = 4000;

}  // namespace detail

/// Maximum-type boundaries: level curves tangent to xi = xi_max from below at
/// gamma* = 0 and/or pi. Both tangencies can qualify; all are returned.
inline std::vector<BasinBoundary> trace_sbmt_all(const FirstIntegralContext& ctx, double xi_max,
                                                 int samples = kBoundarySamples) {
  ctx.validate();
  require_truncation_level(xi_max);
  if (xi_max >= kBarrierEnergy) {
    throw std::domain_error("trace_sbmt: the tangent point at xi_max = 1/4 is not defined");
  }
  if (!(ctx.F > 0.0)) throw std::domain_error("trace_sbmt: requires F > 0");
  std::vector<BasinBoundary> out;
  for (double gamma_star : {0.0, std::numbers::pi}) {
    const double sigma = std::cos(gamma_star);
    // The curve bends below xi_max iff sigma dC/dxi > 0 at the tangency.
    if (!(sigma * C_gradient({gamma_star, xi_max}, ctx).xi > 0.0)) continue;
    const double level = C_value({gamma_star, xi_max}, ctx);
    const bool lpt = std::abs(level) <= kLptLevelTolerance;
    double xi_lo = detail::level_interval_floor(ctx, level, xi_max, 0.0, detail::kIntervalGrid);
    if (lpt) xi_lo = 0.0;
    const int s_lo = detail::end_sign(xi_lo, level, ctx);
    const bool wraps = !lpt && s_lo != static_cast<int>(sigma);
    auto b = detail::build_boundary(wraps ? BasinType::SBMT_peninsula : BasinType::SBMT_island, level, xi_lo, xi_max,
                                    lpt ? static_cast<int>(sigma) : s_lo, lpt, ctx, samples);
    out.push_back(std::move(b));
  }
  return out;
}

/// The maximum-type boundary with the larger enclosed xi range, if any.
inline std::optional<BasinBoundary> trace_sbmt(const FirstIntegralContext& ctx, double xi_max,
                                               int samples = kBoundarySamples) {
  auto all = trace_sbmt_all(ctx, xi_max, samples);
  if (all.empty()) return std::nullopt;
  return *std::min_element(all.begin(), all.end(),
                           [](const BasinBoundary& a, const BasinBoundary& b) { return a.xi_lo < b.xi_lo; });
}

/// Saddle-type boundary: the piece of the saddle's separatrix that winds
/// around the cylinder below xi_max. The upper piece is preferred when it also
/// winds and stays below xi_max, since it encloses the lower one.
inline std::optional<BasinBoundary> trace_sbst(const FirstIntegralContext& ctx, double xi_max,
                                               int samples = kBoundarySamples) {
  ctx.validate();
  require_truncation_level(xi_max);
  if (!(ctx.F > 0.0)) return std::nullopt;
  const auto saddle = find_saddle(ctx);
  if (!saddle || !(saddle->xi_dag < xi_max)) return std::nullopt;
  const double level = saddle->C_value;
  const double xd = saddle->xi_dag;
  const int s_mid = saddle->gamma_dag == 0.0 ? 1 : -1;

  const double top = detail::level_interval_ceiling(ctx, level, xd, xi_max, detail::kIntervalGrid);
  if (top < xi_max && detail::end_sign(top, level, ctx) != s_mid) {
    return detail::build_boundary(BasinType::SBST, level, xd, top, s_mid, false, ctx, samples);
  }
  const bool lpt = std::abs(level) <= kLptLevelTolerance;
  const double bottom = lpt ? 0.0 : detail::level_interval_floor(ctx, level, xd, 0.0, detail::kIntervalGrid);
  const int s_lo = detail::end_sign(bottom, level, ctx);
  if (!lpt && s_lo == s_mid) return std::nullopt;  // homoclinic loop, not a wrapping boundary
  return detail::build_boundary(BasinType::SBST, level, bottom, xd, lpt ? s_mid : s_lo, lpt, ctx, samples);
}

/// Closed safe set of one boundary (the curve itself included).
inline bool inside_boundary(const SlowState& s, const BasinBoundary& b, const FirstIntegralContext& ctx) {
  const bool below_all = b.wraps || b.lpt || b.basin_type == BasinType::SBST;
  if (s.xi < b.xi_lo) return below_all;
  if (s.xi > b.xi_hi) return false;
  const double diff = C_value(s, ctx) - b.level;
  constexpr double tol = 1e-12;
  // Island around gamma = 0 encloses C <= L, around pi C >= L; a wrapping curve
  // meeting xi_lo at gamma = 0 keeps C >= L beneath it, at pi C <= L.
  const double oriented = (b.wraps ? 1.0 : -1.0) * b.end_sign_lo * diff;
  return oriented >= -tol;
}

inline bool safe_membership(const SlowState& s, const SafeRegion& region) {
  if (!(s.xi >= 0.0 && s.xi < kBarrierEnergy)) return false;
  if (s.xi > region.xi_max) return false;
  if (region.unforced) return true;
  return std::any_of(region.boundaries.begin(), region.boundaries.end(),
                     [&](const BasinBoundary& b) { return inside_boundary(s, b, region.ctx); });
}

/// Images of the cylinder samples at tau = 0: theta = gamma + Psi.
inline std::vector<std::vector<PhasePoint>> map_to_ic_plane(const BasinBoundary& b, double Psi) {
  std::vector<PhasePoint> loop;
  loop.reserve(b.cylinder_polyline.size());
  for (const auto& s : b.cylinder_polyline) {
    const double theta = s.gamma + Psi;
    loop.push_back({q_of_angle(theta, s.xi), p_of_angle(theta, s.xi)});
  }
  if (!loop.empty() && !(loop.front() == loop.back())) loop.push_back(loop.front());
  return {std::move(loop)};
}

/// Whether an IC in the plane lies in the analytic safe region.
inline bool safe_in_plane(const PhasePoint& ic, const SafeRegion& region) {
  if (!(std::abs(ic.q) < 1.0)) return false;
  const double E = hamiltonian(ic);
  if (!(E >= 0.0 && E < kBarrierEnergy) || E > region.xi_max) return false;
  return safe_membership(slow_coords_of_ic(ic, region.Psi), region);
}

/// All analytic safe basins for the given parameters.
inline SafeRegion analytic_basin(ModelParams params, CouplingModel coupling = CouplingModel::Truncated,
                                 int samples = kBoundarySamples) {
  params.validate();
  SafeRegion region;
  region.ctx = {params.F, params.Omega, coupling};
  region.xi_max = params.xi_max;
  region.Psi = params.Psi;
  if (params.F == 0.0) {
    region.unforced = true;
    BasinBoundary b;
    b.basin_type = BasinType::SBMT_peninsula;
    b.level = resonance_offset(std::min(params.xi_max, std::nextafter(kBarrierEnergy, 0.0)), params.Omega);
    b.xi_lo = b.xi_hi = params.xi_max;
    for (int i = 0; i < 2 * samples - 1; ++i) {
      b.cylinder_polyline.push_back({-std::numbers::pi + std::numbers::pi * i / (samples - 1), params.xi_max});
    }
    if (params.xi_max < kBarrierEnergy) b.plane_polylines = map_to_ic_plane(b, params.Psi);
    region.boundaries.push_back(std::move(b));
    return region;
  }
  if (params.xi_max < kBarrierEnergy) {
    for (auto& b : trace_sbmt_all(region.ctx, params.xi_max, samples)) region.boundaries.push_back(std::move(b));
  }
  if (auto b = trace_sbst(region.ctx, params.xi_max, samples)) region.boundaries.push_back(std::move(*b));
  for (auto& b : region.boundaries) b.plane_polylines = map_to_ic_plane(b, params.Psi);
  return region;
}

/// Row-major raster of a predicate over a linspace grid (inclusive ends).
struct Raster {
  int nx = 0;
  int ny = 0;
  std::vector<std::uint8_t> cells;

  bool at(int i, int j) const { return cells[static_cast<std::size_t>(j) * nx + i] != 0; }
  std::size_t count() const { return static_cast<std::size_t>(std::count(cells.begin(), cells.end(), 1)); }
};

template <class Pred>
Raster rasterize(double q_lo, double q_hi, double p_lo, double p_hi, int nx, int ny, Pred&& pred) {
  if (nx < 2 || ny < 2) throw std::invalid_argument("rasterize: resolution must be at least 2x2");
  Raster r{nx, ny, std::vector<std::uint8_t>(static_cast<std::size_t>(nx) * ny, 0)};
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const PhasePoint x{q_lo + (q_hi - q_lo) * i / (nx - 1), p_lo + (p_hi - p_lo) * j / (ny - 1)};
      r.cells[static_cast<std::size_t>(j) * nx + i] = pred(x) ? 1 : 0;
    }
  }
  return r;
}

/// Sizes of the 4-connected components of the set cells, largest first.
inline std::vector<std::size_t> component_sizes(const Raster& r) {
  std::vector<int> label(r.cells.size(), -1);
  std::vector<std::size_t> sizes;
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < r.cells.size(); ++start) {
    if (!r.cells[start] || label[start] >= 0) continue;
    const int id = static_cast<int>(sizes.size());
    std::size_t n = 0;
    stack.push_back(start);
    label[start] = id;
    while (!stack.empty()) {
      const std::size_t k = stack.back();
      stack.pop_back();
      ++n;
      const int i = static_cast<int>(k % r.nx);
      const int j = static_cast<int>(k / r.nx);
      auto visit = [&](int a, int b) {
        if (a < 0 || b < 0 || a >= r.nx || b >= r.ny) return;
        const std::size_t m = static_cast<std::size_t>(b) * r.nx + a;
        if (r.cells[m] && label[m] < 0) {
          label[m] = id;
          stack.push_back(m);
        }
      };
      visit(i - 1, j);
      visit(i + 1, j);
      visit(i, j - 1);
      visit(i, j + 1);
    }
    sizes.push_back(n);
  }
  std::sort(sizes.rbegin(), sizes.rend());
  return sizes;
}

}  // namespace escape_atlas

#endif  // ESCAPE_ATLAS_BASIN_HPP
