#ifndef ESCAPE_ATLAS_SIMULATE_HPP
#define ESCAPE_ATLAS_SIMULATE_HPP

// Brute-force integration of the full forced oscillator: escape times, threshold
// bisection, IC rasters, stroboscopic maps and the two-criteria comparison.
// All times crossing this interface are in excitation cycles (EC), 1 EC = 2 pi / Omega.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "escape_atlas/model.hpp"
#include "escape_atlas/ode.hpp"

namespace escape_atlas {

struct SimulationSettings {
  StepControl step{2e-12, 1e-14};
  /// Longest stretch of a step that escape detection may skip, as a fraction of T.
  double detection_fraction = 1.0 / 20.0;

  /// Keeps unforced energy drift under 1e-9 over 3000 EC anywhere in the well.
  static SimulationSettings precise() { return {}; }
  /// rtol 1e-10, atol 1e-12: adequate for the 500 EC profile, about twice as fast.
  static SimulationSettings fast() { return {StepControl{1e-10, 1e-12}, 1.0 / 20.0}; }
};

/// Runs `fn(i)` for i in [0, n) on up to `workers` threads. Each index is handled
/// exactly once; results must be written to index-owned slots, which makes the
/// outcome independent of the worker count. The first exception is rethrown.
inline void parallel_for(std::size_t n, unsigned workers, const std::function<void(std::size_t)>& fn) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next.store(n);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  const unsigned count = std::min<std::size_t>(workers, n);
  pool.reserve(count);
  for (unsigned w = 0; w < count; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

inline unsigned default_workers() { return std::max(1u, std::thread::hardware_concurrency()); }

namespace detail {

/// Integrates one trajectory and records the first escape time (EC) under each
/// criterion. Stops once every criterion has fired or at the horizon. If
/// `on_period` is set it receives (k, state) at tau = k T for k = 1, 2, ...
/// while no criterion has fired.
template <std::size_t M>
std::array<std::optional<double>, M> run_trajectory(
    const PhasePoint& ic, const ModelParams& params, double horizon_ec, const std::array<EscapeCriterion, M>& crit,
    const SimulationSettings& settings,
    const std::function<void(long, const PhasePoint&)>& on_period = nullptr) {
  if (!(horizon_ec > 0.0)) throw std::domain_error("integrate: horizon must be > 0");
  const double T = params.period();
  std::array<std::optional<double>, M> escape{};
  std::size_t pending = M;
  for (std::size_t c = 0; c < M; ++c) {
    if (crit[c].exceeded(ic)) {
      escape[c] = 0.0;
      --pending;
    }
  }
  if (pending == 0) return escape;

  const ModelParams prm = params;
  auto rhs = [prm](double t, const std::array<double, 2>& y) {
    return std::array<double, 2>{y[1], -y[0] + y[0] * y[0] * y[0] + prm.F * std::sin(prm.Omega * t + prm.Psi)};
  };
  Dop853 solver(rhs, 0.0, std::array<double, 2>{ic.q, ic.p}, horizon_ec * T, settings.step);
  const double max_gap = settings.detection_fraction * T;
  long next_period = 1;
  bool any_fired = pending < M;

  while (!solver.finished() && pending > 0) {
    solver.step();
    const double t0 = solver.t_old();
    const double t1 = solver.t();
    const int pieces = std::max(1, static_cast<int>(std::ceil((t1 - t0) / max_gap)));
    double prev_t = t0;
    double fired_at = std::numeric_limits<double>::infinity();
    for (int j = 1; j <= pieces && pending > 0; ++j) {
      const double ts = j == pieces ? t1 : t0 + (t1 - t0) * j / pieces;
      const auto y = j == pieces ? solver.y() : solver.dense(ts);
      const PhasePoint pt{y[0], y[1]};
      for (std::size_t c = 0; c < M; ++c) {
        if (escape[c] || !crit[c].exceeded(pt)) continue;
        // Refine the crossing on the dense output.
        double lo = prev_t;
        double hi = ts;
        for (int it = 0; it < 48 && hi - lo > 1e-12 * std::max(1.0, hi); ++it) {
          const double mid = 0.5 * (lo + hi);
          const auto ym = solver.dense(mid);
          (crit[c].exceeded({ym[0], ym[1]}) ? hi : lo) = mid;
        }
        escape[c] = hi / T;
        fired_at = std::min(fired_at, hi);
        --pending;
      }
      prev_t = ts;
    }
    if (on_period && !any_fired) {
      while (next_period * T <= t1 && next_period * T < fired_at) {
        const double tk = next_period * T;
        const auto y = tk == t1 ? solver.y() : solver.dense(tk);
        on_period(next_period, {y[0], y[1]});
        ++next_period;
      }
    }
    any_fired = any_fired || pending < M;
  }
  return escape;
}

}  // namespace detail

/// First escape time (EC) under `criterion`, or none within the horizon.
inline std::optional<double> integrate(const PhasePoint& ic, const ModelParams& params, double horizon_ec,
                                       const EscapeCriterion& criterion,
                                       const SimulationSettings& settings = SimulationSettings::precise()) {
  return detail::run_trajectory<1>(ic, params, horizon_ec, {criterion}, settings)[0];
}

/// Escape times under both criteria from one integration: (displacement, energy).
struct DualEscape {
  std::optional<double> displacement;
  std::optional<double> energy;
};

inline DualEscape integrate_both(const PhasePoint& ic, const ModelParams& params, double horizon_ec,
                                 const SimulationSettings& settings = SimulationSettings::precise()) {
  const std::array<EscapeCriterion, 2> crit = {
      EscapeCriterion::from_truncation(EscapeCriterion::Kind::Displacement, params.xi_max),
      EscapeCriterion::from_truncation(EscapeCriterion::Kind::Energy, params.xi_max)};
  const auto r = detail::run_trajectory<2>(ic, params, horizon_ec, crit, settings);
  return {r[0], r[1]};
}

class BracketError : public std::runtime_error {
 public:
  BracketError(const std::string& what, double lo, double hi) : std::runtime_error(what), F_lo(lo), F_hi(hi) {}
  double F_lo;
  double F_hi;
};

struct BisectionOptions {
  double tolerance = 5e-5;  ///< final bracket width in F
  double horizon_ec = 3000.0;
  SimulationSettings settings = SimulationSettings::precise();
};

/// Critical forcing by bisection: smallest F in [F_lo, F_hi] for which `ic`
/// escapes within the horizon. Returns the midpoint of the final bracket.
inline double bisect_fcr(double Omega, const PhasePoint& ic, const ModelParams& params_base,
                         const EscapeCriterion& criterion, double F_lo, double F_hi,
                         const BisectionOptions& opt = {}) {
  if (!(F_lo >= 0.0 && F_hi > F_lo)) throw BracketError("bisect_fcr: need 0 <= F_lo < F_hi", F_lo, F_hi);
  auto escapes = [&](double F) {
    ModelParams p = params_base;
    p.F = F;
    p.Omega = Omega;
    p.validate();
    return integrate(ic, p, opt.horizon_ec, criterion, opt.settings).has_value();
  };
  if (!escapes(F_hi)) {
    throw BracketError("bisect_fcr: no escape at F_hi = " + std::to_string(F_hi) + " (F_lo = " +
                           std::to_string(F_lo) + ")",
                       F_lo, F_hi);
  }
  if (escapes(F_lo)) {
    throw BracketError("bisect_fcr: already escapes at F_lo = " + std::to_string(F_lo) + " (F_hi = " +
                           std::to_string(F_hi) + ")",
                       F_lo, F_hi);
  }
  while (F_hi - F_lo > opt.tolerance) {
    const double mid = 0.5 * (F_lo + F_hi);
    (escapes(mid) ? F_hi : F_lo) = mid;
  }
  return 0.5 * (F_lo + F_hi);
}

/// Smallest escaping F near `F_guess`. Escape is not monotone in F (isolated
/// escape windows sit below the main threshold), so plain bisection from an
/// arbitrary bracket lands on whichever transition it meets first. Instead F
/// is scanned upward in steps of `scan_step * F_guess` from the largest
/// non-escaping value found below the guess, and the first escaping step is
/// bisected. Windows narrower than one step can be missed.
inline double bisect_fcr_around(double Omega, const PhasePoint& ic, const ModelParams& params_base,
                                const EscapeCriterion& criterion, double F_guess, const BisectionOptions& opt = {},
                                double scan_step = 0.01) {
  if (!(F_guess > 0.0)) throw BracketError("bisect_fcr_around: need F_guess > 0", 0.0, F_guess);
  auto escapes = [&](double F) {
    ModelParams p = params_base;
    p.F = F;
    p.Omega = Omega;
    p.validate();
    return integrate(ic, p, opt.horizon_ec, criterion, opt.settings).has_value();
  };
  // Start from 0.5 F_guess, halving while even that escapes.
  double lo = 0.5 * F_guess;
  for (int i = 0; i < 40 && escapes(lo); ++i) lo *= 0.5;
  const double step = scan_step * F_guess;
  for (int i = 0; i < 100000; ++i) {
    const double hi = lo + step;
    if (escapes(hi)) return bisect_fcr(Omega, ic, params_base, criterion, lo, hi, opt);
    lo = hi;
  }
  throw BracketError("bisect_fcr_around: no escape found above F_guess", lo, lo);
}

struct Extent {
  double q_lo = -1.0;
  double q_hi = 1.0;
  double p_lo = -1.0;
  double p_hi = 1.0;

  bool operator==(const Extent&) const = default;
};

struct GridCell {
  bool escaped = false;
  std::optional<double> escape_time_ec;
};

/// Classification raster over uniformly spaced ICs; node (0, 0) is (q_lo, p_lo),
/// node (nx-1, ny-1) is (q_hi, p_hi). Row-major with q varying fastest.
struct BasinGrid {
  Extent extent;
  int nx = 0;
  int ny = 0;
  EscapeCriterion criterion;
  double horizon_ec = 0.0;
  std::vector<GridCell> cells;

  PhasePoint node(int i, int j) const {
    return {extent.q_lo + (extent.q_hi - extent.q_lo) * i / (nx - 1),
            extent.p_lo + (extent.p_hi - extent.p_lo) * j / (ny - 1)};
  }
  const GridCell& at(int i, int j) const { return cells[static_cast<std::size_t>(j) * nx + i]; }

  /// Safe cells when evaluated at time t (EC) <= horizon.
  std::size_t safe_count_at(double t_ec) const {
    std::size_t n = 0;
    for (const auto& c : cells) n += !c.escape_time_ec || *c.escape_time_ec > t_ec;
    return n;
  }
  std::size_t safe_count() const { return safe_count_at(horizon_ec); }
};

inline BasinGrid grid_scan(const Extent& extent, int nx, int ny, const ModelParams& params,
                           const EscapeCriterion& criterion, double horizon_ec,
                           const SimulationSettings& settings = SimulationSettings::precise(),
                           unsigned workers = 1) {
  if (nx < 2 || ny < 2) throw std::invalid_argument("grid_scan: resolution must be at least 2x2");
  BasinGrid g{extent, nx, ny, criterion, horizon_ec, {}};
  g.cells.resize(static_cast<std::size_t>(nx) * ny);
  parallel_for(g.cells.size(), workers, [&](std::size_t k) {
    const int i = static_cast<int>(k % nx);
    const int j = static_cast<int>(k / nx);
    const auto t = integrate(g.node(i, j), params, horizon_ec, criterion, settings);
    g.cells[k] = {t.has_value(), t};
  });
  return g;
}

/// Displacement and energy rasters from one integration per cell.
struct DualGrid {
  BasinGrid displacement;
  BasinGrid energy;
};

inline DualGrid grid_scan_both(const Extent& extent, int nx, int ny, const ModelParams& params, double horizon_ec,
                               const SimulationSettings& settings = SimulationSettings::precise(),
                               unsigned workers = 1) {
  if (nx < 2 || ny < 2) throw std::invalid_argument("grid_scan_both: resolution must be at least 2x2");
  using Kind = EscapeCriterion::Kind;
  DualGrid g{{extent, nx, ny, EscapeCriterion::from_truncation(Kind::Displacement, params.xi_max), horizon_ec, {}},
             {extent, nx, ny, EscapeCriterion::from_truncation(Kind::Energy, params.xi_max), horizon_ec, {}}};
  const std::size_t n = static_cast<std::size_t>(nx) * ny;
  g.displacement.cells.resize(n);
  g.energy.cells.resize(n);
  parallel_for(n, workers, [&](std::size_t k) {
    const int i = static_cast<int>(k % nx);
    const int j = static_cast<int>(k / nx);
    const auto t = integrate_both(g.energy.node(i, j), params, horizon_ec, settings);
    g.displacement.cells[k] = {t.displacement.has_value(), t.displacement};
    g.energy.cells[k] = {t.energy.has_value(), t.energy};
  });
  return g;
}

struct StrobeOrbit {
  PhasePoint ic;
  std::vector<PhasePoint> samples;  ///< states at tau = T, 2T, ... up to escape
  bool escaped = false;
};

inline std::vector<StrobeOrbit> strobe_map(const std::vector<PhasePoint>& ics, const ModelParams& params, long n_iters,
                                           const EscapeCriterion& criterion,
                                           const SimulationSettings& settings = SimulationSettings::precise(),
                                           unsigned workers = 1) {
  if (n_iters < 1) throw std::invalid_argument("strobe_map: n_iters must be >= 1");
  std::vector<StrobeOrbit> out(ics.size());
  parallel_for(ics.size(), workers, [&](std::size_t k) {
    StrobeOrbit o{ics[k], {}, false};
    o.samples.reserve(n_iters);
    const auto esc = detail::run_trajectory<1>(ics[k], params, static_cast<double>(n_iters), {criterion}, settings,
                                               [&](long, const PhasePoint& pt) { o.samples.push_back(pt); });
    o.escaped = esc[0].has_value();
    out[k] = std::move(o);
  });
  return out;
}

struct CriteriaRow {
  double F = 0.0;
  int repeat = 0;
  long A_q = 0;  ///< displacement-safe ICs
  long A_E = 0;  ///< energy-safe ICs
  double rel_diff = 0.0;  ///< (A_q - A_E) / A_E, NaN when A_E = 0
  long violations = 0;    ///< ICs energy-safe yet displacement-escaped
};

struct CriteriaOptions {
  long n_ics = 10000;
  int n_repeats = 5;
  std::uint64_t seed = 1;
  double horizon_ec = 3000.0;
  Extent square{};
  SimulationSettings settings = SimulationSettings::precise();
  unsigned workers = 1;
};

/// Uniform ICs for one (F index, repeat) pair; independent of worker count.
inline std::vector<PhasePoint> draw_ics(std::uint64_t seed, std::size_t f_index, int repeat, long n,
                                        const Extent& box) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(f_index), static_cast<std::uint32_t>(repeat)};
  std::mt19937_64 rng(seq);
  auto unit = [&] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
  std::vector<PhasePoint> ics(n);
  for (auto& ic : ics) {
    ic.q = box.q_lo + (box.q_hi - box.q_lo) * unit();
    ic.p = box.p_lo + (box.p_hi - box.p_lo) * unit();
  }
  return ics;
}

/// Safe counts under both criteria for random ICs in a square. Each IC is
/// integrated once with both criteria tracked until both fire or the horizon
/// ends; this yields the same sets as running the energy pass first and the
/// displacement pass on its escapers.
inline std::vector<CriteriaRow> criteria_compare(const ModelParams& params_base, const std::vector<double>& F_list,
                                                 const CriteriaOptions& opt) {
  std::vector<CriteriaRow> rows;
  for (std::size_t fi = 0; fi < F_list.size(); ++fi) {
    ModelParams p = params_base;
    p.F = F_list[fi];
    p.validate();
    for (int r = 0; r < opt.n_repeats; ++r) {
      const auto ics = draw_ics(opt.seed, fi, r, opt.n_ics, opt.square);
      std::vector<DualEscape> res(ics.size());
      parallel_for(ics.size(), opt.workers,
                   [&](std::size_t k) { res[k] = integrate_both(ics[k], p, opt.horizon_ec, opt.settings); });
      CriteriaRow row{p.F, r, 0, 0, 0.0, 0};
      for (const auto& e : res) {
        row.A_q += !e.displacement;
        row.A_E += !e.energy;
        row.violations += !e.energy && e.displacement;
      }
      row.rel_diff = row.A_E > 0 ? static_cast<double>(row.A_q - row.A_E) / row.A_E
                                 : std::numeric_limits<double>::quiet_NaN();
      rows.push_back(row);
    }
  }
  return rows;
}

struct AreaSample {
  double t_eval_ec = 0.0;
  std::size_t safe_pixels = 0;
};

/// Safe-pixel count at each checkpoint, from one scan to the last checkpoint.
inline std::vector<AreaSample> area_vs_time(const Extent& extent, int nx, int ny, const ModelParams& params,
                                            const EscapeCriterion& criterion, const std::vector<double>& checkpoints,
                                            const SimulationSettings& settings = SimulationSettings::precise(),
                                            unsigned workers = 1) {
  if (checkpoints.empty()) throw std::invalid_argument("area_vs_time: no checkpoints");
  for (std::size_t i = 1; i < checkpoints.size(); ++i) {
    if (!(checkpoints[i] > checkpoints[i - 1])) throw std::invalid_argument("area_vs_time: checkpoints must increase");
  }
  if (!(checkpoints.front() > 0.0)) throw std::invalid_argument("area_vs_time: checkpoints must be > 0");
  const auto grid = grid_scan(extent, nx, ny, params, criterion, checkpoints.back(), settings, workers);
  std::vector<AreaSample> out;
  for (double t : checkpoints) out.push_back({t, grid.safe_count_at(t)});
  return out;
}

}  // namespace escape_atlas

#endif  // ESCAPE_ATLAS_SIMULATE_HPP
