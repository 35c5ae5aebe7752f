#ifndef ESCAPE_ATLAS_COMMANDS_HPP
#define ESCAPE_ATLAS_COMMANDS_HPP

// The experiments behind each CLI subcommand. Every command takes a validated
// RunConfig and an output directory, writes its artifacts there and returns
// their paths. Progress and summaries go to `log`.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "escape_atlas/basin.hpp"
#include "escape_atlas/config.hpp"
#include "escape_atlas/csv.hpp"
#include "escape_atlas/invariants.hpp"
#include "escape_atlas/simulate.hpp"
#include "escape_atlas/slow_flow.hpp"
#include "escape_atlas/svg.hpp"

namespace escape_atlas::cli {

namespace fs = std::filesystem;

/// The 500 EC profile used by `--fast`.
inline constexpr double kFastHorizonEc = 500.0;

inline SimulationSettings settings_of(const RunConfig& c) {
  return c.run.fast ? SimulationSettings::fast() : SimulationSettings::precise();
}

inline double horizon_of(const RunConfig& c) {
  return c.run.fast ? std::min(c.run.horizon_ec, kFastHorizonEc) : c.run.horizon_ec;
}

/// The configured IC on the cylinder at tau = 0.
inline SlowState slow_ic(const RunConfig& c) {
  if (const auto* s = std::get_if<SlowState>(&c.ic)) return *s;
  const auto& p = std::get<PhasePoint>(c.ic);
  try {
    return slow_coords_of_ic(p, c.model.Psi);
  } catch (const std::domain_error& e) {
    throw ConfigError("ic.q", e.what());
  }
}

/// The configured IC in the plane; a cylinder IC maps through theta = gamma + Psi.
inline PhasePoint plane_ic(const RunConfig& c) {
  if (const auto* p = std::get_if<PhasePoint>(&c.ic)) return *p;
  const auto& s = std::get<SlowState>(c.ic);
  const double theta = s.gamma + c.model.Psi;
  return {q_of_angle(theta, s.xi), p_of_angle(theta, s.xi)};
}

inline EscapeCriterion criterion_of(CriterionChoice choice, double xi_max) {
  const auto kind =
      choice == CriterionChoice::Energy ? EscapeCriterion::Kind::Energy : EscapeCriterion::Kind::Displacement;
  return EscapeCriterion::from_truncation(kind, xi_max);
}

inline fs::path write_file(const fs::path& dir, const std::string& name, const std::string& content) {
  fs::create_directories(dir);
  const fs::path path = dir / name;
  std::ofstream f(path, std::ios::binary);
  f << content;
  f.close();
  if (!f) throw std::runtime_error("could not write " + path.string());
  return path;
}

inline std::string number_tag(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", x);
  return buf;
}

/// Splits a cylinder polyline into pieces with gamma wrapped into [0, 2 pi).
inline std::vector<std::vector<svg::Point>> wrapped_pieces(const std::vector<SlowState>& poly) {
  std::vector<std::vector<svg::Point>> out(1);
  double prev = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const double g = wrap_two_pi(poly[i].gamma);
    if (i > 0 && std::abs(g - prev) > std::numbers::pi) out.emplace_back();
    out.back().push_back({g, poly[i].xi});
    prev = g;
  }
  return out;
}

inline bool in_well(const PhasePoint& x, double xi_max) {
  return std::abs(x.q) < q_max_of(xi_max) && hamiltonian(x) <= xi_max;
}

struct Mismatch {
  std::size_t differing = 0;
  std::size_t in_well = 0;
  double fraction() const { return in_well ? static_cast<double>(differing) / in_well : 0.0; }
};

/// Cells whose analytic and numeric classifications differ, over in-well cells.
inline Mismatch basin_mismatch(const SafeRegion& region, const BasinGrid& grid) {
  Mismatch m;
  for (int j = 0; j < grid.ny; ++j) {
    for (int i = 0; i < grid.nx; ++i) {
      const auto x = grid.node(i, j);
      if (!in_well(x, region.xi_max)) continue;
      ++m.in_well;
      m.differing += safe_in_plane(x, region) == grid.at(i, j).escaped;
    }
  }
  return m;
}

inline std::vector<unsigned char> safe_mask(const BasinGrid& g, double t_ec) {
  std::vector<unsigned char> m(g.cells.size());
  for (std::size_t k = 0; k < g.cells.size(); ++k) {
    const auto& t = g.cells[k].escape_time_ec;
    m[k] = !t || *t > t_ec;
  }
  return m;
}

// ---------------------------------------------------------------- fcr-curve

inline std::vector<fs::path> cmd_fcr_curve(const RunConfig& c, const fs::path& out, std::ostream& log) {
  if (c.sweep.omega.empty()) throw ConfigError("sweep.omega", "fcr-curve needs an Omega sweep");
  const auto xis = c.sweep.xi_max.empty() ? std::vector<double>{c.model.xi_max} : c.sweep.xi_max;
  const SlowState ic = slow_ic(c);
  const PhasePoint ic_plane = plane_ic(c);
  const auto choice = c.run.criterion.value_or(CriterionChoice::Displacement);
  if (choice == CriterionChoice::Both) throw ConfigError("run.criterion", "fcr-curve needs a single criterion");
  std::vector<fs::path> files;

  const double w_lo = c.sweep.omega.front();
  const double w_hi = c.sweep.omega.back() > w_lo ? c.sweep.omega.back() : w_lo + 1.0;
  std::vector<std::vector<csv::FcrRow>> curves;
  std::vector<std::vector<csv::FcrRow>> numeric;
  double f_top = 0.0;
  static const char* colours[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};

  for (double xm : xis) {
    if (!(xm < kBarrierEnergy)) throw ConfigError("model.xi_max", "fcr-curve needs xi_max < 1/4");
    if (!(ic.xi < xm)) throw ConfigError("ic.xi", "initial energy must lie below xi_max");
    const std::string tag = xis.size() > 1 ? "_xi" + number_tag(xm) : "";
    const ThresholdProfile profile(ic, xm, c.coupling);
    std::vector<csv::FcrRow> rows;
    for (double w : c.sweep.omega) {
      const auto e = profile.at(w);
      rows.push_back({w, e.F_cr, to_string(e.mechanism)});
      if (std::isfinite(e.F_cr)) f_top = std::max(f_top, e.F_cr);
    }
    std::ostringstream os;
    csv::write_fcr(os, rows);
    files.push_back(write_file(out, "fcr_analytic" + tag + ".csv", os.str()));
    log << "xi_max = " << xm << ": " << rows.size() << " analytic points\n";

    if (c.run.numeric) {
      std::vector<csv::FcrRow> nrows(rows.size());
      BisectionOptions opt;
      opt.tolerance = c.run.bisect_tolerance;
      opt.horizon_ec = horizon_of(c);
      opt.settings = settings_of(c);
      ModelParams base = c.model;
      base.xi_max = xm;
      const auto crit = criterion_of(choice, xm);
      parallel_for(rows.size(), c.run.workers, [&](std::size_t k) {
        double f = std::nan("");
        const double guess = std::isfinite(rows[k].f_cr) && rows[k].f_cr > 0.0 ? rows[k].f_cr : 0.05;
        try {
          f = bisect_fcr_around(rows[k].omega, ic_plane, base, crit, guess, opt);
        } catch (const BracketError&) {
        }
        nrows[k] = {rows[k].omega, f, "numeric"};
      });
      std::ostringstream ns;
      csv::write_fcr(ns, nrows);
      files.push_back(write_file(out, "fcr_numeric" + tag + ".csv", ns.str()));
      for (std::size_t k = 0; k < rows.size(); ++k) {
        const double rel = std::abs(nrows[k].f_cr - rows[k].f_cr) / nrows[k].f_cr;
        log << "  Omega " << rows[k].omega << ": analytic " << rows[k].f_cr << " (" << rows[k].mechanism
            << "), numeric " << nrows[k].f_cr << ", rel diff " << rel << '\n';
        if (std::isfinite(nrows[k].f_cr)) f_top = std::max(f_top, nrows[k].f_cr);
      }
      numeric.push_back(std::move(nrows));
    }
    curves.push_back(std::move(rows));
  }

  svg::Plot plot(w_lo, w_hi, 0.0, f_top > 0.0 ? 1.1 * f_top : 1.0, "Omega", "F_cr");
  plot.title("escape threshold");
  for (std::size_t i = 0; i < curves.size(); ++i) {
    const char* col = colours[i % 5];
    std::vector<svg::Point> pts;
    for (const auto& r : curves[i]) pts.push_back({r.omega, r.f_cr});
    plot.polyline(pts, col);
    if (i < numeric.size()) {
      std::vector<svg::Point> np;
      for (const auto& r : numeric[i]) np.push_back({r.omega, r.f_cr});
      plot.points(np, col, 5.0);
    }
    plot.text("xi_max = " + number_tag(xis[i]), w_lo + 0.02 * (w_hi - w_lo), (0.95 - 0.06 * i) * 1.1 * f_top, col);
  }
  files.push_back(write_file(out, "fcr_curve.svg", plot.str()));
  return files;
}

// ---------------------------------------------------------------- basin

inline std::vector<fs::path> cmd_basin(const RunConfig& c, const fs::path& out, std::ostream& log) {
  ModelParams params = c.model;
  params.validate();
  const SafeRegion region = analytic_basin(params, c.coupling);
  std::vector<fs::path> files;
  {
    std::ostringstream os;
    csv::write_boundary(os, csv::boundary_rows(region));
    files.push_back(write_file(out, "boundary.csv", os.str()));
  }
  if (region.empty()) {
    log << "analytic safe region is empty (forcing above every threshold)\n";
  } else if (region.unforced) {
    log << "unforced: safe region is the H0 = " << region.xi_max << " oval\n";
  } else {
    for (const auto& b : region.boundaries) {
      log << "boundary " << to_string(b.basin_type) << ": level " << b.level << ", xi in [" << b.xi_lo << ", "
          << b.xi_hi << "]" << (b.lpt ? " (LPT)" : "") << '\n';
    }
    if (region.coexisting()) log << "SBMT and SBST coexist\n";
  }

  const auto& e = c.run.extent;
  svg::Plot plane(e.q_lo, e.q_hi, e.p_lo, e.p_hi, "q0", "p0");
  plane.title("safe basin, F = " + number_tag(params.F) + ", Omega = " + number_tag(params.Omega));
  if (c.run.numeric) {
    const auto choice = c.run.criterion.value_or(CriterionChoice::Energy);
    const auto settings = settings_of(c);
    const double horizon = horizon_of(c);
    std::vector<std::pair<std::string, BasinGrid>> grids;
    if (choice == CriterionChoice::Both) {
      auto g = grid_scan_both(e, c.run.nx, c.run.ny, params, horizon, settings, c.run.workers);
      grids.emplace_back("displacement", std::move(g.displacement));
      grids.emplace_back("energy", std::move(g.energy));
    } else {
      grids.emplace_back(to_string(choice), grid_scan(e, c.run.nx, c.run.ny, params, criterion_of(choice, params.xi_max),
                                                      horizon, settings, c.run.workers));
    }
    const char* fills[] = {"#bbbbbb", "#555555"};
    for (std::size_t i = 0; i < grids.size(); ++i) {
      const auto& [name, g] = grids[i];
      std::ostringstream os;
      csv::write_grid(os, csv::grid_rows(g));
      files.push_back(write_file(out, grids.size() > 1 ? "grid_" + name + ".csv" : "grid.csv", os.str()));
      const auto m = basin_mismatch(region, g);
      log << "mismatch fraction (" << name << " criterion, " << horizon << " EC): " << m.fraction() << " ("
          << m.differing << " of " << m.in_well << " in-well cells)\n";
      plane.mask(safe_mask(g, g.horizon_ec), g.nx, g.ny, e.q_lo, e.q_hi, e.p_lo, e.p_hi, fills[i]);
    }
  }
  for (const auto& b : region.boundaries) {
    for (const auto& loop : b.plane_polylines) {
      std::vector<svg::Point> pts;
      for (const auto& x : loop) pts.push_back({x.q, x.p});
      plane.polyline(pts, "#d62728", 1.5);
    }
  }
  files.push_back(write_file(out, "basin_plane.svg", plane.str()));

  svg::Plot cyl(0.0, 2.0 * std::numbers::pi, 0.0, kBarrierEnergy, "gamma", "xi");
  cyl.title("safe basin boundaries on the cylinder");
  cyl.polyline({{0.0, params.xi_max}, {2.0 * std::numbers::pi, params.xi_max}}, "#1f77b4", 2.0, true);
  for (const auto& b : region.boundaries) {
    for (const auto& piece : wrapped_pieces(b.cylinder_polyline)) cyl.polyline(piece, "#d62728", 1.5);
  }
  files.push_back(write_file(out, "basin_cylinder.svg", cyl.str()));
  return files;
}

// ---------------------------------------------------------------- strobe

inline std::vector<fs::path> cmd_strobe(const RunConfig& c, const fs::path& out, std::ostream& log) {
  ModelParams params = c.model;
  params.validate();
  const int keep = c.run.n_ics.value_or(100);
  const long iters = c.run.fast ? std::min<long>(c.run.n_iters, static_cast<long>(kFastHorizonEc)) : c.run.n_iters;
  const auto choice = c.run.criterion.value_or(CriterionChoice::Energy);
  if (choice == CriterionChoice::Both) throw ConfigError("run.criterion", "strobe needs a single criterion");
  const auto crit = criterion_of(choice, params.xi_max);
  const auto& e = c.run.extent;

  std::mt19937_64 rng(c.run.seed);
  auto uniform = [&](double a, double b) { return a + (b - a) * static_cast<double>(rng() >> 11) * 0x1p-53; };
  std::vector<StrobeOrbit> kept;
  std::size_t tried = 0;
  for (int batch = 0; batch < 200 && static_cast<int>(kept.size()) < keep; ++batch) {
    std::vector<PhasePoint> ics;
    while (static_cast<int>(ics.size()) < keep) {
      const PhasePoint x{uniform(e.q_lo, e.q_hi), uniform(e.p_lo, e.p_hi)};
      if (!crit.exceeded(x)) ics.push_back(x);
    }
    tried += ics.size();
    for (auto& o : strobe_map(ics, params, iters, crit, settings_of(c), c.run.workers)) {
      if (!o.escaped && static_cast<int>(kept.size()) < keep) kept.push_back(std::move(o));
    }
  }
  log << "kept " << kept.size() << " non-escaping orbits of " << tried << " tried, " << iters << " iterations each\n";
  std::vector<fs::path> files;
  std::ostringstream os;
  csv::write_strobe(os, csv::strobe_rows(kept));
  files.push_back(write_file(out, "strobe.csv", os.str()));

  svg::Plot plot(e.q_lo, e.q_hi, e.p_lo, e.p_hi, "q", "p");
  plot.title("period map, F = " + number_tag(params.F) + ", Omega = " + number_tag(params.Omega));
  std::vector<svg::Point> pts;
  for (const auto& o : kept) {
    for (const auto& s : o.samples) pts.push_back({s.q, s.p});
  }
  plot.points(pts, "#000000", 0.8);
  const auto region = analytic_basin(params, c.coupling);
  for (const auto& b : region.boundaries) {
    for (const auto& loop : b.plane_polylines) {
      std::vector<svg::Point> lp;
      for (const auto& x : loop) lp.push_back({x.q, x.p});
      plot.polyline(lp, "#d62728", 1.5, true);
    }
  }
  files.push_back(write_file(out, "strobe.svg", plot.str()));
  if (static_cast<int>(kept.size()) < keep) {
    throw std::runtime_error("strobe: only " + std::to_string(kept.size()) + " non-escaping orbits found");
  }
  return files;
}

// ---------------------------------------------------------------- appendix

/// Default F grid of the criteria comparison: 0.001 to 0.071 in steps of 0.005.
inline std::vector<double> default_appendix_forces() {
  std::vector<double> f;
  for (int i = 0; i < 15; ++i) f.push_back(0.001 + 0.005 * i);
  return f;
}

inline std::vector<double> default_area_checkpoints(double horizon) {
  std::vector<double> t;
  for (double v : {10.0, 50.0, 100.0, 250.0, 500.0, 750.0, 1000.0, 1500.0, 2000.0}) {
    if (v <= horizon) t.push_back(v);
  }
  for (double v = 3000.0; v <= horizon; v += 1000.0) t.push_back(v);
  if (t.empty() || t.back() < horizon) t.push_back(horizon);
  return t;
}

struct CriteriaSummary {
  double F;
  double min;
  double mean;
  double max;
};

inline std::vector<CriteriaSummary> summarize(const std::vector<CriteriaRow>& rows) {
  std::vector<CriteriaSummary> out;
  for (const auto& r : rows) {
    if (out.empty() || out.back().F != r.F) out.push_back({r.F, HUGE_VAL, 0.0, -HUGE_VAL});
    auto& s = out.back();
    s.min = std::min(s.min, r.rel_diff);
    s.max = std::max(s.max, r.rel_diff);
  }
  for (auto& s : out) {
    double sum = 0.0;
    int n = 0;
    for (const auto& r : rows) {
      if (r.F == s.F) {
        sum += r.rel_diff;
        ++n;
      }
    }
    s.mean = sum / n;
  }
  return out;
}

inline std::vector<fs::path> cmd_appendix(const RunConfig& c, const fs::path& out, std::ostream& log) {
  std::vector<fs::path> files;
  const auto settings = settings_of(c);
  const double horizon = horizon_of(c);

  CriteriaOptions opt;
  opt.n_ics = c.run.n_ics.value_or(10000);
  opt.n_repeats = c.run.n_repeats;
  opt.seed = c.run.seed;
  opt.horizon_ec = horizon;
  opt.settings = settings;
  opt.workers = c.run.workers;
  const auto forces = c.sweep.F.empty() ? default_appendix_forces() : c.sweep.F;
  ModelParams base = c.model;
  base.validate();
  const auto rows = criteria_compare(base, forces, opt);
  {
    std::ostringstream os;
    csv::write_criteria(os, csv::criteria_rows(rows));
    files.push_back(write_file(out, "criteria.csv", os.str()));
  }
  const auto summary = summarize(rows);
  {
    std::ostringstream os;
    os << "F,min,mean,max\n";
    for (const auto& s : summary) {
      os << csv::format_number(s.F) << ',' << csv::format_number(s.min) << ',' << csv::format_number(s.mean) << ','
         << csv::format_number(s.max) << '\n';
      log << "F = " << s.F << ": rel diff min " << s.min << ", mean " << s.mean << ", max " << s.max << '\n';
    }
    files.push_back(write_file(out, "criteria_summary.csv", os.str()));
  }
  {
    double top = 0.0;
    for (const auto& s : summary) {
      if (std::isfinite(s.max)) top = std::max(top, s.max);
    }
    svg::Plot plot(0.0, forces.back() * 1.05, 0.0, top > 0.0 ? 1.1 * top : 1.0, "F", "(A_q - A_E) / A_E");
    plot.title("escape criteria comparison");
    const char* cols[] = {"#1f77b4", "#ff7f0e", "#2ca02c"};
    for (int k = 0; k < 3; ++k) {
      std::vector<svg::Point> pts;
      for (const auto& s : summary) pts.push_back({s.F, k == 0 ? s.min : k == 1 ? s.mean : s.max});
      plot.points(pts, cols[k], 5.0);
    }
    files.push_back(write_file(out, "criteria.svg", plot.str()));
  }

  // Dual-criteria charts and the area decay share one scan.
  const auto& ch = c.chart;
  const double chart_horizon = c.run.fast ? std::min(ch.t_eval.back(), kFastHorizonEc) : ch.t_eval.back();
  const auto checkpoints =
      c.run.checkpoints.empty() ? default_area_checkpoints(chart_horizon) : c.run.checkpoints;
  const double scan_horizon = std::max(chart_horizon, checkpoints.back());
  const auto& e = c.run.extent;
  const auto dual = grid_scan_both(e, ch.n, ch.n, ch.model, scan_horizon, settings, c.run.workers);
  for (const auto* g : {&dual.displacement, &dual.energy}) {
    const std::string name = to_string(g->criterion.kind);
    std::ostringstream os;
    csv::write_grid(os, csv::grid_rows(*g));
    files.push_back(write_file(out, "chart_grid_" + name + ".csv", os.str()));
    std::vector<AreaSample> area;
    for (double t : checkpoints) area.push_back({t, g->safe_count_at(t)});
    std::ostringstream as;
    csv::write_area(as, area);
    files.push_back(write_file(out, "area_" + name + ".csv", as.str()));
  }
  for (double t : ch.t_eval) {
    if (t > scan_horizon) continue;
    svg::Plot plot(e.q_lo, e.q_hi, e.p_lo, e.p_hi, "q0", "p0");
    plot.title("DSB (grey) and ESB (black), t_eval = " + number_tag(t) + " EC");
    plot.mask(safe_mask(dual.displacement, t), ch.n, ch.n, e.q_lo, e.q_hi, e.p_lo, e.p_hi, "#aaaaaa");
    plot.mask(safe_mask(dual.energy, t), ch.n, ch.n, e.q_lo, e.q_hi, e.p_lo, e.p_hi, "#000000");
    files.push_back(write_file(out, "chart_t" + number_tag(t) + ".svg", plot.str()));
    log << "t_eval " << t << " EC: DSB " << dual.displacement.safe_count_at(t) << " px, ESB "
        << dual.energy.safe_count_at(t) << " px\n";
  }
  {
    double lo = HUGE_VAL, hi = 0.0;
    for (const auto* g : {&dual.displacement, &dual.energy}) {
      for (double t : checkpoints) {
        const double a = std::log(std::max<double>(1.0, static_cast<double>(g->safe_count_at(t))));
        lo = std::min(lo, a);
        hi = std::max(hi, a);
      }
    }
    svg::Plot plot(0.0, checkpoints.back(), lo - 0.1, hi + 0.1, "t_eval [EC]", "ln(safe pixels)");
    plot.title("safe basin area decay");
    bool dashed = true;
    for (const auto* g : {&dual.displacement, &dual.energy}) {
      std::vector<svg::Point> pts;
      for (double t : checkpoints) {
        pts.push_back({t, std::log(std::max<double>(1.0, static_cast<double>(g->safe_count_at(t))))});
      }
      plot.polyline(pts, "#000000", 1.5, dashed);
      dashed = false;
    }
    files.push_back(write_file(out, "area.svg", plot.str()));
  }
  return files;
}

// ---------------------------------------------------------------- selftest

inline bool cmd_selftest(std::ostream& log) {
  bool ok = true;
  for (const auto& r : invariants::run_all()) {
    log << (r.passed() ? "PASS " : "FAIL ") << r.name << ": worst " << r.worst << " (tolerance " << r.tolerance
        << ", " << r.samples << " samples)\n";
    ok = ok && r.passed();
  }
  return ok;
}

}  // namespace escape_atlas::cli

#endif  // ESCAPE_ATLAS_COMMANDS_HPP
