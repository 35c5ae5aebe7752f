#ifndef ESCAPE_ATLAS_CSV_HPP
#define ESCAPE_ATLAS_CSV_HPP

// CSV artifacts: 17 significant digits, '.' decimal point, LF endings. Every
// writer has a reader that restores the same values.

#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "escape_atlas/basin.hpp"
#include "escape_atlas/simulate.hpp"
#include "escape_atlas/slow_flow.hpp"

namespace escape_atlas::csv {

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline double parse_number(std::string_view s) {
  if (s == "nan") return std::nan("");
  if (s == "inf") return HUGE_VAL;
  if (s == "-inf") return -HUGE_VAL;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw ParseError("not a number: '" + std::string(s) + "'");
  return v;
}

inline long long parse_integer(std::string_view s) {
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw ParseError("not an integer: '" + std::string(s) + "'");
  return v;
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

inline std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

/// Reads a header plus rows; every row must have as many fields as the header.
inline Table read_table(std::istream& is, const std::string& expected_header) {
  Table t;
  std::string line;
  if (!std::getline(is, line)) throw ParseError("empty CSV, expected header " + expected_header);
  if (line != expected_header) throw ParseError("unexpected CSV header '" + line + "', expected " + expected_header);
  t.header = split_line(line);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto row = split_line(line);
    if (row.size() != t.header.size()) throw ParseError("CSV row has wrong field count: " + line);
    t.rows.push_back(std::move(row));
  }
  return t;
}

// ---- fcr curves: omega,f_cr,mechanism

inline constexpr const char* kFcrHeader = "omega,f_cr,mechanism";

struct FcrRow {
  double omega = 0.0;
  double f_cr = 0.0;
  std::string mechanism;

  bool operator==(const FcrRow&) const = default;
};

inline void write_fcr(std::ostream& os, const std::vector<FcrRow>& rows) {
  os << kFcrHeader << '\n';
  for (const auto& r : rows) os << format_number(r.omega) << ',' << format_number(r.f_cr) << ',' << r.mechanism << '\n';
}

inline std::vector<FcrRow> read_fcr(std::istream& is) {
  std::vector<FcrRow> out;
  for (const auto& r : read_table(is, kFcrHeader).rows) out.push_back({parse_number(r[0]), parse_number(r[1]), r[2]});
  return out;
}

// ---- basin grids: q0,p0,escaped,escape_time_ec

inline constexpr const char* kGridHeader = "q0,p0,escaped,escape_time_ec";

struct GridRow {
  double q0 = 0.0;
  double p0 = 0.0;
  bool escaped = false;
  std::optional<double> escape_time_ec;

  bool operator==(const GridRow&) const = default;
};

inline std::vector<GridRow> grid_rows(const BasinGrid& g) {
  std::vector<GridRow> out;
  out.reserve(g.cells.size());
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      const auto x = g.node(i, j);
      const auto& c = g.at(i, j);
      out.push_back({x.q, x.p, c.escaped, c.escape_time_ec});
    }
  }
  return out;
}

inline void write_grid(std::ostream& os, const std::vector<GridRow>& rows) {
  os << kGridHeader << '\n';
  for (const auto& r : rows) {
    os << format_number(r.q0) << ',' << format_number(r.p0) << ',' << (r.escaped ? 1 : 0) << ',';
    if (r.escape_time_ec) os << format_number(*r.escape_time_ec);
    os << '\n';
  }
}

inline std::vector<GridRow> read_grid(std::istream& is) {
  std::vector<GridRow> out;
  for (const auto& r : read_table(is, kGridHeader).rows) {
    GridRow g{parse_number(r[0]), parse_number(r[1]), parse_integer(r[2]) != 0, std::nullopt};
    if (!r[3].empty()) g.escape_time_ec = parse_number(r[3]);
    out.push_back(g);
  }
  return out;
}

// ---- stroboscopic samples: traj_id,iter,q,p

inline constexpr const char* kStrobeHeader = "traj_id,iter,q,p";

struct StrobeRow {
  long long traj_id = 0;
  long long iter = 0;
  double q = 0.0;
  double p = 0.0;

  bool operator==(const StrobeRow&) const = default;
};

inline std::vector<StrobeRow> strobe_rows(const std::vector<StrobeOrbit>& orbits) {
  std::vector<StrobeRow> out;
  for (std::size_t t = 0; t < orbits.size(); ++t) {
    const auto& s = orbits[t].samples;
    for (std::size_t k = 0; k < s.size(); ++k) {
      out.push_back({static_cast<long long>(t), static_cast<long long>(k + 1), s[k].q, s[k].p});
    }
  }
  return out;
}

inline void write_strobe(std::ostream& os, const std::vector<StrobeRow>& rows) {
  os << kStrobeHeader << '\n';
  for (const auto& r : rows) {
    os << r.traj_id << ',' << r.iter << ',' << format_number(r.q) << ',' << format_number(r.p) << '\n';
  }
}

inline std::vector<StrobeRow> read_strobe(std::istream& is) {
  std::vector<StrobeRow> out;
  for (const auto& r : read_table(is, kStrobeHeader).rows) {
    out.push_back({parse_integer(r[0]), parse_integer(r[1]), parse_number(r[2]), parse_number(r[3])});
  }
  return out;
}

// ---- criteria comparison: F,repeat,A_q,A_E,rel_diff

inline constexpr const char* kCriteriaHeader = "F,repeat,A_q,A_E,rel_diff";

struct CriteriaCsvRow {
  double F = 0.0;
  long long repeat = 0;
  long long A_q = 0;
  long long A_E = 0;
  double rel_diff = 0.0;

  bool operator==(const CriteriaCsvRow& o) const {
    const bool same_diff = (std::isnan(rel_diff) && std::isnan(o.rel_diff)) || rel_diff == o.rel_diff;
    return F == o.F && repeat == o.repeat && A_q == o.A_q && A_E == o.A_E && same_diff;
  }
};

inline std::vector<CriteriaCsvRow> criteria_rows(const std::vector<CriteriaRow>& rows) {
  std::vector<CriteriaCsvRow> out;
  for (const auto& r : rows) {
    out.push_back({r.F, static_cast<long long>(r.repeat), static_cast<long long>(r.A_q),
                   static_cast<long long>(r.A_E), r.rel_diff});
  }
  return out;
}

inline void write_criteria(std::ostream& os, const std::vector<CriteriaCsvRow>& rows) {
  os << kCriteriaHeader << '\n';
  for (const auto& r : rows) {
    os << format_number(r.F) << ',' << r.repeat << ',' << r.A_q << ',' << r.A_E << ',' << format_number(r.rel_diff)
       << '\n';
  }
}

inline std::vector<CriteriaCsvRow> read_criteria(std::istream& is) {
  std::vector<CriteriaCsvRow> out;
  for (const auto& r : read_table(is, kCriteriaHeader).rows) {
    out.push_back({parse_number(r[0]), parse_integer(r[1]), parse_integer(r[2]), parse_integer(r[3]),
                   parse_number(r[4])});
  }
  return out;
}

// ---- area decay: t_eval_ec,safe_pixels

inline constexpr const char* kAreaHeader = "t_eval_ec,safe_pixels";

inline void write_area(std::ostream& os, const std::vector<AreaSample>& rows) {
  os << kAreaHeader << '\n';
  for (const auto& r : rows) os << format_number(r.t_eval_ec) << ',' << r.safe_pixels << '\n';
}

inline std::vector<AreaSample> read_area(std::istream& is) {
  std::vector<AreaSample> out;
  for (const auto& r : read_table(is, kAreaHeader).rows) {
    out.push_back({parse_number(r[0]), static_cast<std::size_t>(parse_integer(r[1]))});
  }
  return out;
}

// ---- analytic boundaries: branch_id,basin_type,gamma,xi,q0,p0

inline constexpr const char* kBoundaryHeader = "branch_id,basin_type,gamma,xi,q0,p0";

struct BoundaryRow {
  long long branch_id = 0;
  std::string basin_type;
  double gamma = 0.0;
  double xi = 0.0;
  double q0 = 0.0;
  double p0 = 0.0;

  bool operator==(const BoundaryRow&) const = default;
};

inline std::vector<BoundaryRow> boundary_rows(const SafeRegion& region) {
  std::vector<BoundaryRow> out;
  for (std::size_t id = 0; id < region.boundaries.size(); ++id) {
    const auto& b = region.boundaries[id];
    for (std::size_t k = 0; k < b.cylinder_polyline.size(); ++k) {
      const auto& s = b.cylinder_polyline[k];
      PhasePoint x{std::nan(""), std::nan("")};
      if (!b.plane_polylines.empty() && k < b.plane_polylines[0].size()) x = b.plane_polylines[0][k];
      out.push_back({static_cast<long long>(id), to_string(b.basin_type), s.gamma, s.xi, x.q, x.p});
    }
  }
  return out;
}

inline void write_boundary(std::ostream& os, const std::vector<BoundaryRow>& rows) {
  os << kBoundaryHeader << '\n';
  for (const auto& r : rows) {
    os << r.branch_id << ',' << r.basin_type << ',' << format_number(r.gamma) << ',' << format_number(r.xi) << ','
       << format_number(r.q0) << ',' << format_number(r.p0) << '\n';
  }
}

inline std::vector<BoundaryRow> read_boundary(std::istream& is) {
  std::vector<BoundaryRow> out;
  for (const auto& r : read_table(is, kBoundaryHeader).rows) {
    out.push_back({parse_integer(r[0]), r[1], parse_number(r[2]), parse_number(r[3]), parse_number(r[4]),
                   parse_number(r[5])});
  }
  return out;
}

}  // namespace escape_atlas::csv

#endif  // ESCAPE_ATLAS_CSV_HPP
