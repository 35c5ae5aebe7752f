#ifndef ESCAPE_ATLAS_CONFIG_HPP
#define ESCAPE_ATLAS_CONFIG_HPP

// Run configuration: flat `key = value` lines with dotted sections
// (`model.F = 0.0876`). A `[model]` header prefixes the keys that follow.
// `#` starts a comment. Lists are comma separated; `a:b:n` is n evenly spaced
// values from a to b inclusive.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <istream>
#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "escape_atlas/action_angle.hpp"
#include "escape_atlas/csv.hpp"
#include "escape_atlas/model.hpp"
#include "escape_atlas/simulate.hpp"

namespace escape_atlas {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& key, const std::string& what)
      : std::runtime_error(key.empty() ? what : "config key '" + key + "': " + what), key(key) {}
  std::string key;
};

enum class CriterionChoice { Displacement, Energy, Both };

inline const char* to_string(CriterionChoice c) {
  switch (c) {
    case CriterionChoice::Displacement: return "displacement";
    case CriterionChoice::Energy: return "energy";
    case CriterionChoice::Both: return "both";
  }
  return "?";
}

struct RunSettings {
  double horizon_ec = 3000.0;
  int nx = 200;
  int ny = 200;
  Extent extent;
  std::uint64_t seed = 1;
  unsigned workers = 1;
  std::string out;
  std::optional<int> n_ics;  ///< default depends on the subcommand
  int n_iters = 3000;
  int n_repeats = 5;
  std::optional<CriterionChoice> criterion;  ///< default depends on the subcommand
  bool numeric = false;
  double bisect_tolerance = 5e-5;
  bool fast = false;
  std::vector<double> checkpoints;

  bool operator==(const RunSettings& o) const {
    return horizon_ec == o.horizon_ec && nx == o.nx && ny == o.ny && extent.q_lo == o.extent.q_lo &&
           extent.q_hi == o.extent.q_hi && extent.p_lo == o.extent.p_lo && extent.p_hi == o.extent.p_hi &&
           seed == o.seed && workers == o.workers && out == o.out && n_ics == o.n_ics && n_iters == o.n_iters &&
           n_repeats == o.n_repeats && criterion == o.criterion && numeric == o.numeric &&
           bisect_tolerance == o.bisect_tolerance && fast == o.fast && checkpoints == o.checkpoints;
  }
};

/// Dual-criteria basin charts and area decay of the appendix subcommand.
struct ChartSettings {
  ModelParams model{0.0876, 0.95, std::numbers::pi, 0.25};
  int n = 300;
  std::vector<double> t_eval{500.0, 11000.0};

  bool operator==(const ChartSettings&) const = default;
};

struct SweepGrids {
  std::vector<double> omega;
  std::vector<double> F;
  std::vector<double> xi_max;

  bool operator==(const SweepGrids&) const = default;
};

struct RunConfig {
  ModelParams model;
  CouplingModel coupling = CouplingModel::Truncated;
  /// Initial condition, either in the plane or on the cylinder.
  std::variant<PhasePoint, SlowState> ic = PhasePoint{};
  SweepGrids sweep;
  RunSettings run;
  ChartSettings chart;

  bool operator==(const RunConfig&) const = default;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline double to_double(const std::string& key, const std::string& v) {
  try {
    return csv::parse_number(v);
  } catch (const csv::ParseError&) {
    throw ConfigError(key, "expected a number, got '" + v + "'");
  }
}

inline long long to_integer(const std::string& key, const std::string& v) {
  try {
    return csv::parse_integer(v);
  } catch (const csv::ParseError&) {
    throw ConfigError(key, "expected an integer, got '" + v + "'");
  }
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key, "expected true/false, got '" + v + "'");
}

inline std::vector<double> to_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  if (v.empty()) return out;
  if (v.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::istringstream is(v);
    std::string p;
    while (std::getline(is, p, ':')) parts.push_back(trim(p));
    if (parts.size() != 3) throw ConfigError(key, "range must be a:b:n");
    const double a = to_double(key, parts[0]);
    const double b = to_double(key, parts[1]);
    const long long n = to_integer(key, parts[2]);
    if (n < 1) throw ConfigError(key, "range count must be >= 1");
    if (n == 1) return {a};
    for (long long i = 0; i < n; ++i) out.push_back(i == n - 1 ? b : a + (b - a) * static_cast<double>(i) / (n - 1));
    return out;
  }
  std::istringstream is(v);
  std::string p;
  while (std::getline(is, p, ',')) out.push_back(to_double(key, trim(p)));
  return out;
}

inline std::string list_string(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + csv::format_number(v[i]);
  return s;
}

inline void require_increasing(const std::string& key, const std::vector<double>& v) {
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (!(v[i] > v[i - 1])) throw ConfigError(key, "grid must be strictly increasing");
  }
}

}  // namespace detail

/// Checks domain constraints; throws ConfigError naming the offending key.
inline void validate(const RunConfig& c) {
  const auto& m = c.model;
  if (!(m.F >= 0.0)) throw ConfigError("model.F", "must be >= 0");
  if (!(m.Omega > 0.0)) throw ConfigError("model.Omega", "must be > 0");
  if (!(m.xi_max > 0.0 && m.xi_max <= kBarrierEnergy)) throw ConfigError("model.xi_max", "must lie in (0, 1/4]");
  detail::require_increasing("sweep.omega", c.sweep.omega);
  detail::require_increasing("sweep.F", c.sweep.F);
  detail::require_increasing("sweep.xi_max", c.sweep.xi_max);
  for (double w : c.sweep.omega) {
    if (!(w > 0.0)) throw ConfigError("sweep.omega", "values must be > 0");
  }
  for (double f : c.sweep.F) {
    if (!(f >= 0.0)) throw ConfigError("sweep.F", "values must be >= 0");
  }
  for (double x : c.sweep.xi_max) {
    if (!(x > 0.0 && x <= kBarrierEnergy)) throw ConfigError("sweep.xi_max", "values must lie in (0, 1/4]");
  }
  if (const auto* s = std::get_if<SlowState>(&c.ic)) {
    if (!(s->xi >= 0.0 && s->xi < kBarrierEnergy)) throw ConfigError("ic.xi", "must lie in [0, 1/4)");
  }
  const auto& r = c.run;
  if (!(r.horizon_ec > 0.0)) throw ConfigError("run.horizon_ec", "must be > 0");
  if (r.nx < 2) throw ConfigError("run.nx", "must be >= 2");
  if (r.ny < 2) throw ConfigError("run.ny", "must be >= 2");
  if (!(r.extent.q_hi > r.extent.q_lo && r.extent.p_hi > r.extent.p_lo)) {
    throw ConfigError("run.extent", "needs q_lo < q_hi and p_lo < p_hi");
  }
  if (r.n_ics && *r.n_ics < 1) throw ConfigError("run.n_ics", "must be >= 1");
  if (r.n_iters < 1) throw ConfigError("run.n_iters", "must be >= 1");
  if (r.n_repeats < 1) throw ConfigError("run.n_repeats", "must be >= 1");
  if (!(r.bisect_tolerance > 0.0)) throw ConfigError("run.bisect_tolerance", "must be > 0");
  detail::require_increasing("run.checkpoints", r.checkpoints);
  const auto& ch = c.chart.model;
  if (!(ch.F >= 0.0)) throw ConfigError("chart.F", "must be >= 0");
  if (!(ch.Omega > 0.0)) throw ConfigError("chart.Omega", "must be > 0");
  if (!(ch.xi_max > 0.0 && ch.xi_max <= kBarrierEnergy)) throw ConfigError("chart.xi_max", "must lie in (0, 1/4]");
  if (c.chart.n < 2) throw ConfigError("chart.n", "must be >= 2");
  if (c.chart.t_eval.empty()) throw ConfigError("chart.t_eval", "needs at least one time");
  detail::require_increasing("chart.t_eval", c.chart.t_eval);
  if (!(c.chart.t_eval.front() > 0.0)) throw ConfigError("chart.t_eval", "values must be > 0");
  for (double t : r.checkpoints) {
    if (!(t > 0.0)) throw ConfigError("run.checkpoints", "values must be > 0");
  }
}

/// Applies one `key = value` assignment.
inline void set_key(RunConfig& c, const std::string& key, const std::string& raw) {
  using namespace detail;
  const std::string v = trim(raw);
  auto& m = c.model;
  auto& r = c.run;
  auto plane = [&]() -> PhasePoint& {
    if (!std::holds_alternative<PhasePoint>(c.ic)) throw ConfigError(key, "ic given both as (q, p) and (gamma, xi)");
    return std::get<PhasePoint>(c.ic);
  };
  auto slow = [&]() -> SlowState& {
    if (std::holds_alternative<PhasePoint>(c.ic)) {
      const auto& p = std::get<PhasePoint>(c.ic);
      if (!(p == PhasePoint{})) throw ConfigError(key, "ic given both as (q, p) and (gamma, xi)");
      c.ic = SlowState{};
    }
    return std::get<SlowState>(c.ic);
  };
  if (key == "model.F") m.F = to_double(key, v);
  else if (key == "model.Omega") m.Omega = to_double(key, v);
  else if (key == "model.Psi") m.Psi = to_double(key, v);
  else if (key == "model.xi_max") m.xi_max = to_double(key, v);
  else if (key == "model.coupling") {
    if (v == "truncated") c.coupling = CouplingModel::Truncated;
    else if (v == "full_fourier") c.coupling = CouplingModel::FullFourier;
    else throw ConfigError(key, "expected truncated or full_fourier");
  } else if (key == "ic.q") plane().q = to_double(key, v);
  else if (key == "ic.p") plane().p = to_double(key, v);
  else if (key == "ic.gamma") slow().gamma = to_double(key, v);
  else if (key == "ic.xi") slow().xi = to_double(key, v);
  else if (key == "sweep.omega") c.sweep.omega = to_list(key, v);
  else if (key == "sweep.F") c.sweep.F = to_list(key, v);
  else if (key == "sweep.xi_max") c.sweep.xi_max = to_list(key, v);
  else if (key == "run.horizon_ec") r.horizon_ec = to_double(key, v);
  else if (key == "run.nx") r.nx = static_cast<int>(to_integer(key, v));
  else if (key == "run.ny") r.ny = static_cast<int>(to_integer(key, v));
  else if (key == "run.extent") {
    const auto e = to_list(key, v);
    if (e.size() != 4) throw ConfigError(key, "expected q_lo,q_hi,p_lo,p_hi");
    r.extent = {e[0], e[1], e[2], e[3]};
  } else if (key == "run.seed") {
    const long long s = to_integer(key, v);
    if (s < 0) throw ConfigError(key, "must be >= 0");
    r.seed = static_cast<std::uint64_t>(s);
  } else if (key == "run.workers") {
    const long long w = to_integer(key, v);
    if (w < 1) throw ConfigError(key, "must be >= 1");
    r.workers = static_cast<unsigned>(w);
  } else if (key == "run.out") r.out = v;
  else if (key == "run.n_ics") r.n_ics = static_cast<int>(to_integer(key, v));
  else if (key == "run.n_iters") r.n_iters = static_cast<int>(to_integer(key, v));
  else if (key == "run.n_repeats") r.n_repeats = static_cast<int>(to_integer(key, v));
  else if (key == "run.criterion") {
    if (v == "displacement") r.criterion = CriterionChoice::Displacement;
    else if (v == "energy") r.criterion = CriterionChoice::Energy;
    else if (v == "both") r.criterion = CriterionChoice::Both;
    else throw ConfigError(key, "expected displacement, energy or both");
  } else if (key == "run.numeric") r.numeric = to_bool(key, v);
  else if (key == "run.bisect_tolerance") r.bisect_tolerance = to_double(key, v);
  else if (key == "run.fast") r.fast = to_bool(key, v);
  else if (key == "run.checkpoints") r.checkpoints = to_list(key, v);
  else if (key == "chart.F") c.chart.model.F = to_double(key, v);
  else if (key == "chart.Omega") c.chart.model.Omega = to_double(key, v);
  else if (key == "chart.Psi") c.chart.model.Psi = to_double(key, v);
  else if (key == "chart.xi_max") c.chart.model.xi_max = to_double(key, v);
  else if (key == "chart.n") c.chart.n = static_cast<int>(to_integer(key, v));
  else if (key == "chart.t_eval") c.chart.t_eval = to_list(key, v);
  else throw ConfigError(key, "unknown key");
}

inline RunConfig parse_config(std::istream& is) {
  RunConfig c;
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("", "line " + std::to_string(lineno) + ": malformed section header");
      section = detail::trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("", "line " + std::to_string(lineno) + ": expected key = value");
    std::string key = detail::trim(line.substr(0, eq));
    if (!section.empty()) key = section + "." + key;
    set_key(c, key, line.substr(eq + 1));
  }
  validate(c);
  return c;
}

inline RunConfig parse_config_string(const std::string& text) {
  std::istringstream is(text);
  return parse_config(is);
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("", "cannot open config file " + path);
  return parse_config(f);
}

/// Canonical form: every key, dotted, numbers at 17 significant digits.
inline std::string serialize_config(const RunConfig& c) {
  using csv::format_number;
  using detail::list_string;
  std::ostringstream os;
  os << "model.F = " << format_number(c.model.F) << '\n'
     << "model.Omega = " << format_number(c.model.Omega) << '\n'
     << "model.Psi = " << format_number(c.model.Psi) << '\n'
     << "model.xi_max = " << format_number(c.model.xi_max) << '\n'
     << "model.coupling = " << to_string(c.coupling) << '\n';
  if (const auto* p = std::get_if<PhasePoint>(&c.ic)) {
    os << "ic.q = " << format_number(p->q) << '\n' << "ic.p = " << format_number(p->p) << '\n';
  } else {
    const auto& s = std::get<SlowState>(c.ic);
    os << "ic.gamma = " << format_number(s.gamma) << '\n' << "ic.xi = " << format_number(s.xi) << '\n';
  }
  if (!c.sweep.omega.empty()) os << "sweep.omega = " << list_string(c.sweep.omega) << '\n';
  if (!c.sweep.F.empty()) os << "sweep.F = " << list_string(c.sweep.F) << '\n';
  if (!c.sweep.xi_max.empty()) os << "sweep.xi_max = " << list_string(c.sweep.xi_max) << '\n';
  const auto& r = c.run;
  os << "run.horizon_ec = " << format_number(r.horizon_ec) << '\n'
     << "run.nx = " << r.nx << '\n'
     << "run.ny = " << r.ny << '\n'
     << "run.extent = "
     << list_string({r.extent.q_lo, r.extent.q_hi, r.extent.p_lo, r.extent.p_hi}) << '\n'
     << "run.seed = " << r.seed << '\n'
     << "run.workers = " << r.workers << '\n';
  if (!r.out.empty()) os << "run.out = " << r.out << '\n';
  if (r.n_ics) os << "run.n_ics = " << *r.n_ics << '\n';
  os << "run.n_iters = " << r.n_iters << '\n' << "run.n_repeats = " << r.n_repeats << '\n';
  if (r.criterion) os << "run.criterion = " << to_string(*r.criterion) << '\n';
  os << "run.numeric = " << (r.numeric ? "true" : "false") << '\n'
     << "run.bisect_tolerance = " << format_number(r.bisect_tolerance) << '\n'
     << "run.fast = " << (r.fast ? "true" : "false") << '\n';
  if (!r.checkpoints.empty()) os << "run.checkpoints = " << list_string(r.checkpoints) << '\n';
  os << "chart.F = " << format_number(c.chart.model.F) << '\n'
     << "chart.Omega = " << format_number(c.chart.model.Omega) << '\n'
     << "chart.Psi = " << format_number(c.chart.model.Psi) << '\n'
     << "chart.xi_max = " << format_number(c.chart.model.xi_max) << '\n'
     << "chart.n = " << c.chart.n << '\n'
     << "chart.t_eval = " << list_string(c.chart.t_eval) << '\n';
  return os.str();
}

}  // namespace escape_atlas

#endif  // ESCAPE_ATLAS_CONFIG_HPP
