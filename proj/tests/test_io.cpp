#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <cstring>
#include <random>
#include <sstream>

#include "escape_atlas/config.hpp"
#include "escape_atlas/csv.hpp"
#include "escape_atlas/svg.hpp"

namespace ea = escape_atlas;
namespace csv = escape_atlas::csv;

TEST(Csv, NumbersRoundTripBitForBit) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> xs = {0.0, -0.0, 0.1, 1.0 / 3.0, 1e-300, 4.9e-324, std::numeric_limits<double>::max(), 0.0876};
  for (int i = 0; i < 2000; ++i) xs.push_back(u(rng) * std::pow(10.0, static_cast<int>(u(rng) * 30)));
  for (double x : xs) {
    const double back = csv::parse_number(csv::format_number(x));
    EXPECT_EQ(std::memcmp(&x, &back, sizeof x), 0) << csv::format_number(x);
  }
  EXPECT_TRUE(std::isnan(csv::parse_number("nan")));
  EXPECT_THROW(csv::parse_number("1,5"), csv::ParseError);
  EXPECT_THROW(csv::parse_number(""), csv::ParseError);
}

TEST(Csv, FcrRoundTrip) {
  const std::vector<csv::FcrRow> rows = {{0.9, 0.0633, "SM"}, {1.0 / 3.0, 1e-5, "MM"}, {1.2, 0.2, "SMM"}};
  std::stringstream ss;
  csv::write_fcr(ss, rows);
  EXPECT_EQ(ss.str().find('\r'), std::string::npos);
  EXPECT_EQ(ss.str().substr(0, ss.str().find('\n')), "omega,f_cr,mechanism");
  EXPECT_EQ(csv::read_fcr(ss), rows);
}

TEST(Csv, GridRoundTripKeepsEmptyEscapeTime) {
  const std::vector<csv::GridRow> rows = {{-1.0, 0.5, true, 0.0}, {0.1, 0.2, false, std::nullopt},
                                          {0.3, -0.7, true, 12.345678901234567}};
  std::stringstream ss;
  csv::write_grid(ss, rows);
  EXPECT_NE(ss.str().find("0.10000000000000001,0.20000000000000001,0,\n"), std::string::npos);
  EXPECT_EQ(csv::read_grid(ss), rows);
}

TEST(Csv, StrobeCriteriaAreaBoundaryRoundTrip) {
  const std::vector<csv::StrobeRow> s = {{0, 1, 0.1, -0.2}, {3, 3000, 1e-17, 0.5}};
  std::stringstream a;
  csv::write_strobe(a, s);
  EXPECT_EQ(csv::read_strobe(a), s);

  const std::vector<csv::CriteriaCsvRow> c = {{0.001, 0, 2900, 2890, 10.0 / 2890}, {0.071, 4, 0, 0, std::nan("")}};
  std::stringstream b;
  csv::write_criteria(b, c);
  EXPECT_EQ(csv::read_criteria(b), c);

  const std::vector<ea::AreaSample> ar = {{10.0, 400}, {2000.0, 120}};
  std::stringstream d;
  csv::write_area(d, ar);
  const auto back = csv::read_area(d);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].t_eval_ec, 2000.0);
  EXPECT_EQ(back[1].safe_pixels, 120u);

  const auto region = ea::analytic_basin({0.0478, 0.76, std::numbers::pi, 0.235});
  const auto rows = csv::boundary_rows(region);
  std::stringstream e;
  csv::write_boundary(e, rows);
  EXPECT_EQ(csv::read_boundary(e), rows);
}

TEST(Csv, RejectsWrongHeaderAndRagged) {
  std::stringstream a("omega,f\n1,2\n");
  EXPECT_THROW(csv::read_fcr(a), csv::ParseError);
  std::stringstream b("omega,f_cr,mechanism\n1,2\n");
  EXPECT_THROW(csv::read_fcr(b), csv::ParseError);
}

TEST(Config, ParsesSectionsDottedKeysAndRanges) {
  const auto c = ea::parse_config_string(R"(
# threshold sweep over three truncation levels
model.xi_max = 0.242
model.Psi = 3.141592653589793
[sweep]
omega = 0.5:1.2:8   # eight points
xi_max = 0.15, 0.2, 0.242
[run]
seed = 42
criterion = both
extent = -0.5, 0.5, -0.25, 0.25
)");
  EXPECT_EQ(c.model.xi_max, 0.242);
  ASSERT_EQ(c.sweep.omega.size(), 8u);
  EXPECT_EQ(c.sweep.omega.front(), 0.5);
  EXPECT_EQ(c.sweep.omega.back(), 1.2);
  EXPECT_NEAR(c.sweep.omega[1], 0.6, 1e-15);
  EXPECT_EQ(c.sweep.xi_max.size(), 3u);
  EXPECT_EQ(c.run.seed, 42u);
  EXPECT_EQ(c.run.criterion, ea::CriterionChoice::Both);
  EXPECT_FALSE(ea::parse_config_string("").run.criterion.has_value());
  EXPECT_EQ(c.run.extent.p_hi, 0.25);
}

TEST(Config, RoundTripIsIdentity) {
  ea::RunConfig c;
  c.model = {0.0876, 0.99, std::numbers::pi, 0.24};
  c.coupling = ea::CouplingModel::FullFourier;
  c.ic = ea::SlowState{0.25, 0.15};
  c.sweep.omega = {0.1, 1.0 / 3.0, 0.9};
  c.sweep.F = {0.001, 0.006};
  c.run.horizon_ec = 500;
  c.run.seed = 1234567890123ull;
  c.run.out = "out/period_map";
  c.run.numeric = true;
  c.run.checkpoints = {10, 2000, 11000};
  c.run.n_ics = 10000;
  c.run.criterion = ea::CriterionChoice::Displacement;
  c.chart.t_eval = {500};
  c.chart.model.Psi = 1.0;
  const auto once = ea::parse_config_string(ea::serialize_config(c));
  EXPECT_EQ(once, c);
  EXPECT_EQ(ea::serialize_config(once), ea::serialize_config(c));
  const auto defaults = ea::parse_config_string("");
  EXPECT_EQ(ea::parse_config_string(ea::serialize_config(defaults)), defaults);
}

TEST(Config, ErrorsNameTheOffendingKey) {
  auto key_of = [](const std::string& text) {
    try {
      ea::parse_config_string(text);
    } catch (const ea::ConfigError& e) {
      return e.key;
    }
    return std::string("<none>");
  };
  EXPECT_EQ(key_of("model.Omega = -1"), "model.Omega");
  EXPECT_EQ(key_of("model.F = abc"), "model.F");
  EXPECT_EQ(key_of("sweep.omega = 1.0, 0.9"), "sweep.omega");
  EXPECT_EQ(key_of("model.colour = red"), "model.colour");
  EXPECT_EQ(key_of("ic.q = 0.1\nic.xi = 0.1"), "ic.xi");
  EXPECT_EQ(key_of("run.nx = 1"), "run.nx");
  EXPECT_EQ(key_of("model.xi_max = 0.3"), "model.xi_max");
  EXPECT_EQ(key_of("run.checkpoints = 100, 50"), "run.checkpoints");
  EXPECT_EQ(key_of("chart.n = 1"), "chart.n");
  EXPECT_EQ(key_of("[chart]\nOmega = 0"), "chart.Omega");
}

TEST(Svg, EmitsWellFormedDocument) {
  escape_atlas::svg::Plot p(-1, 1, -1, 1, "q0", "p0");
  p.title("a < b & c");
  p.polyline({{-0.5, 0}, {0, 0.5}, {0.5, 0}}, "#c00", 1.5, true);
  p.points({{0.1, 0.1}, {0.2, 0.2}}, "#00f");
  p.mask({1, 1, 0, 0, 1, 0, 1, 1, 1}, 3, 3, -1, 1, -1, 1, "#888");
  const auto s = p.str();
  EXPECT_EQ(s.rfind("<svg", 0), 0u);
  EXPECT_NE(s.find("</svg>"), std::string::npos);
  EXPECT_NE(s.find("stroke-dasharray"), std::string::npos);
  EXPECT_NE(s.find("a &lt; b &amp; c"), std::string::npos);
  // Three horizontal runs: row 0 one run of 2, row 1 one, row 2 one of 3.
  std::size_t rects = 0;
  for (auto at = s.find("<rect x="); at != std::string::npos; at = s.find("<rect x=", at + 1)) ++rects;
  EXPECT_EQ(rects, 3u + 2u);  // plus clip rect and frame
}
