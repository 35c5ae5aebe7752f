#include "escape_atlas/slow_flow.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "escape_atlas/ode.hpp"
#include "oracles.hpp"

namespace ea = escape_atlas;
using std::numbers::pi;

namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

auto slow_system(const ea::FirstIntegralContext& ctx) {
  return [ctx](double, const std::array<double, 2>& y) {
    const auto v = ea::slow_rhs({y[0], y[1]}, ctx);
    return std::array<double, 2>{v.gamma, v.xi};
  };
}

// Does the averaged flow from `ic` reach xi_max? Integrates until xi crosses
// xi_max or the state returns close to where it started after one revolution.
bool slow_flow_escapes(const ea::FirstIntegralContext& ctx, const ea::SlowState& ic, double xi_max,
                       double tau_max) {
  ea::StepControl sc;
  sc.rtol = 1e-11;
  sc.atol = 1e-13;
  sc.max_step = 2.0;
  ea::Dop853 solver(slow_system(ctx), 0.0, std::array<double, 2>{ic.gamma, ic.xi}, tau_max, sc);
  while (!solver.finished()) {
    solver.step();
    const double xi = solver.y()[1];
    if (xi >= xi_max) return true;
    if (xi <= 1e-5) return false;
  }
  return false;
}

// Smallest F at which the averaged flow escapes, by bisection on [lo, hi].
double slow_flow_threshold(double Omega, const ea::SlowState& ic, double xi_max, double lo, double hi) {
  for (int i = 0; i < 12; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (slow_flow_escapes({mid, Omega}, ic, xi_max, 1e4)) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

}  // namespace

TEST(FirstIntegral, Examples) {
  const ea::FirstIntegralContext ctx{0.05, 0.9};
  EXPECT_EQ(ea::C_value({1.3, 0.0}, ctx), 0.0);
  EXPECT_NEAR(ea::C_value({pi / 2, 0.1}, ctx), 0.1 - 0.9 * ea::action_of_energy(0.1), 1e-15);
  const ea::FirstIntegralContext free{0.0, 0.8};
  EXPECT_EQ(ea::C_value({0.3, 0.2}, free), ea::C_value({2.9, 0.2}, free));
  EXPECT_THROW(ea::C_value({0.0, 0.25}, ctx), std::domain_error);
  EXPECT_THROW((ea::FirstIntegralContext{-1.0, 1.0}.validate()), std::domain_error);
}

TEST(FirstIntegral, GradientMatchesFiniteDifference) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 200; ++i) {
    const ea::FirstIntegralContext ctx{uniform(rng, 0.0, 0.2), uniform(rng, 0.3, 1.5)};
    const ea::SlowState s{uniform(rng, 0, 2 * pi), uniform(rng, 0.01, 0.24)};
    const double h = 1e-7;
    const auto g = ea::C_gradient(s, ctx);
    const double dg = (ea::C_value({s.gamma + h, s.xi}, ctx) - ea::C_value({s.gamma - h, s.xi}, ctx)) / (2 * h);
    const double dx = (ea::C_value({s.gamma, s.xi + h}, ctx) - ea::C_value({s.gamma, s.xi - h}, ctx)) / (2 * h);
    ASSERT_NEAR(g.gamma, dg, 1e-7);
    ASSERT_NEAR(g.xi, dx, 1e-6);
  }
}

TEST(FirstIntegralProperty, ExtremaInGammaOnlyOnAxis) {
  // C depends on gamma only through cos(gamma).
  std::mt19937_64 rng(8);
  for (int i = 0; i < 100; ++i) {
    const ea::FirstIntegralContext ctx{uniform(rng, 0.01, 0.2), uniform(rng, 0.3, 1.5)};
    const double xi = uniform(rng, 0.01, 0.24);
    int arg_max = 0;
    int arg_min = 0;
    std::vector<double> c(720);
    for (int j = 0; j < 720; ++j) {
      c[j] = ea::C_value({2 * pi * j / 720, xi}, ctx);
      if (c[j] > c[arg_max]) arg_max = j;
      if (c[j] < c[arg_min]) arg_min = j;
    }
    ASSERT_EQ(arg_max, 360);
    ASSERT_EQ(arg_min, 0);
  }
}

TEST(SlowRhs, DecoupledLimitAndDomain) {
  const ea::FirstIntegralContext ctx{0.0, 0.9};
  EXPECT_EQ(ea::slow_rhs({1.0, 0.1}, ctx).xi, 0.0);
  EXPECT_NEAR(ea::slow_rhs({1.0, 0.1}, ctx).gamma, ea::angle_frequency(0.1) - 0.9, 1e-15);
  EXPECT_THROW(ea::slow_rhs({0.0, 0.0}, ctx), std::domain_error);
  EXPECT_THROW(ea::slow_rhs({0.0, 0.25}, ctx), std::domain_error);
}

TEST(SlowFlowProperty, FirstIntegralConservedAlongFlow) {
  std::mt19937_64 rng(2024);
  int done = 0;
  int attempts = 0;
  while (done < 100 && attempts < 10000) {
    ++attempts;
    const ea::FirstIntegralContext ctx{uniform(rng, 0.005, 0.1), uniform(rng, 0.5, 1.3)};
    const ea::SlowState s{uniform(rng, 0, 2 * pi), uniform(rng, 0.02, 0.22)};
    // Keep orbits that stay clear of xi = 0 and of the separatrix.
    const auto span = ea::level_span(ctx, s, 0.0, 0.245, 400);
    if (span.xi_lo < 0.01 || span.xi_hi > 0.24) continue;
    const auto saddles = ea::find_saddles(ctx);
    bool near_saddle = false;
    for (const auto& sp : saddles) near_saddle |= std::abs(sp.C_value - span.level) < 1e-4;
    if (near_saddle) continue;
    ea::StepControl sc;
    sc.rtol = 1e-12;
    sc.atol = 1e-14;
    ea::Dop853 solver(slow_system(ctx), 0.0, std::array<double, 2>{s.gamma, s.xi}, 1000.0, sc);
    while (!solver.finished()) solver.step();
    const double c1 = ea::C_value({solver.y()[0], solver.y()[1]}, ctx);
    ASSERT_LE(std::abs(c1 - span.level), 1e-8) << s.gamma << " " << s.xi << " F=" << ctx.F << " W=" << ctx.Omega;
    ++done;
  }
  EXPECT_EQ(done, 100);
}

TEST(Saddle, NoneWithoutForcing) { EXPECT_FALSE(ea::find_saddle({0.0, 0.9}).has_value()); }

TEST(Saddle, WeakForcingSitsOnBackbone) {
  for (double Omega : {0.6, 0.8, 0.95}) {
    const auto sp = ea::find_saddle({1e-7, Omega});
    ASSERT_TRUE(sp.has_value()) << Omega;
    EXPECT_NEAR(ea::angle_frequency(sp->xi_dag), Omega, 1e-4) << Omega;
  }
}

TEST(Saddle, CoexistenceParameters) {
  const ea::FirstIntegralContext ctx{0.0478, 0.76};
  const auto sp = ea::find_saddle(ctx);
  ASSERT_TRUE(sp.has_value());
  EXPECT_LT(sp->xi_dag, 0.235);
  EXPECT_GT(sp->xi_dag, 0.0);
  const auto g = ea::C_gradient({sp->gamma_dag, sp->xi_dag}, ctx);
  EXPECT_LE(std::hypot(g.gamma, g.xi), 1e-10);
  EXPECT_LT(ea::C_hessian_det_on_axis(sp->xi_dag, std::cos(sp->gamma_dag), ctx), 0.0);
  const auto v = ea::slow_rhs({sp->gamma_dag, sp->xi_dag}, ctx);
  EXPECT_LE(std::abs(v.gamma) + std::abs(v.xi), 1e-10);
  EXPECT_NEAR(sp->C_value, ea::C_value({sp->gamma_dag, sp->xi_dag}, ctx), 1e-15);
}

TEST(SaddleProperty, AllReturnedPointsAreSaddles) {
  std::mt19937_64 rng(31);
  for (int i = 0; i < 50; ++i) {
    const ea::FirstIntegralContext ctx{uniform(rng, 0.001, 0.3), uniform(rng, 0.3, 1.2)};
    for (const auto& sp : ea::find_saddles(ctx)) {
      const auto g = ea::C_gradient({sp.gamma_dag, sp.xi_dag}, ctx);
      ASSERT_LE(std::hypot(g.gamma, g.xi), 1e-10);
      ASSERT_LT(ea::C_hessian_det_on_axis(sp.xi_dag, std::cos(sp.gamma_dag), ctx), 0.0);
    }
  }
}

TEST(FcrMm, ZeroIcClosedForm) {
  for (double Omega : {0.5, 0.8, 1.0, 1.04, 1.3}) {
    for (double xm : {0.1, 0.18, 0.242}) {
      const auto r = ea::fcr_mm(Omega, {0.0, 0.0}, xm);
      ASSERT_TRUE(r.has_value());
      const double a = xm - Omega * ea::action_of_energy(xm);
      EXPECT_NEAR(r->F_cr, std::abs(a) / ea::coupling_G(xm), 1e-14);
      EXPECT_EQ(r->gamma_star, a > 0 ? 0.0 : pi);
    }
  }
}

TEST(FcrMm, AlreadyAtTangency) {
  const auto r = ea::fcr_mm(0.9, {pi, 0.2}, 0.2);
  ASSERT_TRUE(r.has_value());
  EXPECT_EQ(r->F_cr, 0.0);
}

TEST(FcrMm, LevelCurveTouchesTruncation) {
  std::mt19937_64 rng(12);
  for (int i = 0; i < 200; ++i) {
    const double xm = uniform(rng, 0.1, 0.245);
    const ea::SlowState ic{uniform(rng, 0, 2 * pi), uniform(rng, 0.0, 0.9 * xm)};
    const double Omega = uniform(rng, 0.4, 1.4);
    const auto r = ea::fcr_mm(Omega, ic, xm);
    if (!r) continue;
    const ea::FirstIntegralContext ctx{r->F_cr, Omega};
    ASSERT_NEAR(ea::C_value(ic, ctx), ea::C_value({r->gamma_star, xm}, ctx), 1e-9);
    ASSERT_NEAR(ea::C_gradient({r->gamma_star, xm}, ctx).gamma, 0.0, 1e-9);
  }
}

TEST(FcrMm, DenseLevelSweepCrossCheck) {
  // Independent route: sweep F upward and find where C(ic) first equals the
  // max or min of C over gamma on the circle xi = xi_max, using quadrature actions.
  const double Omega = 1.04;
  const double xm = 0.18;
  const double Jm = ea::oracle::action(xm);
  const double G = ea::coupling_G(xm);
  double found = -1.0;
  for (int i = 1; i <= 200000; ++i) {
    const double F = 1e-6 * i;
    const double lo = -F * G - Omega * Jm + xm;
    const double hi = F * G - Omega * Jm + xm;
    if (lo <= 0.0 && hi >= 0.0) {
      found = F;
      break;
    }
  }
  const auto r = ea::fcr_mm(Omega, {0.0, 0.0}, xm);
  ASSERT_TRUE(r.has_value());
  EXPECT_NEAR(r->F_cr, found, 1.1e-6);
  EXPECT_EQ(r->gamma_star, pi);
}

TEST(FcrSm, ResidualsAndSaddleCondition) {
  std::vector<double> grid;
  for (int i = 1; i < 240; ++i) grid.push_back(i * 0.001);
  for (const ea::SlowState ic : {ea::SlowState{0.0, 0.0}, ea::SlowState{pi, 0.05}, ea::SlowState{0.0, 0.05}}) {
    std::vector<std::string> skipped;
    const auto curve = ea::fcr_sm_curve(grid, ic, 0.242, ea::CouplingModel::Truncated, &skipped);
    ASSERT_FALSE(curve.empty());
    for (const auto& p : curve) {
      const ea::FirstIntegralContext ctx{p.F_cr, p.Omega};
      const auto g = ea::C_gradient({p.gamma_dag, p.xi_dag}, ctx);
      ASSERT_LE(std::abs(g.xi) + std::abs(g.gamma), 1e-9);
      ASSERT_NEAR(ea::C_value({p.gamma_dag, p.xi_dag}, ctx), ea::C_value(ic, ctx), 1e-9);
      ASSERT_LT(ea::C_hessian_det_on_axis(p.xi_dag, std::cos(p.gamma_dag), ctx), 0.0);
    }
  }
}

TEST(FcrSm, WeakForcingLimitIsBackbone) {
  const std::vector<double> grid = {0.002, 0.005, 0.01};
  const auto curve = ea::fcr_sm_curve(grid, {0.0, 0.0}, 0.242);
  ASSERT_FALSE(curve.empty());
  for (const auto& p : curve) EXPECT_NEAR(p.Omega, ea::angle_frequency(p.xi_dag), 5e-3) << p.xi_dag;
}

TEST(FcrSm, ZeroIcThresholdHasSingleDip) {
  // The saddle curve falls monotonically toward the backbone as Omega -> 1;
  // combined with the tangency branch the threshold has one minimum.
  std::vector<double> grid;
  for (int i = 1; i < 2420; ++i) grid.push_back(i * 1e-4);
  auto curve = ea::fcr_sm_curve(grid, {0.0, 0.0}, 0.242);
  ASSERT_GT(curve.size(), 100u);
  for (std::size_t i = 1; i < curve.size(); ++i) {
    ASSERT_LT(curve[i].Omega, curve[i - 1].Omega);
    ASSERT_GT(curve[i].F_cr, curve[i - 1].F_cr);
  }
  std::vector<double> omegas;
  for (int i = 0; i <= 700; ++i) omegas.push_back(0.5 + i * 0.001);
  const auto env = ea::fcr_envelope(omegas, {0.0, 0.0}, 0.242);
  int minima = 0;
  double omega_min = 0.0;
  for (std::size_t i = 1; i + 1 < env.size(); ++i) {
    if (env[i].F_cr < env[i - 1].F_cr && env[i].F_cr < env[i + 1].F_cr) {
      ++minima;
      omega_min = env[i].Omega;
    }
  }
  EXPECT_EQ(minima, 1);
  EXPECT_GT(omega_min, 0.8);
  EXPECT_LT(omega_min, 1.0);
}

TEST(FcrSm, RejectsOutOfRangeGridPoints) {
  std::vector<std::string> skipped;
  const std::vector<double> grid = {0.0, 0.3, 0.25};
  EXPECT_TRUE(ea::fcr_sm_curve(grid, {0.0, 0.0}, 0.2, ea::CouplingModel::Truncated, &skipped).empty());
  EXPECT_EQ(skipped.size(), 3u);
}

TEST(Envelope, MatchesSmallestValidatedCandidate) {
  // Candidates: both tangency branches and every saddle pinch on the SM curve
  // at this Omega. The threshold is the smallest one after which the level
  // piece actually reaches xi_max.
  std::vector<double> grid;
  for (int i = 1; i < 4000; ++i) grid.push_back(i * 0.242 / 4000);
  for (const ea::SlowState ic : {ea::SlowState{0.0, 0.0}, ea::SlowState{pi, 0.04}, ea::SlowState{0.25, 0.04}}) {
    const ea::ThresholdProfile prof(ic, 0.242);
    for (double Omega : {0.55, 0.7, 0.85, 0.9, 0.95, 1.1}) {
      std::vector<double> cand;
      const double Gm = ea::coupling_G(0.242);
      const double g = ea::coupling_G(ic.xi) * std::cos(ic.gamma);
      const double da = ea::resonance_offset(ic.xi, Omega) - ea::resonance_offset(0.242, Omega);
      for (double cs : {1.0, -1.0}) {
        const double F = da / (g - Gm * cs);
        if (F > 0) cand.push_back(F);
      }
      // Saddle candidates at this Omega: sign changes of Omega along the curve.
      for (double sigma : {1.0, -1.0}) {
        auto omega_of = [&](double xd) {
          const double w = ea::angle_frequency(xd);
          const double a12 = sigma * ea::coupling_G_derivative(xd);
          const double a21 = ea::action_of_energy(ic.xi) - ea::action_of_energy(xd);
          const double a22 = g - sigma * ea::coupling_G(xd);
          const double det = a22 / w - a12 * a21;
          return std::pair{(a22 - a12 * (ic.xi - xd)) / det, ((ic.xi - xd) / w - a21) / det};
        };
        for (std::size_t i = 1; i < grid.size(); ++i) {
          if (grid[i - 1] <= ic.xi) continue;
          const auto [w0, f0] = omega_of(grid[i - 1]);
          const auto [w1, f1] = omega_of(grid[i]);
          if ((w0 - Omega) * (w1 - Omega) <= 0 && f0 > 0 && f1 > 0) {
            cand.push_back(f0 + (f1 - f0) * (Omega - w0) / (w1 - w0));
          }
        }
      }
      std::sort(cand.begin(), cand.end());
      double best = -1;
      for (double F : cand) {
        // Piece through the IC at a slightly larger F must reach xi_max.
        const ea::FirstIntegralContext ctx{F * (1 + 1e-6), Omega};
        const auto span = ea::level_span(ctx, ic, 0.0, 0.242, 20000);
        const ea::FirstIntegralContext below{F * (1 - 1e-6), Omega};
        const auto span_below = ea::level_span(below, ic, 0.0, 0.242, 20000);
        if (span.xi_hi >= 0.242 && span_below.xi_hi < 0.242) {
          best = F;
          break;
        }
      }
      ASSERT_GT(best, 0) << Omega;
      EXPECT_NEAR(prof.at(Omega).F_cr, best, 2e-5 * best) << Omega << " ic.xi=" << ic.xi;
    }
  }
}

TEST(Envelope, AgreesWithSlowFlowIntegration) {
  const ea::SlowState ic{pi, 0.03};
  const double xm = 0.2;
  const ea::ThresholdProfile prof(ic, xm);
  for (double Omega : {0.7, 0.9, 1.05}) {
    const double F = prof.at(Omega).F_cr;
    const double Fnum = slow_flow_threshold(Omega, ic, xm, 0.97 * F, 1.03 * F);
    EXPECT_NEAR(Fnum, F, 2e-3 * F) << Omega;
  }
}

TEST(Envelope, ShallowerWellMovesDipTowardUnity) {
  std::vector<double> omegas;
  for (int i = 0; i <= 600; ++i) omegas.push_back(0.5 + i * 0.001);
  auto dip = [&](double xm) {
    const auto env = ea::fcr_envelope(omegas, {0.0, 0.0}, xm);
    return std::min_element(env.begin(), env.end(), [](auto& a, auto& b) { return a.F_cr < b.F_cr; })->Omega;
  };
  const double d1 = dip(0.242);
  const double d2 = dip(0.2);
  const double d3 = dip(0.15);
  EXPECT_LT(d1, d2);
  EXPECT_LT(d2, d3);
  EXPECT_LT(d3, 1.0);
}

TEST(Envelope, HigherInitialEnergyLowersThreshold) {
  std::vector<double> omegas;
  for (int i = 0; i <= 28; ++i) omegas.push_back(0.5 + i * 0.025);
  const auto low = ea::fcr_envelope(omegas, {0.25, 0.05}, 0.242);
  const auto high = ea::fcr_envelope(omegas, {0.25, 0.15}, 0.242);
  for (std::size_t i = 0; i < omegas.size(); ++i) EXPECT_LT(high[i].F_cr, low[i].F_cr) << omegas[i];
}

TEST(Envelope, InitialPhaseLowersSaddleBranchRaisesTangencyBranch) {
  double prev_sm = 1e9;
  double prev_mm = 0.0;
  for (double g : {0.0, 0.5, 1.0, 1.5}) {
    const ea::ThresholdProfile prof({g, 0.15}, 0.242);
    const auto sm = prof.at(0.6);
    const auto mm = prof.at(1.1);
    ASSERT_EQ(sm.mechanism, ea::MechanismKind::SM);
    ASSERT_EQ(mm.mechanism, ea::MechanismKind::MM);
    EXPECT_LT(sm.F_cr, prev_sm);
    EXPECT_GT(mm.F_cr, prev_mm);
    prev_sm = sm.F_cr;
    prev_mm = mm.F_cr;
  }
}

TEST(Envelope, InitialStateOnSaddle) {
  // On gamma = 0 the threshold can be the force that turns the IC itself into the saddle.
  const ea::SlowState ic{0.0, 0.04};
  const auto e = ea::ThresholdProfile(ic, 0.242).at(0.9);
  const double a1 = 1.0 - 0.9 / ea::angle_frequency(0.04);
  EXPECT_NEAR(e.F_cr, a1 / ea::coupling_G_derivative(0.04), 1e-6);
  EXPECT_EQ(e.mechanism, ea::MechanismKind::SM);
}

TEST(Envelope, OrderingAndDeterminism) {
  const std::vector<double> omegas = {1.1, 0.6, 0.9};
  const auto a = ea::fcr_envelope(omegas, {0.0, 0.0}, 0.2);
  const auto b = ea::fcr_envelope(omegas, {0.0, 0.0}, 0.2);
  ASSERT_EQ(a.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(a[i].Omega, omegas[i]);
    EXPECT_EQ(a[i].F_cr, b[i].F_cr);
  }
  EXPECT_THROW(ea::fcr_envelope(omegas, {0.0, 0.25}, 0.2), std::domain_error);
}

TEST(Mechanism, SaddleAboveShallowTruncation) {
  const auto env = ea::ThresholdProfile({0.0, 0.0}, 0.15).at(0.6);
  EXPECT_EQ(env.mechanism, ea::MechanismKind::SMM);
  const auto sp = ea::find_saddle({env.F_cr, 0.6});
  ASSERT_TRUE(sp.has_value());
  EXPECT_GT(sp->xi_dag, 0.15);
  EXPECT_EQ(ea::classify_mechanism(0.6, {0.0, 0.0}, 0.15, env.F_cr), ea::MechanismKind::SMM);
  EXPECT_EQ(ea::classify_mechanism(0.6, {0.0, 0.0}, 0.15, 0.0), ea::MechanismKind::MM);
}

TEST(Mechanism, SwitchesWhereMmAndSmCurvesMeet) {
  // Zero IC, deep well: SM below the dip, MM above. The switch sits where the
  // SM curve crosses the MM curve.
  const ea::SlowState ic{0.0, 0.0};
  const double xm = 0.242;
  const ea::ThresholdProfile prof(ic, xm);
  double lo = 0.7;
  double hi = 1.0;
  ASSERT_EQ(prof.at(lo).mechanism, ea::MechanismKind::SM);
  ASSERT_EQ(prof.at(hi).mechanism, ea::MechanismKind::MM);
  for (int i = 0; i < 40; ++i) {
    const double mid = 0.5 * (lo + hi);
    (prof.at(mid).mechanism == ea::MechanismKind::SM ? lo : hi) = mid;
  }
  // At the switch the MM and SM thresholds coincide.
  std::vector<double> grid;
  for (int i = 1; i < 24200; ++i) grid.push_back(i * 1e-5);
  const auto curve = ea::fcr_sm_curve(grid, ic, xm);
  double f_sm = -1;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    const auto& a = curve[i - 1];
    const auto& b = curve[i];
    if ((a.Omega - lo) * (b.Omega - lo) <= 0 && a.gamma_dag == b.gamma_dag) {
      f_sm = a.F_cr + (b.F_cr - a.F_cr) * (lo - a.Omega) / (b.Omega - a.Omega);
    }
  }
  const auto mm = ea::fcr_mm(lo, ic, xm);
  ASSERT_TRUE(mm.has_value());
  ASSERT_GT(f_sm, 0);
  EXPECT_NEAR(f_sm, mm->F_cr, 1e-3 * mm->F_cr);
}

TEST(LevelSpan, LowestThresholdTouchesOrigin) {
  // C = 0 passes through xi = 0; a level slightly above zero-IC forcing stays off the origin.
  const ea::FirstIntegralContext ctx{0.05, 0.9};
  const auto span = ea::level_span(ctx, {pi / 2, 0.0});
  EXPECT_EQ(span.xi_lo, 0.0);
  EXPECT_EQ(span.level, 0.0);
  EXPECT_GT(span.xi_hi, 0.0);
}
