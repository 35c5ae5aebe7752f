#include "escape_atlas/model.hpp"

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

}  // namespace

TEST(Model, QmaxSolvesPotentialLevel) {
  for (double xi : {1e-8, 0.01, 0.1, 0.2, 0.24, 0.2499, 0.25}) {
    const double qm = ea::q_max_of(xi);
    EXPECT_NEAR(ea::potential_full(qm), xi, 1e-15) << xi;
    EXPECT_NEAR(qm, ea::oracle::turning_point(xi), 1e-12) << xi;
  }
  EXPECT_NEAR(ea::q_max_of(0.24), 0.894427190999915878563669467493, 1e-15);
  EXPECT_DOUBLE_EQ(ea::q_max_of(0.25), 1.0);
  EXPECT_EQ(ea::q_max_of(0.0), 0.0);
  EXPECT_THROW(ea::q_max_of(0.26), std::domain_error);
  EXPECT_THROW(ea::q_max_of(-1e-3), std::domain_error);
}

TEST(Model, TruncatedPotentialIsContinuousAndFlatOutside) {
  const double xi = 0.2;
  const double qm = ea::q_max_of(xi);
  EXPECT_NEAR(ea::potential_truncated(0.0, xi), -xi, 1e-15);
  EXPECT_NEAR(ea::potential_truncated(qm * (1 - 1e-9), xi), 0.0, 1e-9);
  EXPECT_EQ(ea::potential_truncated(1.3, xi), 0.0);
  EXPECT_EQ(ea::potential_truncated(-1.3, xi), 0.0);
  EXPECT_THROW(ea::potential_truncated(0.1, 0.0), std::domain_error);
}

TEST(Model, ParamsValidation) {
  ea::ModelParams p{0.05, 0.9, -pi / 2, 0.242};
  p.validate();
  EXPECT_NEAR(p.Psi, 1.5 * pi, 1e-15);
  EXPECT_NEAR(p.period(), 2 * pi / 0.9, 1e-15);
  EXPECT_THROW((ea::ModelParams{-0.1, 1.0, 0.0, 0.2}.validate()), std::domain_error);
  EXPECT_THROW((ea::ModelParams{0.1, 0.0, 0.0, 0.2}.validate()), std::domain_error);
  EXPECT_THROW((ea::ModelParams{0.1, 1.0, 0.0, 0.3}.validate()), std::domain_error);
  EXPECT_THROW((ea::ModelParams{0.1, 1.0, NAN, 0.2}.validate()), std::domain_error);
}

TEST(Model, RhsMatchesHamiltonGradient) {
  // Central differences of H0 give the unforced field.
  std::mt19937_64 rng(3);
  const ea::ModelParams prm{0.0, 1.0, 0.0, 0.25};
  for (int i = 0; i < 200; ++i) {
    const ea::PhasePoint x{uniform(rng, -0.9, 0.9), uniform(rng, -0.6, 0.6)};
    const double h = 1e-6;
    const double dHdq = (ea::hamiltonian({x.q + h, x.p}) - ea::hamiltonian({x.q - h, x.p})) / (2 * h);
    const double dHdp = (ea::hamiltonian({x.q, x.p + h}) - ea::hamiltonian({x.q, x.p - h})) / (2 * h);
    const auto v = ea::eom_rhs(x, 0.0, prm);
    EXPECT_NEAR(v.q, dHdp, 1e-8);
    EXPECT_NEAR(v.p, -dHdq, 1e-8);
  }
  const ea::ModelParams forced{0.07, 0.8, 0.3, 0.25};
  const auto v = ea::eom_rhs({0.2, 0.1}, 1.7, forced);
  EXPECT_NEAR(v.p, -0.2 + 0.008 + 0.07 * std::sin(0.8 * 1.7 + 0.3), 1e-16);
}

TEST(Model, EscapeCriterionBasics) {
  const auto d = ea::EscapeCriterion::from_truncation(ea::EscapeCriterion::Kind::Displacement, 0.24);
  EXPECT_NEAR(d.threshold, 0.894427190999915878563669467493, 1e-15);
  EXPECT_FALSE(d.exceeded({0.89, 5.0}));
  EXPECT_TRUE(d.exceeded({-0.9, 0.0}));

  const auto e = ea::EscapeCriterion::from_truncation(ea::EscapeCriterion::Kind::Energy, 0.24);
  EXPECT_TRUE(e.exceeded({0.0, 0.7}));
  EXPECT_FALSE(e.exceeded({0.0, 0.69}));
  EXPECT_TRUE(e.exceeded({1.2, 0.0}));  // beyond the well: H0 is undefined there
  EXPECT_STREQ(ea::to_string(e.kind), "energy");
  EXPECT_STREQ(ea::to_string(d.kind), "displacement");
}

TEST(ModelProperty, EnergyCriterionNeverLaterThanDisplacement) {
  // |q| > q_max implies H0 > V(q) > xi_max, so energy escape fires first.
  std::mt19937_64 rng(17);
  for (int i = 0; i < 20000; ++i) {
    const double xi = uniform(rng, 0.01, 0.25);
    const ea::PhasePoint x{uniform(rng, -1.5, 1.5), uniform(rng, -1.0, 1.0)};
    const auto d = ea::EscapeCriterion::from_truncation(ea::EscapeCriterion::Kind::Displacement, xi);
    const auto e = ea::EscapeCriterion::from_truncation(ea::EscapeCriterion::Kind::Energy, xi);
    if (d.exceeded(x)) {
      ASSERT_TRUE(e.exceeded(x)) << x.q << " " << x.p << " " << xi;
    }
  }
}

TEST(Model, EscapeDetectReturnsFirstCrossing) {
  const auto d = ea::EscapeCriterion::displacement(0.5);
  std::vector<ea::TrajectorySample> traj = {{0.0, {0.1, 0}}, {1.0, {0.4, 0}}, {2.0, {0.6, 0}}, {3.0, {0.2, 0}}};
  EXPECT_EQ(ea::escape_detect(traj, d), 2.0);
  traj[2].state.q = 0.45;
  EXPECT_FALSE(ea::escape_detect(traj, d).has_value());
  EXPECT_FALSE(ea::escape_detect({}, d).has_value());
}

namespace {

auto oscillator(const ea::ModelParams& prm) {
  return [prm](double t, const std::array<double, 2>& y) {
    const auto v = ea::eom_rhs({y[0], y[1]}, t, prm);
    return std::array<double, 2>{v.q, v.p};
  };
}

}  // namespace

TEST(Dop853, ExponentialDecayToTolerance) {
  auto rhs = [](double, const std::array<double, 1>& y) { return std::array<double, 1>{-y[0]}; };
  ea::Dop853 solver(rhs, 0.0, std::array<double, 1>{1.0}, 5.0, ea::StepControl{});
  while (!solver.finished()) solver.step();
  EXPECT_NEAR(solver.y()[0], std::exp(-5.0), 1e-11);
}

TEST(Dop853, AgreesWithFineRk4OnForcedOscillator) {
  const ea::ModelParams prm{0.05, 0.9, 1.0, 0.25};
  ea::Dop853 solver(oscillator(prm), 0.0, std::array<double, 2>{0.1, 0.0}, 40.0, ea::StepControl{});
  while (!solver.finished()) solver.step();
  const ea::oracle::Rk4Oscillator rk{prm.F, prm.Omega, prm.Psi};
  const auto ref = rk.advance(0.0, {0.1, 0.0}, 40.0, 40000);
  EXPECT_NEAR(solver.y()[0], ref[0], 1e-9);
  EXPECT_NEAR(solver.y()[1], ref[1], 1e-9);
}

TEST(Dop853, DenseOutputMatchesIndependentSolve) {
  const ea::ModelParams prm{0.03, 1.0, 0.0, 0.25};
  ea::Dop853 solver(oscillator(prm), 0.0, std::array<double, 2>{0.2, 0.0}, 30.0, ea::StepControl{});
  const ea::oracle::Rk4Oscillator rk{prm.F, prm.Omega, prm.Psi};
  int checked = 0;
  while (!solver.finished()) {
    solver.step();
    const double tm = 0.5 * (solver.t_old() + solver.t());
    const auto y = solver.dense(tm);
    const auto ref = rk.advance(0.0, {0.2, 0.0}, tm, std::max(100, static_cast<int>(tm * 400)));
    EXPECT_NEAR(y[0], ref[0], 1e-8) << tm;
    EXPECT_NEAR(y[1], ref[1], 1e-8) << tm;
    const auto end = solver.dense(solver.t());
    EXPECT_NEAR(end[0], solver.y()[0], 1e-13);
    ++checked;
  }
  EXPECT_GT(checked, 5);
}

TEST(Dop853, UnforcedEnergyDriftBelowTolerance) {
  // tau = 1000, well inside the well; DOP853 at rtol 1e-10 conserves H0 to ~1e-10.
  const ea::ModelParams prm{0.0, 1.0, 0.0, 0.25};
  const std::array<double, 2> y0{0.5, 0.1};
  ea::Dop853 solver(oscillator(prm), 0.0, y0, 1000.0, ea::StepControl{});
  const double h0 = ea::hamiltonian({y0[0], y0[1]});
  double worst = 0.0;
  while (!solver.finished()) {
    solver.step();
    worst = std::max(worst, std::abs(ea::hamiltonian({solver.y()[0], solver.y()[1]}) - h0));
  }
  EXPECT_LE(worst, 1e-9);
}

TEST(Dop853, RejectsBadTolerance) {
  auto rhs = [](double, const std::array<double, 1>& y) { return y; };
  ea::StepControl bad;
  bad.rtol = 0.0;
  EXPECT_THROW((ea::Dop853(rhs, 0.0, std::array<double, 1>{1.0}, 1.0, bad)), std::invalid_argument);
}
