#include <gtest/gtest.h>

#include <limits>

#include "support.hpp"

using namespace codesign;

namespace {

double max_abs_diff(const DesignGradient& a, const DesignGradient& b) {
  return std::max({(a.phi - b.phi).cwiseAbs().maxCoeff(), (a.psi - b.psi).cwiseAbs().maxCoeff(),
                   (a.controller - b.controller).cwiseAbs().maxCoeff()});
}

double max_abs(const DesignGradient& a) {
  return std::max({a.phi.cwiseAbs().maxCoeff(), a.psi.cwiseAbs().maxCoeff(), a.controller.cwiseAbs().maxCoeff()});
}

}  // namespace

TEST(Gradient, MatchesFiniteDifferences2D) {
  const Scenario<2> sc = fixtures::tiny_scenario();
  const auto report =
      finite_diff_check<2>(sc, fixtures::random_variables(sc), fixtures::tiny_terrain(sc), 64, 1e-5, 1);
  ASSERT_EQ(report.rows.size(), 64u);
  EXPECT_LT(report.max_rel_err(), 1e-3);
  for (const char* b : {"phi", "psi", "controller"}) EXPECT_LT(report.max_rel_err(b), 1e-3) << b;
}

TEST(Gradient, MatchesFiniteDifferences3D) {
  const Scenario<3> sc = fixtures::tiny_scenario_3d();
  const auto report =
      finite_diff_check<3>(sc, fixtures::random_variables(sc), fixtures::tiny_terrain(sc), 12, 1e-5, 2);
  EXPECT_LT(report.max_rel_err(), 1e-3);
}

TEST(Gradient, CheckpointIntervalDoesNotMatter) {
  const auto t = fixtures::tiny_terrain(fixtures::tiny_scenario());
  const DesignVariables v = fixtures::random_variables(fixtures::tiny_scenario());
  const auto ref = backward_rollout<2>(fixtures::tiny_scenario(10), v, t);
  for (long K : {1L, 50L}) {
    const auto g = backward_rollout<2>(fixtures::tiny_scenario(K), v, t);
    EXPECT_EQ(g.loss.F, ref.loss.F);
    EXPECT_LE(max_abs_diff(g.grad, ref.grad), 1e-12 * max_abs(ref.grad)) << "K = " << K;
  }
}

TEST(Gradient, CheckpointMustDivideTheSteps) {
  const Scenario<2> sc = fixtures::tiny_scenario(7);
  EXPECT_THROW(backward_rollout<2>(sc, fixtures::random_variables(sc), fixtures::tiny_terrain(sc)), ConfigError);
}

TEST(Gradient, LossMatchesTheForwardPass) {
  const Scenario<2> sc = fixtures::tiny_scenario();
  const auto v = fixtures::random_variables(sc);
  const auto t = fixtures::tiny_terrain(sc);
  EXPECT_EQ(backward_rollout<2>(sc, v, t).loss.F, episode_objective<2>(sc, v, t));
}

TEST(Gradient, RepeatedPassesAreIdentical) {
  const Scenario<2> sc = fixtures::tiny_scenario();
  const auto v = fixtures::random_variables(sc);
  const auto t = fixtures::tiny_terrain(sc);
  const auto a = backward_rollout<2>(sc, v, t);
  const auto b = backward_rollout<2>(sc, v, t);
  EXPECT_EQ(a.grad.phi, b.grad.phi);
  EXPECT_EQ(a.grad.psi, b.grad.psi);
  EXPECT_EQ(a.grad.controller, b.grad.controller);
}

TEST(Gradient, DeadHiddenUnitGetsNoGradient) {
  const Scenario<2> sc = fixtures::tiny_scenario();
  DesignVariables v = fixtures::random_variables(sc);
  const int k = 1;
  v.controller.w2().col(k).setZero();
  const auto g = backward_rollout<2>(sc, v, fixtures::tiny_terrain(sc));
  const ControllerWeights& w = v.controller;
  EXPECT_EQ(g.grad.controller[w.b1_offset() + k], 0.0);
  for (int c = 0; c < w.shape.n_input(); ++c)
    EXPECT_EQ(g.grad.controller[w.w1_offset() + k * w.shape.n_input() + c], 0.0);
  EXPECT_NE(g.grad.controller[w.b1_offset()], 0.0);
}

TEST(Gradient, FrozenPhysicsIsStationary) {
  // No gravity and no actuation: the body never moves, so F = 1 for every design.
  Scenario<2> sc = fixtures::tiny_scenario();
  sc.sim.gravity.setZero();
  DesignVariables v = fixtures::random_variables(sc);
  v.controller.c_act = 0.0;
  const auto t = fixtures::tiny_terrain(sc);
  const auto g = backward_rollout<2>(sc, v, t);
  EXPECT_EQ(g.loss.F, 1.0);
  EXPECT_LT(max_abs(g.grad), 1e-12);
  // Decoupled probes: adjoint and central differences both vanish.
  const auto report = finite_diff_check<2>(sc, v, t, 9, 1e-5, 3);
  for (const auto& row : report.rows) {
    EXPECT_LT(std::abs(row.adjoint), 1e-10) << row.block;
    EXPECT_LT(std::abs(row.fd), 1e-10) << row.block;
  }
}

TEST(Gradient, ProbeCountMustBePositive) {
  const Scenario<2> sc = fixtures::tiny_scenario();
  EXPECT_THROW(finite_diff_check<2>(sc, fixtures::random_variables(sc), fixtures::tiny_terrain(sc), 0, 1e-5, 1),
               ConfigError);
}

TEST(Gradient, NonFiniteEntriesNameTheirBlock) {
  const Scenario<2> sc = fixtures::tiny_scenario();
  DesignGradient g = DesignGradient::zeros_like(fixtures::random_variables(sc));
  EXPECT_NO_THROW(require_finite(g));
  g.psi(2, 1) = std::numeric_limits<double>::quiet_NaN();
  try {
    require_finite(g);
    FAIL() << "expected a GradientError";
  } catch (const GradientError& e) {
    EXPECT_EQ(e.block(), "psi");
  }
  g.psi(2, 1) = 0.0;
  g.controller[0] = std::numeric_limits<double>::infinity();
  try {
    require_finite(g);
    FAIL() << "expected a GradientError";
  } catch (const GradientError& e) {
    EXPECT_EQ(e.block(), "controller");
  }
}

TEST(Gradient, RelativeErrorFloor) {
  EXPECT_EQ(relative_error(0.0, 0.0), 0.0);
  EXPECT_NEAR(relative_error(1.0, 1.001), 0.001 / 1.001, 1e-15);
  EXPECT_NEAR(relative_error(1e-14, 0.0), 1e-4, 1e-18);
}
