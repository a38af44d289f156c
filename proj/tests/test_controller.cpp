#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "support.hpp"

using namespace codesign;

namespace {

SurfaceGrid surface_from(const Lattice& lat, const std::function<double(long, long)>& h) {
  SurfaceGrid s;
  s.lattice = lat;
  for (long ix = 0; ix < lat.nx; ++ix)
    for (long iz = 0; iz < lat.nz; ++iz) {
      s.height.push_back(h(ix, iz));
      s.index.push_back(static_cast<int>(std::lround(h(ix, iz) / lat.dx)));
    }
  return s;
}

Lattice lattice2(long nx = 81) {
  Lattice l;
  l.nx = nx;
  return l;
}

}  // namespace

TEST(Feedforward, FrequenciesSpanTheConfiguredBand) {
  SensorConfig cfg;
  EXPECT_DOUBLE_EQ(feedforward_frequency(1, cfg), 4.0 * std::numbers::pi);
  EXPECT_DOUBLE_EQ(feedforward_frequency(28, cfg), 16.0 * std::numbers::pi);
  EXPECT_LT(feedforward_frequency(2, cfg), feedforward_frequency(3, cfg));
}

TEST(Feedforward, SinesVanishAndCosinesAreOneAtStart) {
  SensorConfig cfg;
  const Eigen::VectorXd u = feedforward_signals(0.0, cfg);
  ASSERT_EQ(u.size(), 56);
  for (int l = 0; l < 28; ++l) {
    EXPECT_EQ(u[l], 0.0);
    EXPECT_EQ(u[l + 28], 1.0);
  }
}

TEST(Feedforward, PhaseAtQuarterPeriod) {
  SensorConfig cfg;
  const double t = 0.125;  // a quarter period of 2 Hz
  const Eigen::VectorXd u = feedforward_signals(t, cfg);
  EXPECT_NEAR(u[0], 1.0, 1e-14);
  EXPECT_NEAR(u[28], 0.0, 1e-14);
}

TEST(FeedbackLayout, SizeFollowsTheWindow) {
  SensorConfig cfg;
  cfg.window = 0.4;
  EXPECT_EQ(make_feedback_layout(cfg, 0.0125, 2).size(), 33);
  cfg.window = 0.1;
  EXPECT_EQ(make_feedback_layout(cfg, 0.025, 2).size(), 5);
  cfg.window = 0.0;
  EXPECT_EQ(make_feedback_layout(cfg, 0.0125, 2).size(), 0);
  EXPECT_EQ(make_feedback_layout(cfg, 0.0125, 3).size(), 0);
}

TEST(FeedbackLayout, DiskGroupsStayInsideTheDisk) {
  SensorConfig cfg;
  cfg.window = 0.3;
  const auto layout = make_feedback_layout(cfg, 0.0125, 3);
  EXPECT_GT(layout.size(), 1);
  const double r = 0.3 / (2 * 0.0125);
  bool centre = false;
  for (const auto& g : layout.groups) {
    EXPECT_EQ(g.di % 3, 0);
    EXPECT_EQ(g.dk % 3, 0);
    EXPECT_LE(g.di * g.di + g.dk * g.dk, r * r + 1e-9);
    EXPECT_FALSE(g.members.empty());
    EXPECT_LE(g.members.size(), 9u);
    centre |= g.di == 0 && g.dk == 0;
  }
  EXPECT_TRUE(centre);
}

TEST(Feedback, FlatGroundAtCalibrationHeightIsZero) {
  const Lattice lat = lattice2();
  const auto s = surface_from(lat, [](long, long) { return 0.1; });
  SensorConfig cfg;
  cfg.window = 0.4;
  const auto layout = make_feedback_layout(cfg, lat.dx, 2);
  const double yc = 0.2;
  cfg.y_offset = yc - 0.1;
  const Eigen::VectorXd u = sense_terrain<2>(Vec<2>(0.5, yc), s, layout, cfg);
  ASSERT_EQ(u.size(), 33);
  for (double v : u) EXPECT_EQ(v, 0.0);
}

TEST(Feedback, StepOfOneHeightScale) {
  const double sigma = 0.02;
  const Lattice lat = lattice2();
  const auto s = surface_from(lat, [&](long ix, long) { return ix >= 40 ? 0.1 + sigma : 0.1; });
  SensorConfig cfg;
  cfg.window = 0.4;
  cfg.c_fb = 1.0 / sigma;
  cfg.y_offset = 0.1;
  const auto layout = make_feedback_layout(cfg, lat.dx, 2);
  const Eigen::VectorXd u = sense_terrain<2>(Vec<2>(0.5, 0.2), s, layout, cfg);
  for (int g = 0; g < layout.size(); ++g) {
    if (40 + layout.groups[g].di >= 40)
      EXPECT_NEAR(u[g], std::tanh(-1.0), 1e-12);
    else
      EXPECT_NEAR(u[g], 0.0, 1e-12);
  }
}

TEST(Feedback, EdgesAreClamped) {
  const Lattice lat = lattice2();
  const auto s = surface_from(lat, [](long ix, long) { return 0.001 * static_cast<double>(ix); });
  SensorConfig cfg;
  cfg.window = 0.4;
  const auto layout = make_feedback_layout(cfg, lat.dx, 2);
  const Eigen::VectorXd h = window_heights<2>(Vec<2>(0.0, 0.2), s, layout);
  EXPECT_EQ(h[0], 0.0);
  EXPECT_EQ(h[16], 0.0);
  EXPECT_NEAR(h[32], 0.016, 1e-15);
}

TEST(Feedback, TranslationEquivariance) {
  const Lattice lat = lattice2();
  auto f = [](long ix) { return 0.1 + 0.01 * std::sin(0.37 * static_cast<double>(ix)); };
  const auto s0 = surface_from(lat, [&](long ix, long) { return f(ix); });
  const auto s1 = surface_from(lat, [&](long ix, long) { return f(ix - 3); });
  SensorConfig cfg;
  cfg.window = 0.2;
  const auto layout = make_feedback_layout(cfg, lat.dx, 2);
  const Eigen::VectorXd a = window_heights<2>(Vec<2>(0.4, 0.2), s0, layout);
  const Eigen::VectorXd b = window_heights<2>(Vec<2>(0.4 + 3 * lat.dx, 0.2), s1, layout);
  EXPECT_EQ(a, b);
}

TEST(Feedback, ConstantTerrainIn3D) {
  Lattice lat = lattice2();
  lat.nz = 81;
  const auto s = surface_from(lat, [](long, long) { return 0.1125; });
  SensorConfig cfg;
  cfg.window = 0.3;
  const auto layout = make_feedback_layout(cfg, lat.dx, 3);
  for (const Vec<3>& c : {Vec<3>(0.5, 0.2, 0.5), Vec<3>(0.02, 0.2, 0.98)}) {
    const Eigen::VectorXd h = window_heights<3>(c, s, layout);
    for (double v : h) EXPECT_DOUBLE_EQ(v, 0.1125);
  }
}

TEST(Controller, ParameterCount) {
  const ControllerShape s{56, 33, 4};
  EXPECT_EQ(s.n_input(), 89);
  EXPECT_EQ(s.n_hidden(), 47);
  EXPECT_EQ(s.param_count(), 47 * 89 + 47 + 4 * 47 + 4);
}

TEST(Controller, ZeroWeightsGiveNoActuation) {
  const ControllerWeights w(ControllerShape{4, 5, 2}, 2e4);
  const Eigen::VectorXd a = controller_forward(w, Eigen::VectorXd::Random(9));
  EXPECT_EQ(a, Eigen::VectorXd::Zero(2));
}

TEST(Controller, SingleUnitValue) {
  ControllerWeights w(ControllerShape{1, 0, 1}, 2e4);
  ASSERT_EQ(w.shape.n_hidden(), 1);
  w.w1()(0, 0) = 1.0;
  w.w2()(0, 0) = 1.0;
  const Eigen::VectorXd a = controller_forward(w, Eigen::VectorXd::Constant(1, 0.5));
  EXPECT_NEAR(a[0], 2e4 * std::tanh(std::tanh(0.5)), 1e-9);
  EXPECT_NEAR(a[0] / 2e4, 0.4318082, 1e-7);
}

TEST(Controller, OutputIsBounded) {
  ControllerWeights w = xavier_init(ControllerShape{8, 3, 3}, 2e4, 1);
  w.params *= 100.0;
  for (int k = 0; k < 20; ++k) {
    const Eigen::VectorXd a = controller_forward(w, 10.0 * Eigen::VectorXd::Random(11));
    EXPECT_LE(a.cwiseAbs().maxCoeff(), 2e4);
  }
}

TEST(Controller, WrongInputLengthThrows) {
  const ControllerWeights w(ControllerShape{4, 5, 2}, 2e4);
  EXPECT_THROW(controller_forward(w, Eigen::VectorXd::Zero(8)), ConfigError);
}

TEST(Controller, VjpMatchesCentralDifferences) {
  const ControllerWeights w = xavier_init(ControllerShape{4, 3, 2}, 2.0, 5);
  const Eigen::VectorXd u = Eigen::VectorXd::Random(7);
  const Eigen::VectorXd adj = Eigen::VectorXd::Random(2);
  ControllerTape tape;
  controller_forward(w, u, &tape);
  Eigen::VectorXd adj_p = Eigen::VectorXd::Zero(w.params.size());
  const Eigen::VectorXd adj_u = controller_vjp(w, tape, adj, adj_p);
  const double h = 1e-6;
  for (long i = 0; i < w.params.size(); ++i) {
    ControllerWeights p = w, m = w;
    p.params[i] += h;
    m.params[i] -= h;
    const double fd = adj.dot(controller_forward(p, u) - controller_forward(m, u)) / (2 * h);
    EXPECT_NEAR(adj_p[i], fd, 1e-7) << i;
  }
  for (long i = 0; i < u.size(); ++i) {
    Eigen::VectorXd up = u, um = u;
    up[i] += h;
    um[i] -= h;
    EXPECT_NEAR(adj_u[i], adj.dot(controller_forward(w, up) - controller_forward(w, um)) / (2 * h), 1e-7);
  }
}

TEST(Xavier, BiasesZeroAndDeterministic) {
  const ControllerShape s{56, 33, 4};
  const auto a = xavier_init(s, 2e4, 42);
  const auto b = xavier_init(s, 2e4, 42);
  EXPECT_EQ(a.params, b.params);
  EXPECT_EQ(a.b1(), Eigen::VectorXd::Zero(s.n_hidden()));
  EXPECT_EQ(a.b2(), Eigen::VectorXd::Zero(s.n_act));
  EXPECT_NE(a.params, xavier_init(s, 2e4, 43).params);
  EXPECT_EQ(a.c_act, 2e4);
}

TEST(Xavier, SpreadMatchesFanInAndOut) {
  const ControllerShape s{200, 100, 4};
  const auto w = xavier_init(s, 1.0, 3);
  const auto w1 = w.w1();
  const double n = static_cast<double>(w1.size());
  const double mean = w1.sum() / n;
  const double sd = std::sqrt(w1.array().square().sum() / n - mean * mean);
  const double expect = std::sqrt(2.0 / (s.n_hidden() + s.n_input()));
  EXPECT_NEAR(sd / expect, 1.0, 0.05);
}
