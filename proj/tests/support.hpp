#pragma once

// Small scenarios shared by the unit tests and the acceptance binary.

#include <cmath>
#include <numbers>
#include <random>

#include "codesign/config.hpp"

namespace codesign::fixtures {

inline constexpr double kLambda = 142857.14285714287;  // E = 0.1 MPa, nu = 0.4
inline constexpr double kMu = 35714.285714285717;

// 2D, 4 x 4 particles, 50 steps of 2e-4 s, two actuators, W = 0.1 m.
inline Scenario<2> tiny_scenario(long checkpoint_every = 10) {
  Scenario<2> sc;
  sc.layout.dx = 0.025;
  sc.layout.cells = IVec<2>(16, 16);
  sc.sim.dt = 2e-4;
  sc.sim.duration = 50 * 2e-4;
  const double ps = 0.0125;
  sc.rest = block_positions<2>(Vec<2>(0.05, 0.1), Vec<2>(0.05, 0.05), ps);
  sc.design.base.lambda = kLambda;
  sc.design.base.mu = kMu;
  sc.design.volume = ps * ps;
  sc.filter = DesignFilter(sc.rest, 1.5 * ps, 2.0);
  sc.sensor.n_ff = 4;
  sc.sensor.window = 0.1;
  sc.sensor.c_fb = 50.0;
  sc.feedback = make_feedback_layout(sc.sensor, sc.layout.dx, 2);
  sc.n_act = 2;
  sc.checkpoint_every = checkpoint_every;
  sc.objective.target = 0.05;
  sc.objective.duration = sc.sim.duration;
  return sc;
}

// Same in 3D with a 5-group sensing disk and a heavier posture weight.
inline Scenario<3> tiny_scenario_3d(long checkpoint_every = 10) {
  Scenario<3> sc;
  sc.layout.dx = 0.025;
  sc.layout.cells = IVec<3>(16, 16, 16);
  sc.sim.dt = 2e-4;
  sc.sim.duration = 50 * 2e-4;
  const double ps = 0.0125;
  sc.rest = block_positions<3>(Vec<3>(0.05, 0.1, 0.175), Vec<3>(0.05, 0.05, 0.05), ps);
  sc.design.base.lambda = kLambda;
  sc.design.base.mu = kMu;
  sc.design.volume = ps * ps * ps;
  sc.filter = DesignFilter(sc.rest, 1.5 * ps, 2.0);
  sc.sensor.n_ff = 4;
  sc.sensor.window = 0.2;
  sc.sensor.c_fb = 50.0;
  sc.feedback = make_feedback_layout(sc.sensor, sc.layout.dx, 3);
  sc.n_act = 2;
  sc.checkpoint_every = checkpoint_every;
  sc.objective.target = 0.05;
  sc.objective.duration = sc.sim.duration;
  sc.objective.w_theta = 5.0;
  return sc;
}

template <int Dim>
TerrainSample tiny_terrain(const Scenario<Dim>& sc, std::uint64_t seed = 7) {
  TerrainHyper hy;
  hy.inlet_extent = 0.2;
  hy.inlet_height = 0.1;
  const Lattice lat = Lattice::from_grid(sc.layout);
  return make_terrain(GpSampler(lat, 0.2), lat, hy, Dim, seed);
}

// phi, psi ~ N(0, 0.5) and Xavier controller weights.
template <int Dim>
DesignVariables random_variables(const Scenario<Dim>& sc, std::uint64_t seed = 3) {
  DesignVariables v;
  const long n = sc.particle_count();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 0.5);
  v.phi.resize(n);
  for (auto& e : v.phi) e = nd(rng);
  v.psi.resize(n, sc.n_act + 1);
  for (long i = 0; i < v.psi.size(); ++i) v.psi.data()[i] = nd(rng);
  v.controller = xavier_init(sc.controller_shape(), 2e4, 11);
  return v;
}

// Reduced 2D walker: 1 m domain at 0.025 m, 0.2 m body, T = 0.4 s, dt = 2e-4 s,
// 8 training terrains in batches of 4, 4 actuators, at most 200 iterations.
inline RunConfig reduced_walker(double window) {
  RunConfig c = default_config(2);
  c.grid_spacing = 0.025;
  c.particle_spacing = 0.0125;
  c.design.filter_radius = 1.5 * c.particle_spacing;
  c.sim.dt = 2e-4;
  c.sim.duration = 0.4;
  c.objective.target = 0.28;  // 0.7 m/s over 0.4 s
  c.controller.window = window;
  c.terrain.n_train = 8;
  c.terrain.n_test = 8;
  c.trainer.batch_size = 4;
  c.trainer.max_iterations = 200;
  c.seed = 2024;
  return c;
}

// |theta| after integrating a constant omega = (0, 0, pi) for 0.5 s at dt = 1e-4,
// and the largest quaternion norm drift seen along the way.
struct SpinResult {
  double angle = 0.0;
  double max_drift = 0.0;
};
inline SpinResult constant_spin_3d() {
  PostureState s;
  SpinResult r;
  const RotVec<3> omega(0.0, 0.0, std::numbers::pi);
  for (int k = 0; k < 5000; ++k) {
    s = integrate_posture<3>(s, omega, 1e-4);
    r.max_drift = std::max(r.max_drift, std::abs(s.q.norm() - 1.0));
  }
  r.angle = rotation_vector(s.q).norm();
  return r;
}

// Relative error of omega recovered from a 4-particle square spinning rigidly
// at 2.5 rad/s about its centroid while translating.
inline double rigid_rotation_error_2d() {
  const double spin = 2.5;
  const std::vector<Vec<2>> x{Vec<2>(0.1, 0.1), Vec<2>(0.2, 0.1), Vec<2>(0.2, 0.2), Vec<2>(0.1, 0.2)};
  const Vec<2> c(0.15, 0.15), drift(0.3, -0.1);
  std::vector<Vec<2>> v;
  for (const auto& p : x) v.push_back(drift + spin * Vec<2>(-(p - c)[1], (p - c)[0]));
  const Eigen::VectorXd gamma = Eigen::VectorXd::Ones(4);
  const std::vector<double> mass(4, 0.01);
  return std::abs(angular_velocity<2>(x, v, gamma, mass)[0] - spin) / spin;
}

// Free fall of a solid 0.05 m block whose bottom starts 0.05 m above flat
// ground: simulated and analytic centroid drop after 0.07 s, before the
// stencil reaches the ground nodes.
struct FreeFall {
  double simulated = 0.0;
  double analytic = 0.0;
  double rel_err() const { return std::abs(simulated - analytic) / analytic; }
};
inline FreeFall free_fall() {
  RunConfig c = default_config(2);
  c.body_origin = {0.05, 0.15};
  c.body_size = {0.05, 0.05};
  c.sim.duration = 0.07;
  c.terrain.height_scale = 0.0;
  c.controller.c_fb = 50.0;
  const Scenario<2> sc = make_scenario<2>(c);
  DesignVariables v;
  v.phi = Eigen::VectorXd::Constant(sc.particle_count(), 20.0);
  v.psi = RowMatrix::Zero(sc.particle_count(), sc.n_act + 1);
  v.controller = ControllerWeights(sc.controller_shape(), 0.0);
  const auto design = materialize(v, sc.filter, sc.design);
  const Lattice lat = terrain_lattice(c);
  const TerrainSample flat = make_terrain(GpSampler(lat, c.terrain.length_scale), lat, terrain_hyper(c), 2, 1);
  const auto tr = rollout<2>(sc, design, v.controller, flat);
  FreeFall f;
  f.simulated = tr.centroid.front()[1] - tr.centroid.back()[1];
  f.analytic = 0.5 * 9.8 * c.sim.duration * c.sim.duration;
  return f;
}

// Relative drift of total particle momentum over 100 explicit steps of a
// deformed, moving elastic block with g = 0, eta = 0, a = 0 and no boundary.
inline double momentum_drift_100_steps() {
  GridLayout<2> l;
  l.dx = 0.025;
  l.cells = IVec<2>(40, 40);
  const auto x = block_positions<2>(Vec<2>(0.4, 0.4), Vec<2>(0.2, 0.2), 0.0125);
  ParticleState<2> s(x.size());
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (std::size_t p = 0; p < x.size(); ++p) {
    s.x[p] = x[p];
    s.v[p] = Vec<2>(0.2 + 0.05 * u(rng), 0.05 * u(rng));
    s.F[p] = Mat<2>::Identity() + 0.02 * Mat<2>{{u(rng), u(rng)}, {u(rng), u(rng)}};
  }
  MaterialBase base;
  base.lambda = kLambda;
  base.mu = kMu;
  base.eta = 0.0;
  const ParticleMaterial mat = interpolate_material(Eigen::VectorXd::Ones(x.size()), base, 0.0125 * 0.0125);
  const std::vector<double> a(x.size(), 0.0);
  SimConfig<2> cfg;
  cfg.gravity.setZero();
  const BoundaryField<2> none(l);
  GridField<2> g(l);
  auto momentum = [&] {
    Vec<2> p = Vec<2>::Zero();
    for (std::size_t i = 0; i < s.size(); ++i) p += mat.mass[i] * s.v[i];
    return p;
  };
  const Vec<2> p0 = momentum();
  for (long k = 0; k < 100; ++k) {
    p2g<2>(s, mat, a, g, cfg, k);
    grid_update<2>(g, cfg, none);
    g2p<2>(g, s, s, cfg, k);
  }
  return (momentum() - p0).norm() / p0.norm();
}

// Worst relative mismatch between particle and grid mass over random sets.
inline double mass_transfer_error() {
  GridLayout<2> l;
  l.dx = 0.0125;
  l.cells = IVec<2>(32, 32);
  GridField<2> g(l);
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> pos(0.05, 0.35), rho(1e-2, 2000.0);
    const std::size_t n = 500;
    ParticleState<2> s(n);
    ParticleMaterial m;
    m.volume = 3.9e-5;
    double total = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      s.x[p] = Vec<2>(pos(rng), pos(rng));
      s.F[p].setIdentity();
      m.rho.push_back(rho(rng));
      m.mass.push_back(m.rho.back() * m.volume);
      m.lambda.push_back(kLambda);
      m.mu.push_back(kMu);
      m.eta.push_back(100.0);
      total += m.mass.back();
    }
    p2g<2>(s, m, std::vector<double>(n, 0.0), g, SimConfig<2>{});
    worst = std::max(worst, std::abs(g.total_mass() - total) / total);
  }
  return worst;
}

}  // namespace codesign::fixtures
