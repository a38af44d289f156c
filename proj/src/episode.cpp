#include "codesign/episode.hpp"

#include <cmath>

namespace codesign {

template <int Dim>
std::vector<Vec<Dim>> block_positions(const Vec<Dim>& origin, const Vec<Dim>& size, double spacing) {
  IVec<Dim> count;
  for (int a = 0; a < Dim; ++a) count[a] = static_cast<int>(std::lround(size[a] / spacing));
  std::vector<Vec<Dim>> out;
  IVec<Dim> i = IVec<Dim>::Zero();
  long total = 1;
  for (int a = 0; a < Dim; ++a) total *= count[a];
  out.reserve(total);
  for (long idx = 0; idx < total; ++idx) {
    long r = idx;
    for (int a = Dim - 1; a >= 0; --a) {
      i[a] = static_cast<int>(r % count[a]);
      r /= count[a];
    }
    out.push_back(origin + (i.template cast<double>().array() + 0.5).matrix() * spacing);
  }
  return out;
}

template <int Dim>
Episode<Dim>::Episode(const Scenario<Dim>& scenario, const MaterializedDesign& design,
                      const ControllerWeights& controller, const TerrainSample& terrain)
    : sc_(scenario),
      design_(design),
      ctrl_(controller),
      ground_(rasterize_boundary<Dim>(terrain, scenario.layout, scenario.wall_band)),
      grid_(scenario.layout) {
  if (controller.shape.n_input() != scenario.sensor.n_ff + scenario.feedback.size() ||
      controller.shape.n_act != scenario.n_act)
    throw ConfigError("controller shape does not match the scenario");
  centroid0_ = centroid<Dim>(scenario.rest, design.gamma);
  y_offset_ = centroid0_[kVertical] - terrain.hyper.inlet_height;
}

template <int Dim>
StepState<Dim> Episode<Dim>::initial_state() const {
  StepState<Dim> s;
  const std::size_t n = sc_.rest.size();
  s.particles = ParticleState<Dim>(n);
  s.particles.x = sc_.rest;
  for (auto& F : s.particles.F) F.setIdentity();
  return s;
}

template <int Dim>
void Episode<Dim>::step(long k, const StepState<Dim>& in, StepState<Dim>& out, StepTape<Dim>& tape,
                        GridField<Dim>& grid) const {
  const double dt = sc_.sim.dt;
  const auto& p = in.particles;
  tape.centroid = centroid<Dim>(p.x, design_.gamma);
  tape.omega = angular_velocity<Dim>(p.x, p.v, design_.gamma, design_.material.mass);
  out.posture_integral = in.posture_integral + posture_angle_sq<Dim>(in.posture) * dt;
  out.posture = integrate_posture<Dim>(in.posture, tape.omega, dt);

  const int n_ff = sc_.sensor.n_ff;
  Eigen::VectorXd u(n_ff + sc_.feedback.size());
  u.head(n_ff) = feedforward_signals(time(k), sc_.sensor);
  if (sc_.feedback.size() > 0) {
    tape.feedback = feedback_signals(tape.centroid[kVertical],
                                     window_heights<Dim>(tape.centroid, ground_.surface, sc_.feedback),
                                     sc_.sensor.c_fb, y_offset_);
    u.tail(sc_.feedback.size()) = tape.feedback;
  }
  tape.signal = controller_forward(ctrl_, u, &tape.controller);
  particle_actuation(design_.att, design_.xi, tape.signal, tape.actuation);

  p2g<Dim>(p, design_.material, tape.actuation, grid, sc_.sim, k);
  grid_update<Dim>(grid, sc_.sim, ground_.boundary);
  g2p<Dim>(grid, p, out.particles, sc_.sim, k);
}

template <int Dim>
LossTerms Episode<Dim>::finish(const StepState<Dim>& final_state) const {
  const Vec<Dim> c = centroid<Dim>(final_state.particles.x, design_.gamma);
  return episode_loss(c[0] - centroid0_[0], final_state.posture_integral, sc_.objective);
}

template <int Dim>
Trajectory<Dim> rollout(const Scenario<Dim>& scenario, const MaterializedDesign& design,
                        const ControllerWeights& controller, const TerrainSample& terrain,
                        const RolloutOptions& options) {
  Episode<Dim> ep(scenario, design, controller, terrain);
  const long n = scenario.sim.steps();
  Trajectory<Dim> tr;
  tr.steps = n;
  tr.y_offset = ep.y_offset();
  tr.centroid.reserve(n + 1);
  StepState<Dim> a = ep.initial_state(), b = a;
  StepTape<Dim> tape;
  for (long k = 0; k < n; ++k) {
    ep.step(k, a, b, tape);
    tr.centroid.push_back(tape.centroid);
    tr.angle_sq.push_back(posture_angle_sq<Dim>(a.posture));
    if (options.record_signals) tr.signals.push_back(tape.signal);
    if (options.snapshot_every > 0 && k % options.snapshot_every == 0)
      tr.snapshots.push_back({k, ep.time(k), a.particles.x, tape.actuation});
    std::swap(a, b);
  }
  tr.centroid.push_back(centroid<Dim>(a.particles.x, design.gamma));
  tr.angle_sq.push_back(posture_angle_sq<Dim>(a.posture));
  tr.loss = ep.finish(a);
  tr.final_state = std::move(a);
  return tr;
}

#define CODESIGN_EPISODE(D)                                                                                \
  template std::vector<Vec<D>> block_positions<D>(const Vec<D>&, const Vec<D>&, double);                  \
  template class Episode<D>;                                                                               \
  template Trajectory<D> rollout<D>(const Scenario<D>&, const MaterializedDesign&, const ControllerWeights&, \
                                    const TerrainSample&, const RolloutOptions&);

CODESIGN_EPISODE(2)
CODESIGN_EPISODE(3)

}  // namespace codesign
