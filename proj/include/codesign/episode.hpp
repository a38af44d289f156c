#pragma once

// One locomotion episode: a materialized design driven by its controller over
// one terrain, stepped with the MPM kernels.

#include <vector>

#include "codesign/controller.hpp"
#include "codesign/design_field.hpp"
#include "codesign/mpm_engine.hpp"
#include "codesign/objective.hpp"
#include "codesign/terrain.hpp"

namespace codesign {

// Particles at cell centers of a regular lattice with the given spacing
// filling the box [origin, origin + size).
template <int Dim>
std::vector<Vec<Dim>> block_positions(const Vec<Dim>& origin, const Vec<Dim>& size, double spacing);

template <int Dim>
struct Scenario {
  GridLayout<Dim> layout;
  SimConfig<Dim> sim;
  std::vector<Vec<Dim>> rest;  // initial particle positions
  DesignParams design;
  DesignFilter filter;
  SensorConfig sensor;  // y_offset is recalibrated per episode
  FeedbackLayout feedback;
  ObjectiveConfig objective;
  int n_act = 4;
  long checkpoint_every = 50;
  int wall_band = 2;

  long particle_count() const { return static_cast<long>(rest.size()); }
  ControllerShape controller_shape() const { return {sensor.n_ff, feedback.size(), n_act}; }
};

template <int Dim>
struct StepState {
  ParticleState<Dim> particles;
  PostureState posture;
  double posture_integral = 0.0;  // int |theta|^2 dt so far
};

template <int Dim>
struct StepTape {
  Vec<Dim> centroid = Vec<Dim>::Zero();
  RotVec<Dim> omega = RotVec<Dim>::Zero();
  Eigen::VectorXd feedback;
  ControllerTape controller;
  Eigen::VectorXd signal;  // a_bar, one entry per active channel
  std::vector<double> actuation;
};

template <int Dim>
class Episode {
 public:
  Episode(const Scenario<Dim>& scenario, const MaterializedDesign& design, const ControllerWeights& controller,
          const TerrainSample& terrain);

  StepState<Dim> initial_state() const;

  // Advances state k to k + 1 (`out` must not alias `in`). The grid keeps the
  // updated velocities of this step until the next call.
  void step(long k, const StepState<Dim>& in, StepState<Dim>& out, StepTape<Dim>& tape) {
    step(k, in, out, tape, grid_);
  }
  // Same, with the transfer performed on a caller-owned grid.
  void step(long k, const StepState<Dim>& in, StepState<Dim>& out, StepTape<Dim>& tape, GridField<Dim>& grid) const;

  LossTerms finish(const StepState<Dim>& final_state) const;

  const Scenario<Dim>& scenario() const { return sc_; }
  const MaterializedDesign& design() const { return design_; }
  const ControllerWeights& controller() const { return ctrl_; }
  const Ground<Dim>& ground() const { return ground_; }
  const GridField<Dim>& grid() const { return grid_; }
  const Vec<Dim>& initial_centroid() const { return centroid0_; }
  double y_offset() const { return y_offset_; }
  double time(long k) const { return static_cast<double>(k) * sc_.sim.dt; }

 private:
  const Scenario<Dim>& sc_;
  const MaterializedDesign& design_;
  const ControllerWeights& ctrl_;
  Ground<Dim> ground_;
  GridField<Dim> grid_;
  Vec<Dim> centroid0_;
  double y_offset_ = 0.0;
};

struct RolloutOptions {
  long snapshot_every = 0;  // 0 disables particle snapshots
  bool record_signals = false;
};

template <int Dim>
struct Snapshot {
  long step = 0;
  double time = 0.0;
  std::vector<Vec<Dim>> x;
  std::vector<double> actuation;
};

template <int Dim>
struct Trajectory {
  LossTerms loss;
  long steps = 0;
  double y_offset = 0.0;
  std::vector<Vec<Dim>> centroid;   // per step, including the final state
  std::vector<double> angle_sq;     // |theta|^2 per step
  std::vector<Eigen::VectorXd> signals;  // a_bar per step when recorded
  std::vector<Snapshot<Dim>> snapshots;
  StepState<Dim> final_state;
};

template <int Dim>
Trajectory<Dim> rollout(const Scenario<Dim>& scenario, const MaterializedDesign& design,
                        const ControllerWeights& controller, const TerrainSample& terrain,
                        const RolloutOptions& options = {});

}  // namespace codesign
