#pragma once

// One-hidden-layer tanh controller fed by clock signals and sensed terrain heights.

#include <cstdint>
#include <vector>

#include "codesign/common.hpp"
#include "codesign/terrain.hpp"

namespace codesign {

struct ControllerShape {
  int n_ff = 56;
  int n_fb = 0;
  int n_act = 4;

  int n_input() const { return n_ff + n_fb; }
  int n_hidden() const { return (n_input() + n_act + 1) / 2; }
  long param_count() const {
    const long h = n_hidden();
    return h * n_input() + h + static_cast<long>(n_act) * h + n_act;
  }
};

// All parameters in one flat vector laid out as [w1 | b1 | w2 | b2], with w1
// and w2 row-major.
struct ControllerWeights {
  using MatMap = Eigen::Map<RowMatrix>;
  using ConstMatMap = Eigen::Map<const RowMatrix>;

  ControllerShape shape;
  Eigen::VectorXd params;
  double c_act = 2e4;

  ControllerWeights() = default;
  ControllerWeights(const ControllerShape& s, double scale)
      : shape(s), params(Eigen::VectorXd::Zero(s.param_count())), c_act(scale) {}

  long w1_offset() const { return 0; }
  long b1_offset() const { return static_cast<long>(shape.n_hidden()) * shape.n_input(); }
  long w2_offset() const { return b1_offset() + shape.n_hidden(); }
  long b2_offset() const { return w2_offset() + static_cast<long>(shape.n_act) * shape.n_hidden(); }

  MatMap w1() { return MatMap(params.data() + w1_offset(), shape.n_hidden(), shape.n_input()); }
  ConstMatMap w1() const { return ConstMatMap(params.data() + w1_offset(), shape.n_hidden(), shape.n_input()); }
  Eigen::Map<Eigen::VectorXd> b1() { return {params.data() + b1_offset(), shape.n_hidden()}; }
  Eigen::Map<const Eigen::VectorXd> b1() const { return {params.data() + b1_offset(), shape.n_hidden()}; }
  MatMap w2() { return MatMap(params.data() + w2_offset(), shape.n_act, shape.n_hidden()); }
  ConstMatMap w2() const { return ConstMatMap(params.data() + w2_offset(), shape.n_act, shape.n_hidden()); }
  Eigen::Map<Eigen::VectorXd> b2() { return {params.data() + b2_offset(), shape.n_act}; }
  Eigen::Map<const Eigen::VectorXd> b2() const { return {params.data() + b2_offset(), shape.n_act}; }
};

struct SensorConfig {
  double window = 0.4;     // W, m
  double c_fb = 50.0;      // 1/m
  double y_offset = 0.0;   // m
  int n_ff = 56;
  double omega_min = 4.0 * 3.14159265358979323846;
  double omega_max = 16.0 * 3.14159265358979323846;
  int stride = 3;          // 3D representative spacing in nodes
  int patch = 3;           // 3D averaging patch width in nodes
};

// omega_l for l = 1..ceil(n_ff/2).
double feedforward_frequency(int l, const SensorConfig& cfg);
Eigen::VectorXd feedforward_signals(double t, const SensorConfig& cfg);

// Node offsets (relative to the node nearest the centroid) that make up each
// feedback signal. 2D groups hold one node; 3D groups hold the patch around a
// stride-subsampled representative, restricted to the sensing disk.
struct FeedbackLayout {
  struct Group {
    int di = 0;
    int dk = 0;
    std::vector<std::pair<int, int>> members;
  };
  std::vector<Group> groups;

  int size() const { return static_cast<int>(groups.size()); }
};

FeedbackLayout make_feedback_layout(const SensorConfig& cfg, double dx, int dim);

// Surface heights of each group with edge clamping; independent of the
// centroid height, so only the tanh depends on it.
template <int Dim>
Eigen::VectorXd window_heights(const Vec<Dim>& centroid, const SurfaceGrid& surface, const FeedbackLayout& layout);

// u_l = tanh(c_fb (y_cen - h_l - y_offset)).
Eigen::VectorXd feedback_signals(double centroid_y, const Eigen::VectorXd& heights, double c_fb, double y_offset);

template <int Dim>
Eigen::VectorXd sense_terrain(const Vec<Dim>& centroid, const SurfaceGrid& surface, const FeedbackLayout& layout,
                              const SensorConfig& cfg) {
  return feedback_signals(centroid[kVertical], window_heights<Dim>(centroid, surface, layout), cfg.c_fb,
                          cfg.y_offset);
}

struct ControllerTape {
  Eigen::VectorXd input;
  Eigen::VectorXd hidden;  // tanh(w1 u + b1)
  Eigen::VectorXd output;  // tanh(w2 h + b2), before scaling
};

// a_bar = c_act tanh(w2 tanh(w1 u + b1) + b2).
Eigen::VectorXd controller_forward(const ControllerWeights& w, const Eigen::VectorXd& input,
                                   ControllerTape* tape = nullptr);

// Accumulates dL/dparams into `adj_params` and returns dL/du.
Eigen::VectorXd controller_vjp(const ControllerWeights& w, const ControllerTape& tape,
                               const Eigen::VectorXd& adj_signal, Eigen::VectorXd& adj_params);

ControllerWeights xavier_init(const ControllerShape& shape, double c_act, std::uint64_t seed);

}  // namespace codesign
