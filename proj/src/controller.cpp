#include "codesign/controller.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace codesign {

double feedforward_frequency(int l, const SensorConfig& cfg) {
  const int half = (cfg.n_ff + 1) / 2;
  if (half <= 1) return cfg.omega_min;
  return (cfg.omega_max - cfg.omega_min) * static_cast<double>(l - 1) / static_cast<double>(half - 1) +
         cfg.omega_min;
}

Eigen::VectorXd feedforward_signals(double t, const SensorConfig& cfg) {
  Eigen::VectorXd u(cfg.n_ff);
  const int half = cfg.n_ff / 2;
  for (int l = 1; l <= cfg.n_ff; ++l) {
    u[l - 1] = l <= half ? std::sin(feedforward_frequency(l, cfg) * t)
                         : std::cos(feedforward_frequency(l - half, cfg) * t);
  }
  return u;
}

FeedbackLayout make_feedback_layout(const SensorConfig& cfg, double dx, int dim) {
  FeedbackLayout layout;
  if (cfg.window <= 0.0) return layout;
  const double r = cfg.window / (2.0 * dx);
  const int reach = static_cast<int>(std::floor(r + 1e-9));
  const double r2 = r * r + 1e-9;
  if (dim == 2) {
    for (int d = -reach; d <= reach; ++d) layout.groups.push_back({d, 0, {{d, 0}}});
    return layout;
  }
  auto inside = [&](int a, int b) { return static_cast<double>(a * a + b * b) <= r2; };
  const int s = std::max(cfg.stride, 1);
  const int half_patch = cfg.patch / 2;
  for (int a = -(reach / s) * s; a <= reach; a += s) {
    for (int b = -(reach / s) * s; b <= reach; b += s) {
      if (!inside(a, b)) continue;
      FeedbackLayout::Group g{a, b, {}};
      for (int p = -half_patch; p <= half_patch; ++p)
        for (int q = -half_patch; q <= half_patch; ++q)
          if (inside(a + p, b + q)) g.members.emplace_back(a + p, b + q);
      layout.groups.push_back(std::move(g));
    }
  }
  return layout;
}

template <int Dim>
Eigen::VectorXd window_heights(const Vec<Dim>& centroid, const SurfaceGrid& surface, const FeedbackLayout& layout) {
  const Lattice& lat = surface.lattice;
  const long ic = std::lround(centroid[0] / lat.dx);
  const long kc = Dim == 3 ? std::lround(centroid[Dim - 1] / lat.dz) : 0;
  Eigen::VectorXd h(layout.size());
  for (int g = 0; g < layout.size(); ++g) {
    double sum = 0.0;
    for (auto [di, dk] : layout.groups[g].members) {
      const long ix = std::clamp(ic + di, 0L, lat.nx - 1);
      const long iz = std::clamp(kc + dk, 0L, lat.nz - 1);
      sum += surface.at(ix, iz);
    }
    h[g] = sum / static_cast<double>(layout.groups[g].members.size());
  }
  return h;
}

template Eigen::VectorXd window_heights<2>(const Vec<2>&, const SurfaceGrid&, const FeedbackLayout&);
template Eigen::VectorXd window_heights<3>(const Vec<3>&, const SurfaceGrid&, const FeedbackLayout&);

Eigen::VectorXd feedback_signals(double centroid_y, const Eigen::VectorXd& heights, double c_fb, double y_offset) {
  Eigen::VectorXd u(heights.size());
  for (long l = 0; l < heights.size(); ++l) u[l] = std::tanh(c_fb * (centroid_y - heights[l] - y_offset));
  return u;
}

Eigen::VectorXd controller_forward(const ControllerWeights& w, const Eigen::VectorXd& input, ControllerTape* tape) {
  if (input.size() != w.shape.n_input())
    throw ConfigError("controller input has length " + std::to_string(input.size()) + ", expected " +
                      std::to_string(w.shape.n_input()));
  Eigen::VectorXd hidden = (w.w1() * input + w.b1()).array().tanh().matrix();
  Eigen::VectorXd out = (w.w2() * hidden + w.b2()).array().tanh().matrix();
  Eigen::VectorXd signal = w.c_act * out;
  if (tape) {
    tape->input = input;
    tape->hidden = std::move(hidden);
    tape->output = std::move(out);
  }
  return signal;
}

Eigen::VectorXd controller_vjp(const ControllerWeights& w, const ControllerTape& tape,
                               const Eigen::VectorXd& adj_signal, Eigen::VectorXd& adj_params) {
  const ControllerShape& s = w.shape;
  const Eigen::VectorXd g2 =
      (w.c_act * adj_signal.array() * (1.0 - tape.output.array().square())).matrix();  // d/d(pre-activation 2)
  const Eigen::VectorXd adj_hidden = w.w2().transpose() * g2;
  const Eigen::VectorXd g1 = (adj_hidden.array() * (1.0 - tape.hidden.array().square())).matrix();

  Eigen::Map<RowMatrix>(adj_params.data() + w.w1_offset(), s.n_hidden(), s.n_input()).noalias() +=
      g1 * tape.input.transpose();
  adj_params.segment(w.b1_offset(), s.n_hidden()) += g1;
  Eigen::Map<RowMatrix>(adj_params.data() + w.w2_offset(), s.n_act, s.n_hidden()).noalias() +=
      g2 * tape.hidden.transpose();
  adj_params.segment(w.b2_offset(), s.n_act) += g2;
  return w.w1().transpose() * g1;
}

ControllerWeights xavier_init(const ControllerShape& shape, double c_act, std::uint64_t seed) {
  ControllerWeights w(shape, c_act);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n1(0.0, std::sqrt(2.0 / (shape.n_hidden() + shape.n_input())));
  std::normal_distribution<double> n2(0.0, std::sqrt(2.0 / (shape.n_act + 1 + shape.n_hidden())));
  auto w1 = w.w1();
  for (long r = 0; r < w1.rows(); ++r)
    for (long c = 0; c < w1.cols(); ++c) w1(r, c) = n1(rng);
  auto w2 = w.w2();
  for (long r = 0; r < w2.rows(); ++r)
    for (long c = 0; c < w2.cols(); ++c) w2(r, c) = n2(rng);
  return w;
}

}  // namespace codesign
