#include "codesign/gradient.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace codesign {

DesignGradient DesignGradient::zeros_like(const DesignVariables& v) {
  return {Eigen::VectorXd::Zero(v.phi.size()), RowMatrix::Zero(v.psi.rows(), v.psi.cols()),
          Eigen::VectorXd::Zero(v.controller.params.size())};
}

DesignGradient& DesignGradient::operator+=(const DesignGradient& o) {
  phi += o.phi;
  psi += o.psi;
  controller += o.controller;
  return *this;
}

DesignGradient& DesignGradient::operator*=(double s) {
  phi *= s;
  psi *= s;
  controller *= s;
  return *this;
}

void require_finite(const DesignGradient& g) {
  if (!g.phi.allFinite()) throw GradientError("non-finite gradient in block phi", "phi");
  if (!g.psi.allFinite()) throw GradientError("non-finite gradient in block psi", "psi");
  if (!g.controller.allFinite()) throw GradientError("non-finite gradient in block controller", "controller");
}

template <int Dim>
EpisodeGradient episode_gradient(const Scenario<Dim>& sc, const DesignVariables& vars,
                                 const MaterializedDesign& design, const TerrainSample& terrain) {
  Episode<Dim> ep(sc, design, vars.controller, terrain);
  const long n = sc.sim.steps();
  const long K = sc.checkpoint_every;
  if (K < 1 || n % K != 0)
    throw ConfigError("checkpoint interval " + std::to_string(K) + " does not divide " + std::to_string(n) +
                      " steps");
  const long n_seg = n / K;
  const double dt = sc.sim.dt;
  const std::size_t np = sc.rest.size();
  const int n_ff = sc.sensor.n_ff;
  const int n_fb = sc.feedback.size();

  // Forward sweep storing segment starts.
  std::vector<StepState<Dim>> ckpt(n_seg);
  StepState<Dim> a = ep.initial_state(), b = a;
  StepTape<Dim> tape;
  for (long k = 0; k < n; ++k) {
    if (k % K == 0) ckpt[k / K] = a;
    ep.step(k, a, b, tape);
    std::swap(a, b);
  }
  EpisodeGradient out;
  out.loss = ep.finish(a);
  const LossSlopes slopes = episode_loss_vjp(out.loss.travel, a.posture_integral, sc.objective);

  ParticleState<Dim> adj_next(np), adj_prev(np);
  GridAdjoint<Dim> adj_grid(sc.layout);
  MaterialAdjoint adj_mat(np);
  Eigen::VectorXd adj_gamma = Eigen::VectorXd::Zero(np);
  Eigen::VectorXd adj_att = Eigen::VectorXd::Zero(np);
  RowMatrix adj_xi = RowMatrix::Zero(design.xi.rows(), design.xi.cols());
  Eigen::VectorXd adj_params = Eigen::VectorXd::Zero(vars.controller.params.size());
  Eigen::VectorXd adj_signal(sc.n_act);
  PostureState adj_post;
  adj_post.q.setZero();
  double adj_yoff = 0.0;
  Vec<Dim> adj_c0 = Vec<Dim>::Zero();

  // Travel d = x_cen(T).e_x - x_cen(0).e_x.
  const Vec<Dim> adj_travel = slopes.travel * Vec<Dim>::Unit(0);
  centroid_vjp<Dim>(a.particles.x, design.gamma, adj_travel, adj_next.x, adj_gamma);
  adj_c0 -= adj_travel;
  const double adj_pi = slopes.posture_integral;

  // Segment recomputation keeps each step's grid and tape when that fits in a
  // modest budget; otherwise every step is recomputed once more below.
  std::vector<StepState<Dim>> seg(K + 1);
  const bool keep = static_cast<double>(sc.layout.node_count()) * static_cast<double>(K) <= 2e7;
  std::vector<GridField<Dim>> seg_grid(keep ? K : 1, GridField<Dim>(sc.layout));
  std::vector<StepTape<Dim>> seg_tape(keep ? K : 1);
  StepState<Dim> scratch;
  for (long s = n_seg - 1; s >= 0; --s) {
    seg[0] = ckpt[s];
    for (long j = 0; j < K; ++j)
      ep.step(s * K + j, seg[j], seg[j + 1], seg_tape[keep ? j : 0], seg_grid[keep ? j : 0]);
    for (long j = K - 1; j >= 0; --j) {
      const long k = s * K + j;
      const StepState<Dim>& in = seg[j];
      if (!keep) ep.step(k, in, scratch, seg_tape[0], seg_grid[0]);
      const GridField<Dim>& grid = seg_grid[keep ? j : 0];
      const StepTape<Dim>& tape = seg_tape[keep ? j : 0];

      g2p_vjp<Dim>(grid, in.particles, seg[j + 1].particles, adj_next, sc.sim, adj_prev, adj_grid);
      grid_update_vjp<Dim>(grid, ep.ground().boundary, adj_grid);
      p2g_vjp<Dim>(in.particles, design.material, tape.actuation, grid, adj_grid, sc.sim, adj_prev, adj_mat);
      adj_grid.clear(grid);

      adj_signal.setZero();
      particle_actuation_vjp(design.att, design.xi, tape.signal, adj_mat.actuation, adj_att, adj_xi, adj_signal);
      const Eigen::VectorXd adj_u = controller_vjp(vars.controller, tape.controller, adj_signal, adj_params);

      Vec<Dim> adj_c = Vec<Dim>::Zero();
      for (int l = 0; l < n_fb; ++l) {
        const double u = tape.feedback[l];
        const double g = adj_u[n_ff + l] * sc.sensor.c_fb * (1.0 - u * u);
        adj_c[kVertical] += g;
        adj_yoff -= g;
      }

      PostureState adj_post_prev;
      adj_post_prev.q.setZero();
      RotVec<Dim> adj_omega = RotVec<Dim>::Zero();
      integrate_posture_vjp<Dim>(in.posture, tape.omega, dt, adj_post, adj_post_prev, adj_omega);
      posture_angle_sq_vjp<Dim>(in.posture, adj_pi * dt, adj_post_prev);
      adj_post = adj_post_prev;

      angular_velocity_vjp<Dim>(in.particles.x, in.particles.v, design.gamma, design.material.mass, adj_omega,
                                adj_prev.x, adj_prev.v, adj_gamma, adj_mat.mass);
      centroid_vjp<Dim>(in.particles.x, design.gamma, adj_c, adj_prev.x, adj_gamma);
      std::swap(adj_next, adj_prev);
    }
  }

  // y_offset = x_cen(0).e_y - hbar, with x_cen(0) over the rest positions.
  adj_c0[kVertical] += adj_yoff;
  std::vector<Vec<Dim>> adj_rest(np, Vec<Dim>::Zero());
  centroid_vjp<Dim>(sc.rest, design.gamma, adj_c0, adj_rest, adj_gamma);

  material_to_gamma(design, sc.design, adj_mat, adj_att, adj_gamma);
  out.grad = DesignGradient::zeros_like(vars);
  materialize_vjp(design, sc.filter, sc.design, {adj_gamma, adj_xi}, out.grad.phi, out.grad.psi);
  out.grad.controller = adj_params;
  require_finite(out.grad);
  return out;
}

template <int Dim>
double episode_objective(const Scenario<Dim>& sc, const DesignVariables& vars, const TerrainSample& terrain) {
  const MaterializedDesign design = materialize(vars, sc.filter, sc.design);
  return rollout<Dim>(sc, design, vars.controller, terrain).loss.F;
}

double relative_error(double adjoint, double fd, double floor) {
  return std::abs(adjoint - fd) / std::max({std::abs(adjoint), std::abs(fd), floor});
}

double FdReport::max_rel_err() const {
  double m = 0.0;
  for (const auto& r : rows) m = std::max(m, r.rel_err);
  return m;
}

double FdReport::max_rel_err(const std::string& block) const {
  double m = 0.0;
  for (const auto& r : rows)
    if (r.block == block) m = std::max(m, r.rel_err);
  return m;
}

double FdReport::median_rel_err(const std::string& block) const {
  std::vector<double> e;
  for (const auto& r : rows)
    if (r.block == block) e.push_back(r.rel_err);
  if (e.empty()) return 0.0;
  std::sort(e.begin(), e.end());
  const std::size_t m = e.size() / 2;
  return e.size() % 2 ? e[m] : 0.5 * (e[m - 1] + e[m]);
}

template <int Dim>
FdReport finite_diff_check(const Scenario<Dim>& sc, const DesignVariables& vars, const TerrainSample& terrain,
                           int n_probes, double h, std::uint64_t seed) {
  if (n_probes < 1) throw ConfigError("finite difference check needs at least one probe");
  if (!(h > 0.0)) throw ConfigError("finite difference step must be positive");
  const EpisodeGradient base = backward_rollout<Dim>(sc, vars, terrain);
  std::mt19937_64 rng(seed);
  FdReport report;
  const char* blocks[3] = {"phi", "psi", "controller"};
  for (int p = 0; p < n_probes; ++p) {
    const int b = p % 3;
    long size = b == 0 ? vars.phi.size() : b == 1 ? vars.psi.size() : vars.controller.params.size();
    std::uniform_int_distribution<long> pick(0, size - 1);
    const long idx = pick(rng);
    auto entry = [&](DesignVariables& v) -> double& {
      if (b == 0) return v.phi[idx];
      if (b == 1) return v.psi.data()[idx];
      return v.controller.params[idx];
    };
    const double adjoint =
        b == 0 ? base.grad.phi[idx] : b == 1 ? base.grad.psi.data()[idx] : base.grad.controller[idx];
    DesignVariables plus = vars, minus = vars;
    entry(plus) += h;
    entry(minus) -= h;
    const double fd = (episode_objective<Dim>(sc, plus, terrain) - episode_objective<Dim>(sc, minus, terrain)) /
                      (2.0 * h);
    report.rows.push_back({blocks[b], idx, adjoint, fd, relative_error(adjoint, fd)});
  }
  return report;
}

#define CODESIGN_GRADIENT(D)                                                                                    \
  template EpisodeGradient episode_gradient<D>(const Scenario<D>&, const DesignVariables&,                      \
                                               const MaterializedDesign&, const TerrainSample&);                \
  template double episode_objective<D>(const Scenario<D>&, const DesignVariables&, const TerrainSample&);       \
  template FdReport finite_diff_check<D>(const Scenario<D>&, const DesignVariables&, const TerrainSample&, int, \
                                         double, std::uint64_t);

CODESIGN_GRADIENT(2)
CODESIGN_GRADIENT(3)

}  // namespace codesign
