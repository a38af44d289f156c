#pragma once

// Body metrics, posture tracking, episode loss, binarization constraints and
// the augmented Lagrangian, each with its hand-written backward pass.

#include <vector>

#include "codesign/common.hpp"

namespace codesign {

// Inertia regularization: added to the diagonal in 3D, a lower clamp in 2D.
inline constexpr double kInertiaFloor = 1e-12;

// x_cen = sum gamma_i x_i / sum gamma_i (also used for velocities).
template <int Dim>
Vec<Dim> centroid(const std::vector<Vec<Dim>>& x, const Eigen::VectorXd& gamma);

template <int Dim>
void centroid_vjp(const std::vector<Vec<Dim>>& x, const Eigen::VectorXd& gamma, const Vec<Dim>& adj_c,
                  std::vector<Vec<Dim>>& adj_x, Eigen::VectorXd& adj_gamma);

// omega = J^-1 sum m_i (x_i - x_cen) x (v_i - v_cen), J about the centroid.
template <int Dim>
RotVec<Dim> angular_velocity(const std::vector<Vec<Dim>>& x, const std::vector<Vec<Dim>>& v,
                             const Eigen::VectorXd& gamma, const std::vector<double>& mass);

template <int Dim>
void angular_velocity_vjp(const std::vector<Vec<Dim>>& x, const std::vector<Vec<Dim>>& v,
                          const Eigen::VectorXd& gamma, const std::vector<double>& mass,
                          const RotVec<Dim>& adj_omega, std::vector<Vec<Dim>>& adj_x, std::vector<Vec<Dim>>& adj_v,
                          Eigen::VectorXd& adj_gamma, std::vector<double>& adj_mass);

template <int Dim>
struct BodyMetrics {
  Vec<Dim> centroid;
  Vec<Dim> velocity;
  RotVec<Dim> omega;
};

template <int Dim>
BodyMetrics<Dim> body_metrics(const std::vector<Vec<Dim>>& x, const std::vector<Vec<Dim>>& v,
                              const Eigen::VectorXd& gamma, const std::vector<double>& mass);

// Angle in 2D, unit quaternion (q0, q1, q2, q3) in 3D.
struct PostureState {
  double theta = 0.0;
  Eigen::Vector4d q = Eigen::Vector4d(1.0, 0.0, 0.0, 0.0);
};

// 2D: theta += omega dt. 3D: q <- normalize(q + dt/2 (0, omega) * q).
template <int Dim>
PostureState integrate_posture(const PostureState& s, const RotVec<Dim>& omega, double dt);

// Accumulates the adjoints of the previous state and omega from adj_next.
template <int Dim>
void integrate_posture_vjp(const PostureState& s, const RotVec<Dim>& omega, double dt, const PostureState& adj_next,
                           PostureState& adj_prev, RotVec<Dim>& adj_omega);

// 2 atan2(|q_v|, q0) q_v / |q_v|, zero at the identity.
Eigen::Vector3d rotation_vector(const Eigen::Vector4d& q);

// |theta|^2: theta^2 in 2D, the squared rotation-vector norm in 3D.
template <int Dim>
double posture_angle_sq(const PostureState& s);

// Accumulates d(|theta|^2)/d(state) * scale into adj.
template <int Dim>
void posture_angle_sq_vjp(const PostureState& s, double scale, PostureState& adj);

struct ObjectiveConfig {
  double target = 0.7;       // L, m
  double duration = 1.0;     // T, s
  double w_theta = 1.0;
  double theta_bar = 3.14159265358979323846 / 2.0;
  double alpha = 0.01;
};

struct LossTerms {
  double travel = 0.0;         // net x displacement of the centroid, m
  double travel_term = 0.0;    // max(1 - d/L, 0)^2
  double posture_term = 0.0;   // (w_theta/T) int |theta/theta_bar|^2 dt
  double F = 0.0;
};

// `posture_integral` is int |theta|^2 dt (not yet divided by theta_bar^2).
LossTerms episode_loss(double travel, double posture_integral, const ObjectiveConfig& cfg);

struct LossSlopes {
  double travel = 0.0;
  double posture_integral = 0.0;
};
LossSlopes episode_loss_vjp(double travel, double posture_integral, const ObjectiveConfig& cfg);

struct Constraints {
  double topology = 0.0;  // C_to
  double layout = 0.0;    // C_lay
};

// `n_act` counts the active channels; xi carries n_act + 1 columns.
Constraints binarization_constraints(const Eigen::VectorXd& gamma, const RowMatrix& xi, int n_act);
void binarization_constraints_vjp(const Eigen::VectorXd& gamma, const RowMatrix& xi, int n_act, double adj_to,
                                  double adj_lay, Eigen::VectorXd& adj_gamma, RowMatrix& adj_xi);

struct Multipliers {
  double kappa_to = 0.0;
  double kappa_lay = 0.0;
  double tau_to = 1e-3;
  double tau_lay = 1e-3;
};

struct ConstraintBounds {
  double topology = 0.05;
  double layout = 0.05;
};

double augmented_lagrangian(double mean_loss, double weight_sq_norm, double alpha, const Constraints& c,
                            const ConstraintBounds& bounds, const Multipliers& m);

// dL/dC for one constraint: -kappa [C > C_bar] + tau max(C - C_bar, 0).
double penalty_slope(double value, double bound, double kappa, double tau);

}  // namespace codesign
