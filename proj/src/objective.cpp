#include "codesign/objective.hpp"

#include <algorithm>
#include <cmath>

namespace codesign {

template <int Dim>
Vec<Dim> centroid(const std::vector<Vec<Dim>>& x, const Eigen::VectorXd& gamma) {
  Vec<Dim> s = Vec<Dim>::Zero();
  double g = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    s += gamma[i] * x[i];
    g += gamma[i];
  }
  if (!(g > 0.0)) throw ConfigError("centroid of an empty body");
  return s / g;
}

template <int Dim>
void centroid_vjp(const std::vector<Vec<Dim>>& x, const Eigen::VectorXd& gamma, const Vec<Dim>& adj_c,
                  std::vector<Vec<Dim>>& adj_x, Eigen::VectorXd& adj_gamma) {
  const double g = gamma.sum();
  const Vec<Dim> c = centroid<Dim>(x, gamma);
  const Vec<Dim> a = adj_c / g;
  for (std::size_t i = 0; i < x.size(); ++i) {
    adj_x[i] += gamma[i] * a;
    adj_gamma[i] += a.dot(x[i] - c);
  }
}

namespace {

inline double cross2(const Vec<2>& a, const Vec<2>& b) { return a[0] * b[1] - a[1] * b[0]; }

}  // namespace

template <int Dim>
RotVec<Dim> angular_velocity(const std::vector<Vec<Dim>>& x, const std::vector<Vec<Dim>>& v,
                             const Eigen::VectorXd& gamma, const std::vector<double>& mass) {
  const Vec<Dim> xc = centroid<Dim>(x, gamma);
  const Vec<Dim> vc = centroid<Dim>(v, gamma);
  if constexpr (Dim == 2) {
    double j = 0.0, l = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const Vec<2> r = x[i] - xc;
      j += mass[i] * r.squaredNorm();
      l += mass[i] * cross2(r, v[i] - vc);
    }
    j = std::max(j, kInertiaFloor);  // only a point mass gets here
    return RotVec<2>::Constant(l / j);
  } else {
    Eigen::Matrix3d j = kInertiaFloor * Eigen::Matrix3d::Identity();
    Eigen::Vector3d l = Eigen::Vector3d::Zero();
    for (std::size_t i = 0; i < x.size(); ++i) {
      const Vec<3> r = x[i] - xc;
      j += mass[i] * (r.squaredNorm() * Eigen::Matrix3d::Identity() - r * r.transpose());
      l += mass[i] * r.cross(v[i] - vc);
    }
    return j.ldlt().solve(l);
  }
}

template <int Dim>
void angular_velocity_vjp(const std::vector<Vec<Dim>>& x, const std::vector<Vec<Dim>>& v,
                          const Eigen::VectorXd& gamma, const std::vector<double>& mass,
                          const RotVec<Dim>& adj_omega, std::vector<Vec<Dim>>& adj_x, std::vector<Vec<Dim>>& adj_v,
                          Eigen::VectorXd& adj_gamma, std::vector<double>& adj_mass) {
  const Vec<Dim> xc = centroid<Dim>(x, gamma);
  const Vec<Dim> vc = centroid<Dim>(v, gamma);
  Vec<Dim> adj_xc = Vec<Dim>::Zero(), adj_vc = Vec<Dim>::Zero();
  const std::size_t n = x.size();

  if constexpr (Dim == 2) {
    double j = 0.0, l = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const Vec<2> r = x[i] - xc;
      j += mass[i] * r.squaredNorm();
      l += mass[i] * cross2(r, v[i] - vc);
    }
    j = std::max(j, kInertiaFloor);
    const double omega = l / j;
    const double al = adj_omega[0] / j;
    const double aj = -adj_omega[0] * omega / j;
    for (std::size_t i = 0; i < n; ++i) {
      const Vec<2> r = x[i] - xc, w = v[i] - vc;
      const Vec<2> ar = mass[i] * (al * Vec<2>(w[1], -w[0]) + 2.0 * aj * r);
      const Vec<2> aw = mass[i] * al * Vec<2>(-r[1], r[0]);
      adj_mass[i] += al * cross2(r, w) + aj * r.squaredNorm();
      adj_x[i] += ar;
      adj_xc -= ar;
      adj_v[i] += aw;
      adj_vc -= aw;
    }
  } else {
    Eigen::Matrix3d j = kInertiaFloor * Eigen::Matrix3d::Identity();
    Eigen::Vector3d l = Eigen::Vector3d::Zero();
    for (std::size_t i = 0; i < n; ++i) {
      const Vec<3> r = x[i] - xc;
      j += mass[i] * (r.squaredNorm() * Eigen::Matrix3d::Identity() - r * r.transpose());
      l += mass[i] * r.cross(v[i] - vc);
    }
    const auto ldlt = j.ldlt();
    const Eigen::Vector3d omega = ldlt.solve(l);
    const Eigen::Vector3d al = ldlt.solve(Eigen::Vector3d(adj_omega));  // J is symmetric
    const Eigen::Matrix3d aj = -al * omega.transpose();
    const Eigen::Matrix3d ajs = aj + aj.transpose();
    const double tr = aj.trace();
    for (std::size_t i = 0; i < n; ++i) {
      const Vec<3> r = x[i] - xc, w = v[i] - vc;
      const Vec<3> ar = mass[i] * (w.cross(al) + 2.0 * tr * r - ajs * r);
      const Vec<3> aw = mass[i] * al.cross(r);
      adj_mass[i] += al.dot(r.cross(w)) + tr * r.squaredNorm() - r.dot(aj * r);
      adj_x[i] += ar;
      adj_xc -= ar;
      adj_v[i] += aw;
      adj_vc -= aw;
    }
  }
  centroid_vjp<Dim>(x, gamma, adj_xc, adj_x, adj_gamma);
  centroid_vjp<Dim>(v, gamma, adj_vc, adj_v, adj_gamma);
}

template <int Dim>
BodyMetrics<Dim> body_metrics(const std::vector<Vec<Dim>>& x, const std::vector<Vec<Dim>>& v,
                              const Eigen::VectorXd& gamma, const std::vector<double>& mass) {
  return {centroid<Dim>(x, gamma), centroid<Dim>(v, gamma), angular_velocity<Dim>(x, v, gamma, mass)};
}

namespace {

// (0, w) * q, Hamilton product.
Eigen::Vector4d omega_times(const Eigen::Vector3d& w, const Eigen::Vector4d& q) {
  const Eigen::Vector3d qv = q.tail<3>();
  Eigen::Vector4d out;
  out[0] = -w.dot(qv);
  out.tail<3>() = q[0] * w + w.cross(qv);
  return out;
}

}  // namespace

template <int Dim>
PostureState integrate_posture(const PostureState& s, const RotVec<Dim>& omega, double dt) {
  PostureState out = s;
  if constexpr (Dim == 2) {
    out.theta = s.theta + omega[0] * dt;
  } else {
    const Eigen::Vector4d p = s.q + 0.5 * dt * omega_times(omega, s.q);
    out.q = p / p.norm();
  }
  return out;
}

template <int Dim>
void integrate_posture_vjp(const PostureState& s, const RotVec<Dim>& omega, double dt, const PostureState& adj_next,
                           PostureState& adj_prev, RotVec<Dim>& adj_omega) {
  if constexpr (Dim == 2) {
    adj_prev.theta += adj_next.theta;
    adj_omega[0] += adj_next.theta * dt;
  } else {
    const Eigen::Vector4d p = s.q + 0.5 * dt * omega_times(omega, s.q);
    const double n = p.norm();
    const Eigen::Vector4d qn = p / n;
    const Eigen::Vector4d ap = (adj_next.q - qn * qn.dot(adj_next.q)) / n;
    const double h = 0.5 * dt;
    const Eigen::Vector3d qv = s.q.tail<3>(), apv = ap.tail<3>();
    const Eigen::Vector3d w = omega;
    adj_omega += h * (-ap[0] * qv + s.q[0] * apv + qv.cross(apv));
    adj_prev.q[0] += ap[0] + h * w.dot(apv);
    adj_prev.q.tail<3>() += apv - h * ap[0] * w + h * apv.cross(w);
  }
}

Eigen::Vector3d rotation_vector(const Eigen::Vector4d& q) {
  const Eigen::Vector3d qv = q.tail<3>();
  const double s = qv.norm();
  if (s < 1e-12) return qv * (2.0 / q[0]);
  return qv * (2.0 * std::atan2(s, q[0]) / s);
}

template <int Dim>
double posture_angle_sq(const PostureState& s) {
  if constexpr (Dim == 2) {
    return s.theta * s.theta;
  } else {
    return rotation_vector(s.q).squaredNorm();
  }
}

template <int Dim>
void posture_angle_sq_vjp(const PostureState& s, double scale, PostureState& adj) {
  if constexpr (Dim == 2) {
    adj.theta += 2.0 * s.theta * scale;
  } else {
    const double q0 = s.q[0];
    const Eigen::Vector3d qv = s.q.tail<3>();
    const double s2 = qv.squaredNorm(), sn = std::sqrt(s2);
    const double n2 = s2 + q0 * q0;
    // phi = 2 atan2(s, q0) = k s
    const double k = sn < 1e-12 ? 2.0 / q0 : 2.0 * std::atan2(sn, q0) / sn;
    adj.q[0] += scale * (-4.0 * k * s2 / n2);
    adj.q.tail<3>() += scale * (4.0 * k * q0 / n2) * qv;
  }
}

LossTerms episode_loss(double travel, double posture_integral, const ObjectiveConfig& cfg) {
  LossTerms t;
  t.travel = travel;
  const double shortfall = std::max(1.0 - travel / cfg.target, 0.0);
  t.travel_term = shortfall * shortfall;
  t.posture_term = cfg.w_theta / cfg.duration * posture_integral / (cfg.theta_bar * cfg.theta_bar);
  t.F = t.travel_term + t.posture_term;
  return t;
}

LossSlopes episode_loss_vjp(double travel, double /*posture_integral*/, const ObjectiveConfig& cfg) {
  const double shortfall = std::max(1.0 - travel / cfg.target, 0.0);
  return {-2.0 * shortfall / cfg.target, cfg.w_theta / cfg.duration / (cfg.theta_bar * cfg.theta_bar)};
}

Constraints binarization_constraints(const Eigen::VectorXd& gamma, const RowMatrix& xi, int n_act) {
  const double n = static_cast<double>(gamma.size());
  Constraints c;
  c.topology = 4.0 / n * (gamma.array() * (1.0 - gamma.array())).sum();
  const double scale = (n_act + 1.0) / (n * n_act);
  c.layout = scale * (1.0 - xi.array().square().rowwise().sum()).sum();
  return c;
}

void binarization_constraints_vjp(const Eigen::VectorXd& gamma, const RowMatrix& xi, int n_act, double adj_to,
                                  double adj_lay, Eigen::VectorXd& adj_gamma, RowMatrix& adj_xi) {
  const double n = static_cast<double>(gamma.size());
  adj_gamma.array() += adj_to * 4.0 / n * (1.0 - 2.0 * gamma.array());
  const double scale = (n_act + 1.0) / (n * n_act);
  adj_xi.array() += -2.0 * scale * adj_lay * xi.array();
}

double augmented_lagrangian(double mean_loss, double weight_sq_norm, double alpha, const Constraints& c,
                            const ConstraintBounds& bounds, const Multipliers& m) {
  const double vto = std::max(c.topology - bounds.topology, 0.0);
  const double vlay = std::max(c.layout - bounds.layout, 0.0);
  return mean_loss + 0.5 * alpha * weight_sq_norm - m.kappa_to * vto + 0.5 * m.tau_to * vto * vto -
         m.kappa_lay * vlay + 0.5 * m.tau_lay * vlay * vlay;
}

double penalty_slope(double value, double bound, double kappa, double tau) {
  const double viol = value - bound;
  if (viol <= 0.0) return 0.0;
  return -kappa + tau * viol;
}

#define CODESIGN_OBJECTIVE(D)                                                                                     \
  template Vec<D> centroid<D>(const std::vector<Vec<D>>&, const Eigen::VectorXd&);                               \
  template void centroid_vjp<D>(const std::vector<Vec<D>>&, const Eigen::VectorXd&, const Vec<D>&,               \
                                std::vector<Vec<D>>&, Eigen::VectorXd&);                                          \
  template RotVec<D> angular_velocity<D>(const std::vector<Vec<D>>&, const std::vector<Vec<D>>&,                 \
                                         const Eigen::VectorXd&, const std::vector<double>&);                    \
  template void angular_velocity_vjp<D>(const std::vector<Vec<D>>&, const std::vector<Vec<D>>&,                  \
                                        const Eigen::VectorXd&, const std::vector<double>&, const RotVec<D>&,    \
                                        std::vector<Vec<D>>&, std::vector<Vec<D>>&, Eigen::VectorXd&,            \
                                        std::vector<double>&);                                                    \
  template BodyMetrics<D> body_metrics<D>(const std::vector<Vec<D>>&, const std::vector<Vec<D>>&,                \
                                          const Eigen::VectorXd&, const std::vector<double>&);                   \
  template PostureState integrate_posture<D>(const PostureState&, const RotVec<D>&, double);                     \
  template void integrate_posture_vjp<D>(const PostureState&, const RotVec<D>&, double, const PostureState&,     \
                                         PostureState&, RotVec<D>&);                                              \
  template double posture_angle_sq<D>(const PostureState&);                                                      \
  template void posture_angle_sq_vjp<D>(const PostureState&, double, PostureState&);

CODESIGN_OBJECTIVE(2)
CODESIGN_OBJECTIVE(3)

}  // namespace codesign
