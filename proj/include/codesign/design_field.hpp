#pragma once

// Design variables (density logits phi, layout logits psi, controller weights)
// and their mapping onto per-particle material fields.

#include <span>
#include <vector>

#include "codesign/common.hpp"
#include "codesign/controller.hpp"
#include "codesign/mpm_engine.hpp"

namespace codesign {

// w(r) = (1 - min(r, R)/R)^p
double filter_weight(double r, double radius, double power);

// Normalized density filter over fixed (initial) particle positions, stored as
// CSR rows whose weights sum to one.
class DesignFilter {
 public:
  DesignFilter() = default;
  template <int Dim>
  DesignFilter(const std::vector<Vec<Dim>>& positions, double radius, double power);

  long size() const { return static_cast<long>(row_ptr_.size()) - 1; }
  Eigen::VectorXd apply(const Eigen::VectorXd& v) const;
  RowMatrix apply(const RowMatrix& v) const;  // row-wise over particles
  Eigen::VectorXd apply_transpose(const Eigen::VectorXd& v) const;
  RowMatrix apply_transpose(const RowMatrix& v) const;

  std::span<const long> neighbors(long i) const {
    return {col_.data() + row_ptr_[i], static_cast<std::size_t>(row_ptr_[i + 1] - row_ptr_[i])};
  }

 private:
  std::vector<long> row_ptr_{0};
  std::vector<long> col_;
  std::vector<double> weight_;
};

Eigen::VectorXd project_heaviside(const Eigen::VectorXd& filtered, double beta);
RowMatrix project_softmax(const RowMatrix& filtered, double beta);

struct MaterialBase {
  double rho = 1000.0;
  double lambda = 0.0;
  double mu = 0.0;
  double eta = 100.0;
  double epsilon = 1e-5;
};

// base * ((1 - eps) gamma + eps) for rho, lambda, mu and eta.
ParticleMaterial interpolate_material(const Eigen::VectorXd& gamma, const MaterialBase& base, double volume);

// (1 - eps) gamma^3 + eps
Eigen::VectorXd attenuation(const Eigen::VectorXd& gamma, double epsilon);

// a_i = att_i * sum_j xi_ij a_bar_j; the trailing null channel of xi carries no signal.
void particle_actuation(const Eigen::VectorXd& att, const RowMatrix& xi, const Eigen::VectorXd& signal,
                        std::vector<double>& out);

// Backward of particle_actuation, accumulating into the three adjoints.
void particle_actuation_vjp(const Eigen::VectorXd& att, const RowMatrix& xi, const Eigen::VectorXd& signal,
                            std::span<const double> adj_a, Eigen::VectorXd& adj_att, RowMatrix& adj_xi,
                            Eigen::VectorXd& adj_signal);

struct DesignVariables {
  Eigen::VectorXd phi;  // N_par
  RowMatrix psi;        // N_par x (N_act + 1)
  ControllerWeights controller;

  long layout_channels() const { return psi.cols(); }
};

struct DesignParams {
  double beta_topology = 4.0;
  double beta_layout = 4.0;
  MaterialBase base;
  double volume = 0.0;  // V0 per particle
};

struct MaterializedDesign {
  Eigen::VectorXd phi_filtered;
  Eigen::VectorXd gamma;
  RowMatrix psi_filtered;
  RowMatrix xi;
  Eigen::VectorXd att;
  ParticleMaterial material;
};

MaterializedDesign materialize(const DesignVariables& vars, const DesignFilter& filter, const DesignParams& params);
// From already projected fields, e.g. a design read back from disk (filtered
// fields are left empty).
MaterializedDesign materialize_fields(const Eigen::VectorXd& gamma, const RowMatrix& xi, const DesignParams& params);

// Adjoints with respect to the materialized fields.
struct DesignFieldAdjoint {
  Eigen::VectorXd gamma;
  RowMatrix xi;
};

// Adds the chain-rule contributions of material and attenuation adjoints to adj.gamma.
void material_to_gamma(const MaterializedDesign& design, const DesignParams& params, const MaterialAdjoint& adj_mat,
                       const Eigen::VectorXd& adj_att, Eigen::VectorXd& adj_gamma);

// Pulls field adjoints back to phi and psi through projection and filtering.
void materialize_vjp(const MaterializedDesign& design, const DesignFilter& filter, const DesignParams& params,
                     const DesignFieldAdjoint& adj, Eigen::VectorXd& adj_phi, RowMatrix& adj_psi);

}  // namespace codesign
