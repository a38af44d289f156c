#include "codesign/design_field.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace codesign {

double filter_weight(double r, double radius, double power) {
  return std::pow(1.0 - std::min(r, radius) / radius, power);
}

template <int Dim>
DesignFilter::DesignFilter(const std::vector<Vec<Dim>>& positions, double radius, double power) {
  if (!(radius > 0.0)) throw ConfigError("filter radius must be positive");
  const long n = static_cast<long>(positions.size());
  // Bin particles into cells of size R so neighbors lie in adjacent cells.
  Vec<Dim> lo = Vec<Dim>::Constant(std::numeric_limits<double>::max());
  for (const auto& x : positions) lo = lo.cwiseMin(x);
  std::vector<IVec<Dim>> cell(n);
  IVec<Dim> extent = IVec<Dim>::Zero();
  for (long i = 0; i < n; ++i) {
    for (int a = 0; a < Dim; ++a) cell[i][a] = static_cast<int>(std::floor((positions[i][a] - lo[a]) / radius));
    extent = extent.cwiseMax(cell[i]);
  }
  extent.array() += 1;
  auto key = [&](const IVec<Dim>& c) {
    long k = 0;
    for (int a = 0; a < Dim; ++a) k = k * extent[a] + c[a];
    return k;
  };
  long nbins = 1;
  for (int a = 0; a < Dim; ++a) nbins *= extent[a];
  std::vector<long> bin_start(nbins + 1, 0), bin_items(n);
  for (long i = 0; i < n; ++i) ++bin_start[key(cell[i]) + 1];
  for (long b = 0; b < nbins; ++b) bin_start[b + 1] += bin_start[b];
  {
    std::vector<long> fill(bin_start.begin(), bin_start.end() - 1);
    for (long i = 0; i < n; ++i) bin_items[fill[key(cell[i])]++] = i;
  }

  constexpr int kNeigh = Dim == 2 ? 9 : 27;
  std::vector<std::pair<long, double>> row;
  for (long i = 0; i < n; ++i) {
    row.clear();
    for (int s = 0; s < kNeigh; ++s) {
      IVec<Dim> c = cell[i];
      int t = s;
      bool ok = true;
      for (int a = 0; a < Dim; ++a) {
        c[a] += t % 3 - 1;
        t /= 3;
        ok = ok && c[a] >= 0 && c[a] < extent[a];
      }
      if (!ok) continue;
      const long b = key(c);
      for (long q = bin_start[b]; q < bin_start[b + 1]; ++q) {
        const long j = bin_items[q];
        const double w = filter_weight((positions[i] - positions[j]).norm(), radius, power);
        if (w > 0.0) row.emplace_back(j, w);
      }
    }
    std::sort(row.begin(), row.end());
    double total = 0.0;
    for (auto& e : row) total += e.second;
    for (auto& e : row) {
      col_.push_back(e.first);
      weight_.push_back(e.second / total);
    }
    row_ptr_.push_back(static_cast<long>(col_.size()));
  }
}

template DesignFilter::DesignFilter(const std::vector<Vec<2>>&, double, double);
template DesignFilter::DesignFilter(const std::vector<Vec<3>>&, double, double);

Eigen::VectorXd DesignFilter::apply(const Eigen::VectorXd& v) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(size());
  for (long i = 0; i < size(); ++i)
    for (long q = row_ptr_[i]; q < row_ptr_[i + 1]; ++q) out[i] += weight_[q] * v[col_[q]];
  return out;
}

RowMatrix DesignFilter::apply(const RowMatrix& v) const {
  RowMatrix out = RowMatrix::Zero(size(), v.cols());
  for (long i = 0; i < size(); ++i)
    for (long q = row_ptr_[i]; q < row_ptr_[i + 1]; ++q) out.row(i) += weight_[q] * v.row(col_[q]);
  return out;
}

Eigen::VectorXd DesignFilter::apply_transpose(const Eigen::VectorXd& v) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(size());
  for (long i = 0; i < size(); ++i)
    for (long q = row_ptr_[i]; q < row_ptr_[i + 1]; ++q) out[col_[q]] += weight_[q] * v[i];
  return out;
}

RowMatrix DesignFilter::apply_transpose(const RowMatrix& v) const {
  RowMatrix out = RowMatrix::Zero(size(), v.cols());
  for (long i = 0; i < size(); ++i)
    for (long q = row_ptr_[i]; q < row_ptr_[i + 1]; ++q) out.row(col_[q]) += weight_[q] * v.row(i);
  return out;
}

Eigen::VectorXd project_heaviside(const Eigen::VectorXd& filtered, double beta) {
  if (!(beta > 0.0)) throw ConfigError("projection sharpness must be positive");
  return (1.0 / (1.0 + (-beta * filtered.array()).exp())).matrix();
}

RowMatrix project_softmax(const RowMatrix& filtered, double beta) {
  if (!(beta > 0.0)) throw ConfigError("projection sharpness must be positive");
  RowMatrix xi(filtered.rows(), filtered.cols());
  for (long i = 0; i < filtered.rows(); ++i) {
    const double m = filtered.row(i).maxCoeff();
    xi.row(i) = (beta * (filtered.row(i).array() - m)).exp().matrix();
    xi.row(i) /= xi.row(i).sum();
  }
  return xi;
}

ParticleMaterial interpolate_material(const Eigen::VectorXd& gamma, const MaterialBase& base, double volume) {
  ParticleMaterial m;
  m.volume = volume;
  const long n = gamma.size();
  m.rho.resize(n);
  m.mass.resize(n);
  m.lambda.resize(n);
  m.mu.resize(n);
  m.eta.resize(n);
  for (long i = 0; i < n; ++i) {
    const double s = (1.0 - base.epsilon) * gamma[i] + base.epsilon;
    m.rho[i] = base.rho * s;
    m.mass[i] = m.rho[i] * volume;
    m.lambda[i] = base.lambda * s;
    m.mu[i] = base.mu * s;
    m.eta[i] = base.eta * s;
  }
  return m;
}

Eigen::VectorXd attenuation(const Eigen::VectorXd& gamma, double epsilon) {
  return ((1.0 - epsilon) * gamma.array().cube() + epsilon).matrix();
}

void particle_actuation(const Eigen::VectorXd& att, const RowMatrix& xi, const Eigen::VectorXd& signal,
                        std::vector<double>& out) {
  const long n = att.size();
  const long nact = signal.size();
  out.resize(n);
  for (long i = 0; i < n; ++i) {
    double s = 0.0;
    for (long j = 0; j < nact; ++j) s += xi(i, j) * signal[j];
    out[i] = att[i] * s;
  }
}

void particle_actuation_vjp(const Eigen::VectorXd& att, const RowMatrix& xi, const Eigen::VectorXd& signal,
                            std::span<const double> adj_a, Eigen::VectorXd& adj_att, RowMatrix& adj_xi,
                            Eigen::VectorXd& adj_signal) {
  const long n = att.size();
  const long nact = signal.size();
  for (long i = 0; i < n; ++i) {
    const double g = adj_a[i];
    if (g == 0.0) continue;
    double s = 0.0;
    for (long j = 0; j < nact; ++j) {
      s += xi(i, j) * signal[j];
      adj_xi(i, j) += g * att[i] * signal[j];
      adj_signal[j] += g * att[i] * xi(i, j);
    }
    adj_att[i] += g * s;
  }
}

MaterializedDesign materialize(const DesignVariables& vars, const DesignFilter& filter, const DesignParams& params) {
  if (vars.phi.size() != filter.size() || vars.psi.rows() != filter.size())
    throw ConfigError("design variables do not match the particle count");
  MaterializedDesign d;
  d.phi_filtered = filter.apply(vars.phi);
  d.gamma = project_heaviside(d.phi_filtered, params.beta_topology);
  d.psi_filtered = filter.apply(vars.psi);
  d.xi = project_softmax(d.psi_filtered, params.beta_layout);
  d.att = attenuation(d.gamma, params.base.epsilon);
  d.material = interpolate_material(d.gamma, params.base, params.volume);
  return d;
}

MaterializedDesign materialize_fields(const Eigen::VectorXd& gamma, const RowMatrix& xi, const DesignParams& params) {
  if (xi.rows() != gamma.size()) throw ConfigError("layout rows do not match the particle count");
  MaterializedDesign d;
  d.gamma = gamma;
  d.xi = xi;
  d.att = attenuation(gamma, params.base.epsilon);
  d.material = interpolate_material(gamma, params.base, params.volume);
  return d;
}

void material_to_gamma(const MaterializedDesign& design, const DesignParams& params, const MaterialAdjoint& adj_mat,
                       const Eigen::VectorXd& adj_att, Eigen::VectorXd& adj_gamma) {
  const MaterialBase& b = params.base;
  const double e = b.epsilon;
  for (long i = 0; i < design.gamma.size(); ++i) {
    const double ds = 1.0 - e;
    double g = ds * (b.rho * params.volume * adj_mat.mass[i] + b.lambda * adj_mat.lambda[i] + b.mu * adj_mat.mu[i] +
                     b.eta * adj_mat.eta[i]);
    g += 3.0 * ds * design.gamma[i] * design.gamma[i] * adj_att[i];
    adj_gamma[i] += g;
  }
}

void materialize_vjp(const MaterializedDesign& design, const DesignFilter& filter, const DesignParams& params,
                     const DesignFieldAdjoint& adj, Eigen::VectorXd& adj_phi, RowMatrix& adj_psi) {
  const Eigen::VectorXd adj_phif =
      (params.beta_topology * design.gamma.array() * (1.0 - design.gamma.array()) * adj.gamma.array()).matrix();
  adj_phi += filter.apply_transpose(adj_phif);

  RowMatrix adj_psif(design.xi.rows(), design.xi.cols());
  for (long i = 0; i < design.xi.rows(); ++i) {
    const double dot = design.xi.row(i).dot(adj.xi.row(i));
    adj_psif.row(i) = params.beta_layout * design.xi.row(i).array() * (adj.xi.row(i).array() - dot);
  }
  adj_psi += filter.apply_transpose(adj_psif);
}

}  // namespace codesign
