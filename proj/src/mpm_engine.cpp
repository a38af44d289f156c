#include "codesign/mpm_engine.hpp"

#include <cmath>
#include <sstream>

namespace codesign {

namespace {

template <int Dim>
std::string format_vec(const Vec<Dim>& x) {
  std::ostringstream os;
  os.precision(6);
  os << "(";
  for (int a = 0; a < Dim; ++a) os << (a ? ", " : "") << x[a];
  os << ")";
  return os.str();
}

}  // namespace

template <int Dim>
long SimConfig<Dim>::steps() const {
  if (!(dt > 0.0)) throw ConfigError("simulation.dt must be positive");
  if (!(duration > 0.0)) throw ConfigError("simulation.duration must be positive");
  const double ratio = duration / dt;
  const long n = std::lround(ratio);
  if (n < 1 || std::abs(ratio - static_cast<double>(n)) > 1e-6 * ratio) {
    std::ostringstream os;
    os << "simulation.duration / simulation.dt = " << ratio << " is not a positive integer";
    throw ConfigError(os.str());
  }
  return n;
}

template <int Dim>
void BoundaryField<Dim>::add_walls(const GridLayout<Dim>& layout, int band) {
  for (long idx = 0; idx < layout.node_count(); ++idx) {
    if (kind[idx] == NodeBoundary::kGround) continue;
    const IVec<Dim> n = layout.node_of(idx);
    for (int a = 0; a < Dim; ++a) {
      Vec<Dim> inward = Vec<Dim>::Zero();
      if (a != kVertical && n[a] < band) inward[a] = 1.0;
      if (n[a] > layout.cells[a] - band) inward[a] = -1.0;
      if (inward.squaredNorm() > 0.0) {
        kind[idx] = NodeBoundary::kWall;
        normal[idx] = inward;
        break;
      }
    }
  }
}

template <int Dim>
GridField<Dim>::GridField(const GridLayout<Dim>& l)
    : layout(l),
      mass(l.node_count(), 0.0),
      momentum(l.node_count(), Vec<Dim>::Zero()),
      velocity(l.node_count(), Vec<Dim>::Zero()),
      projection(l.node_count(), Projection::kEmpty),
      touched(l.node_count(), 0) {}

template <int Dim>
void GridField<Dim>::clear() {
  for (long n : active) {
    mass[n] = 0.0;
    momentum[n].setZero();
    velocity[n].setZero();
    projection[n] = Projection::kEmpty;
    touched[n] = 0;
  }
  active.clear();
}

template <int Dim>
double GridField<Dim>::total_mass() const {
  double m = 0.0;
  for (long n : active) m += mass[n];
  return m;
}

template <int Dim>
Vec<Dim> GridField<Dim>::total_momentum() const {
  Vec<Dim> p = Vec<Dim>::Zero();
  for (long n : active) p += momentum[n];
  return p;
}

template <int Dim>
void ParticleState<Dim>::set_zero() {
  for (auto& e : x) e.setZero();
  for (auto& e : v) e.setZero();
  for (auto& e : F) e.setZero();
  for (auto& e : C) e.setZero();
}

template <int Dim>
void GridAdjoint<Dim>::clear(const GridField<Dim>& grid) {
  for (long n : grid.active) {
    mass[n] = 0.0;
    momentum[n].setZero();
    velocity[n].setZero();
  }
}

template <int Dim>
bool make_stencil(const GridLayout<Dim>& layout, const Vec<Dim>& x, Stencil<Dim>& out) {
  const double inv_dx = 1.0 / layout.dx;
  std::array<std::array<double, 3>, Dim> w;
  std::array<std::array<double, 3>, Dim> dw;
  std::array<double, Dim> fx;
  std::array<int, Dim> base;
  for (int a = 0; a < Dim; ++a) {
    if (!std::isfinite(x[a])) return false;
    const double q = x[a] * inv_dx;
    const double b = std::floor(q - 0.5);
    if (b < 0.0 || b + 2.0 > layout.cells[a]) return false;
    base[a] = static_cast<int>(b);
    const double f = q - b;
    fx[a] = f;
    w[a] = {0.5 * (1.5 - f) * (1.5 - f), 0.75 - (f - 1.0) * (f - 1.0), 0.5 * (f - 0.5) * (f - 0.5)};
    dw[a] = {-(1.5 - f) * inv_dx, -2.0 * (f - 1.0) * inv_dx, (f - 0.5) * inv_dx};
  }
  const double dx = layout.dx;
  if constexpr (Dim == 2) {
    const long stride = layout.nodes(1);
    const long origin = base[0] * stride + base[1];
    int o = 0;
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j, ++o) {
        out.node[o] = origin + i * stride + j;
        out.weight[o] = w[0][i] * w[1][j];
        out.grad[o] = Vec<2>(dw[0][i] * w[1][j], w[0][i] * dw[1][j]);
        out.dpos[o] = Vec<2>((i - fx[0]) * dx, (j - fx[1]) * dx);
      }
    }
  } else {
    const long s1 = layout.nodes(2), s0 = layout.nodes(1) * s1;
    const long origin = base[0] * s0 + base[1] * s1 + base[2];
    int o = 0;
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        const double wij = w[0][i] * w[1][j];
        for (int k = 0; k < 3; ++k, ++o) {
          out.node[o] = origin + i * s0 + j * s1 + k;
          out.weight[o] = wij * w[2][k];
          out.grad[o] = Vec<3>(dw[0][i] * w[1][j] * w[2][k], w[0][i] * dw[1][j] * w[2][k], wij * dw[2][k]);
          out.dpos[o] = Vec<3>((i - fx[0]) * dx, (j - fx[1]) * dx, (k - fx[2]) * dx);
        }
      }
    }
  }
  return true;
}

template <int Dim>
Mat<Dim> total_kirchhoff(const Mat<Dim>& F, const Mat<Dim>& C, double lambda, double mu, double a,
                         double eta, const Mat<Dim>& S) {
  const double J = F.determinant();
  if (!(J > 0.0)) throw SimulationError("non-positive deformation gradient determinant", -1, -1);
  const Mat<Dim> I = Mat<Dim>::Identity();
  const Mat<Dim> viscous = C + C.transpose() - (2.0 / 3.0) * C.trace() * I;
  return mu * (F * F.transpose() - I) + lambda * std::log(J) * I + J * eta * viscous +
         J * a * F * S * F.transpose();
}

template <int Dim>
KirchhoffVjp<Dim> total_kirchhoff_vjp(const Mat<Dim>& F, const Mat<Dim>& C, double lambda, double mu,
                                      double a, double eta, const Mat<Dim>& S, const Mat<Dim>& G) {
  const double J = F.determinant();
  const Mat<Dim> I = Mat<Dim>::Identity();
  const Mat<Dim> FinvT = F.inverse().transpose();
  const Mat<Dim> viscous = C + C.transpose() - (2.0 / 3.0) * C.trace() * I;
  const Mat<Dim> FSFt = F * S * F.transpose();
  const double trG = G.trace();

  KirchhoffVjp<Dim> out;
  out.mu = (G.array() * (F * F.transpose() - I).array()).sum();
  out.lambda = trG * std::log(J);
  const double G_visc = (G.array() * viscous.array()).sum();
  out.eta = J * G_visc;
  const double G_act = (G.array() * FSFt.array()).sum();
  out.a = J * G_act;

  double adj_J = eta * G_visc + a * G_act;
  out.F = mu * (G + G.transpose()) * F + lambda * trG * FinvT +
          J * a * (G * F * S.transpose() + G.transpose() * F * S);
  out.F += adj_J * J * FinvT;
  out.C = J * eta * (G + G.transpose() - (2.0 / 3.0) * trG * I);
  return out;
}

template <int Dim>
void p2g(const ParticleState<Dim>& state, const ParticleMaterial& material, std::span<const double> actuation,
         GridField<Dim>& grid, const SimConfig<Dim>& cfg, long step) {
  grid.clear();
  const double inv_dx = 1.0 / grid.layout.dx;
  const double k = cfg.dt * 4.0 * inv_dx * inv_dx * material.volume;
  Stencil<Dim> s;
  for (std::size_t p = 0; p < state.size(); ++p) {
    if (!make_stencil(grid.layout, state.x[p], s)) {
      throw SimulationError("particle " + std::to_string(p) + " left the grid interior at " +
                                format_vec<Dim>(state.x[p]) + " (step " + std::to_string(step) + ")",
                            step, static_cast<long>(p));
    }
    const Mat<Dim>& F = state.F[p];
    if (!(F.determinant() > 0.0)) {
      throw SimulationError("non-positive det(F) at particle " + std::to_string(p) + " (step " +
                                std::to_string(step) + ")",
                            step, static_cast<long>(p));
    }
    const double m = material.mass[p];
    const Mat<Dim> tau = total_kirchhoff<Dim>(F, state.C[p], material.lambda[p], material.mu[p], actuation[p],
                                              material.eta[p], cfg.actuation_tensor);
    const Mat<Dim> A = m * state.C[p] - k * tau;
    const Vec<Dim> mv = m * state.v[p];
    for (int o = 0; o < Stencil<Dim>::kSize; ++o) {
      const long n = s.node[o];
      grid.touch(n);
      grid.mass[n] += s.weight[o] * m;
      grid.momentum[n] += s.weight[o] * (mv + A * s.dpos[o]);
    }
  }
}

template <int Dim>
void grid_update(GridField<Dim>& grid, const SimConfig<Dim>& cfg, const BoundaryField<Dim>& boundary) {
  for (long n : grid.active) {
    const double M = grid.mass[n];
    if (!(M > cfg.mass_floor)) {
      grid.velocity[n].setZero();
      grid.projection[n] = Projection::kEmpty;
      continue;
    }
    Vec<Dim> v = grid.momentum[n] / M + cfg.dt * cfg.gravity;
    Projection proj = Projection::kFree;
    switch (boundary.kind[n]) {
      case NodeBoundary::kGround:
        if (v.dot(boundary.normal[n]) < 0.0) {
          v.setZero();
          proj = Projection::kZeroed;
        }
        break;
      case NodeBoundary::kWall: {
        const double vn = v.dot(boundary.normal[n]);
        if (vn < 0.0) {
          v -= vn * boundary.normal[n];
          proj = Projection::kSlip;
        }
        break;
      }
      case NodeBoundary::kNone:
        break;
    }
    grid.velocity[n] = v;
    grid.projection[n] = proj;
  }
}

template <int Dim>
void g2p(const GridField<Dim>& grid, const ParticleState<Dim>& in, ParticleState<Dim>& out,
         const SimConfig<Dim>& cfg, long step) {
  const double inv_dx = 1.0 / grid.layout.dx;
  const double c = 4.0 * inv_dx * inv_dx;
  if (&in != &out) out = in;
  Stencil<Dim> s;
  for (std::size_t p = 0; p < in.size(); ++p) {
    if (!make_stencil(grid.layout, in.x[p], s)) {
      throw SimulationError("particle " + std::to_string(p) + " left the grid during g2p", step,
                            static_cast<long>(p));
    }
    Vec<Dim> v = Vec<Dim>::Zero();
    Mat<Dim> B = Mat<Dim>::Zero();
    for (int o = 0; o < Stencil<Dim>::kSize; ++o) {
      const Vec<Dim> wv = s.weight[o] * grid.velocity[s.node[o]];
      v += wv;
      B += wv * s.dpos[o].transpose();
    }
    const Mat<Dim> C = c * B;
    const Mat<Dim> F = (Mat<Dim>::Identity() + cfg.dt * C) * in.F[p];
    if (!(F.determinant() > 0.0)) {
      throw SimulationError("non-positive det(F) after g2p at particle " + std::to_string(p) + " (step " +
                                std::to_string(step) + ")",
                            step, static_cast<long>(p));
    }
    out.x[p] = in.x[p] + cfg.dt * v;
    out.v[p] = v;
    out.C[p] = C;
    out.F[p] = F;
  }
}

template <int Dim>
void g2p_vjp(const GridField<Dim>& grid, const ParticleState<Dim>& before, const ParticleState<Dim>& after,
             const ParticleState<Dim>& adj_after, const SimConfig<Dim>& cfg, ParticleState<Dim>& adj_before,
             GridAdjoint<Dim>& adj_grid) {
  const double inv_dx = 1.0 / grid.layout.dx;
  const double c = 4.0 * inv_dx * inv_dx;
  const double dt = cfg.dt;
  if (adj_before.size() != before.size()) adj_before = ParticleState<Dim>(before.size());
  adj_before.set_zero();
  Stencil<Dim> s;
  for (std::size_t p = 0; p < before.size(); ++p) {
    make_stencil(grid.layout, before.x[p], s);
    const Mat<Dim>& aF = adj_after.F[p];
    const Vec<Dim> av = adj_after.v[p] + dt * adj_after.x[p];
    const Mat<Dim> aC = adj_after.C[p] + dt * aF * before.F[p].transpose();
    adj_before.F[p] = (Mat<Dim>::Identity() + dt * after.C[p]).transpose() * aF;
    Vec<Dim> ax = adj_after.x[p];
    for (int o = 0; o < Stencil<Dim>::kSize; ++o) {
      const long n = s.node[o];
      const double N = s.weight[o];
      const Vec<Dim>& vn = grid.velocity[n];
      const Vec<Dim> aC_d = aC * s.dpos[o];
      adj_grid.velocity[n] += N * (av + c * aC_d);
      const double aN = av.dot(vn) + c * vn.dot(aC_d);
      ax += aN * s.grad[o] - (c * N) * (aC.transpose() * vn);
    }
    adj_before.x[p] = ax;
  }
}

template <int Dim>
void grid_update_vjp(const GridField<Dim>& grid, const BoundaryField<Dim>& boundary, GridAdjoint<Dim>& adj_grid) {
  for (long n : grid.active) {
    Vec<Dim> a = adj_grid.velocity[n];
    switch (grid.projection[n]) {
      case Projection::kEmpty:
      case Projection::kZeroed:
        adj_grid.momentum[n].setZero();
        adj_grid.mass[n] = 0.0;
        continue;
      case Projection::kSlip:
        a -= a.dot(boundary.normal[n]) * boundary.normal[n];
        break;
      case Projection::kFree:
        break;
    }
    const double M = grid.mass[n];
    adj_grid.momentum[n] = a / M;
    adj_grid.mass[n] = -a.dot(grid.momentum[n]) / (M * M);
  }
}

template <int Dim>
void p2g_vjp(const ParticleState<Dim>& state, const ParticleMaterial& material, std::span<const double> actuation,
             const GridField<Dim>& grid, const GridAdjoint<Dim>& adj_grid, const SimConfig<Dim>& cfg,
             ParticleState<Dim>& adj_state, MaterialAdjoint& adj_material) {
  const double inv_dx = 1.0 / grid.layout.dx;
  const double k = cfg.dt * 4.0 * inv_dx * inv_dx * material.volume;
  Stencil<Dim> s;
  for (std::size_t p = 0; p < state.size(); ++p) {
    make_stencil(grid.layout, state.x[p], s);
    const Mat<Dim>& F = state.F[p];
    const Mat<Dim>& Cp = state.C[p];
    const double m = material.mass[p];
    const Vec<Dim>& v = state.v[p];
    const Mat<Dim> tau = total_kirchhoff<Dim>(F, Cp, material.lambda[p], material.mu[p], actuation[p],
                                              material.eta[p], cfg.actuation_tensor);
    const Mat<Dim> A = m * Cp - k * tau;
    const Vec<Dim> mv = m * v;

    Mat<Dim> aA = Mat<Dim>::Zero();
    Vec<Dim> ax = Vec<Dim>::Zero();
    Vec<Dim> av = Vec<Dim>::Zero();
    double am = 0.0;
    for (int o = 0; o < Stencil<Dim>::kSize; ++o) {
      const long n = s.node[o];
      const double N = s.weight[o];
      const Vec<Dim>& aP = adj_grid.momentum[n];
      const double aM = adj_grid.mass[n];
      const Vec<Dim> contrib = mv + A * s.dpos[o];
      const double aN = aM * m + aP.dot(contrib);
      ax += aN * s.grad[o] - N * (A.transpose() * aP);
      am += N * (aM + aP.dot(v));
      av += (N * m) * aP;
      aA += N * aP * s.dpos[o].transpose();
    }
    am += (aA.array() * Cp.array()).sum();
    const Mat<Dim> adj_tau = -k * aA;
    const KirchhoffVjp<Dim> g = total_kirchhoff_vjp<Dim>(F, Cp, material.lambda[p], material.mu[p], actuation[p],
                                                         material.eta[p], cfg.actuation_tensor, adj_tau);
    adj_state.x[p] += ax;
    adj_state.v[p] += av;
    adj_state.C[p] += m * aA + g.C;
    adj_state.F[p] += g.F;
    adj_material.mass[p] += am;
    adj_material.lambda[p] += g.lambda;
    adj_material.mu[p] += g.mu;
    adj_material.eta[p] += g.eta;
    adj_material.actuation[p] = g.a;
  }
}

#define CODESIGN_INSTANTIATE(D)                                                                                  \
  template struct SimConfig<D>;                                                                                  \
  template struct BoundaryField<D>;                                                                              \
  template struct GridField<D>;                                                                                  \
  template struct ParticleState<D>;                                                                              \
  template struct GridAdjoint<D>;                                                                                \
  template bool make_stencil<D>(const GridLayout<D>&, const Vec<D>&, Stencil<D>&);                               \
  template Mat<D> total_kirchhoff<D>(const Mat<D>&, const Mat<D>&, double, double, double, double, const Mat<D>&); \
  template KirchhoffVjp<D> total_kirchhoff_vjp<D>(const Mat<D>&, const Mat<D>&, double, double, double, double,  \
                                                  const Mat<D>&, const Mat<D>&);                                 \
  template void p2g<D>(const ParticleState<D>&, const ParticleMaterial&, std::span<const double>, GridField<D>&,  \
                       const SimConfig<D>&, long);                                                               \
  template void grid_update<D>(GridField<D>&, const SimConfig<D>&, const BoundaryField<D>&);                     \
  template void g2p<D>(const GridField<D>&, const ParticleState<D>&, ParticleState<D>&, const SimConfig<D>&, long); \
  template void g2p_vjp<D>(const GridField<D>&, const ParticleState<D>&, const ParticleState<D>&,                \
                           const ParticleState<D>&, const SimConfig<D>&, ParticleState<D>&, GridAdjoint<D>&);    \
  template void grid_update_vjp<D>(const GridField<D>&, const BoundaryField<D>&, GridAdjoint<D>&);               \
  template void p2g_vjp<D>(const ParticleState<D>&, const ParticleMaterial&, std::span<const double>,            \
                           const GridField<D>&, const GridAdjoint<D>&, const SimConfig<D>&, ParticleState<D>&,   \
                           MaterialAdjoint&);

CODESIGN_INSTANTIATE(2)
CODESIGN_INSTANTIATE(3)

#undef CODESIGN_INSTANTIATE

}  // namespace codesign
