#pragma once

// Explicit MLS-MPM transfer kernels (quadratic B-splines) for an actuated,
// damped neo-Hookean body, together with their vector-Jacobian products.

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "codesign/common.hpp"

namespace codesign {

template <int Dim>
struct GridLayout {
  double dx = 0.0125;
  IVec<Dim> cells = IVec<Dim>::Constant(80);

  int nodes(int axis) const { return cells[axis] + 1; }
  long node_count() const {
    long n = 1;
    for (int a = 0; a < Dim; ++a) n *= nodes(a);
    return n;
  }
  // x-major linear index.
  long index(const IVec<Dim>& node) const {
    long idx = 0;
    for (int a = 0; a < Dim; ++a) idx = idx * nodes(a) + node[a];
    return idx;
  }
  IVec<Dim> node_of(long idx) const {
    IVec<Dim> n;
    for (int a = Dim - 1; a >= 0; --a) {
      n[a] = static_cast<int>(idx % nodes(a));
      idx /= nodes(a);
    }
    return n;
  }
  Vec<Dim> position(const IVec<Dim>& node) const { return node.template cast<double>() * dx; }
  Vec<Dim> extent() const { return cells.template cast<double>() * dx; }
};

template <int Dim>
struct SimConfig {
  double dt = 1e-4;
  double duration = 1.0;
  Vec<Dim> gravity = -9.8 * Vec<Dim>::Unit(kVertical);
  Mat<Dim> actuation_tensor = Mat<Dim>::Identity();  // S
  double mass_floor = 1e-12;

  // Number of steps T/dt; throws ConfigError unless it is a positive integer.
  long steps() const;
};

enum class NodeBoundary : std::uint8_t { kNone, kGround, kWall };

// Per-node boundary classification. Ground nodes apply the separating
// condition v <- 0 when v.n < 0; wall nodes remove only the inward component.
template <int Dim>
struct BoundaryField {
  std::vector<NodeBoundary> kind;
  std::vector<Vec<Dim>> normal;

  explicit BoundaryField(const GridLayout<Dim>& layout = {})
      : kind(layout.node_count(), NodeBoundary::kNone), normal(layout.node_count(), Vec<Dim>::Zero()) {}

  // Marks nodes closer than `band` cells to the domain sides and ceiling as
  // walls with inward normals, leaving ground nodes untouched.
  void add_walls(const GridLayout<Dim>& layout, int band);
};

enum class Projection : std::uint8_t { kEmpty, kFree, kZeroed, kSlip };

template <int Dim>
struct GridField {
  GridLayout<Dim> layout;
  std::vector<double> mass;
  std::vector<Vec<Dim>> momentum;
  std::vector<Vec<Dim>> velocity;
  std::vector<Projection> projection;
  std::vector<long> active;  // nodes touched since the last clear, in first-touch order
  std::vector<std::uint8_t> touched;

  explicit GridField(const GridLayout<Dim>& l = {});

  void clear();
  void touch(long n) {
    if (!touched[n]) {
      touched[n] = 1;
      active.push_back(n);
    }
  }
  double total_mass() const;
  Vec<Dim> total_momentum() const;
};

template <int Dim>
struct ParticleState {
  std::vector<Vec<Dim>> x;
  std::vector<Vec<Dim>> v;
  std::vector<Mat<Dim>> F;
  std::vector<Mat<Dim>> C;

  ParticleState() = default;
  explicit ParticleState(std::size_t n)
      : x(n, Vec<Dim>::Zero()), v(n, Vec<Dim>::Zero()), F(n, Mat<Dim>::Zero()), C(n, Mat<Dim>::Zero()) {}

  std::size_t size() const { return x.size(); }
  void set_zero();
  bool operator==(const ParticleState&) const = default;
};

struct ParticleMaterial {
  double volume = 0.0;  // reference volume V0 shared by all particles
  std::vector<double> rho;
  std::vector<double> mass;  // rho * V0
  std::vector<double> lambda;
  std::vector<double> mu;
  std::vector<double> eta;

  std::size_t size() const { return mass.size(); }
};

template <int Dim>
struct ParticleSet {
  ParticleState<Dim> state;
  ParticleMaterial material;
  std::vector<double> actuation;  // a_i, Pa
};

// Quadratic B-spline stencil of one particle: 3^Dim nodes with weights,
// weight gradients with respect to the particle position, and x_node - x_p.
template <int Dim>
struct Stencil {
  static constexpr int kSize = Dim == 2 ? 9 : 27;
  std::array<long, kSize> node;
  std::array<double, kSize> weight;
  std::array<Vec<Dim>, kSize> grad;
  std::array<Vec<Dim>, kSize> dpos;
};

// Returns false when the stencil would leave the grid.
template <int Dim>
bool make_stencil(const GridLayout<Dim>& layout, const Vec<Dim>& x, Stencil<Dim>& out);

// J * (sigma_elastic + sigma_viscous - sigma_act) with C standing in for grad v.
template <int Dim>
Mat<Dim> total_kirchhoff(const Mat<Dim>& F, const Mat<Dim>& C, double lambda, double mu, double a,
                         double eta, const Mat<Dim>& S);

template <int Dim>
struct KirchhoffVjp {
  Mat<Dim> F = Mat<Dim>::Zero();
  Mat<Dim> C = Mat<Dim>::Zero();
  double lambda = 0.0;
  double mu = 0.0;
  double a = 0.0;
  double eta = 0.0;
};

template <int Dim>
KirchhoffVjp<Dim> total_kirchhoff_vjp(const Mat<Dim>& F, const Mat<Dim>& C, double lambda, double mu,
                                      double a, double eta, const Mat<Dim>& S, const Mat<Dim>& adj_tau);

// Clears the grid, then scatters mass and MLS momentum (including the stress
// impulse) of every particle. `step` only labels errors.
template <int Dim>
void p2g(const ParticleState<Dim>& state, const ParticleMaterial& material, std::span<const double> actuation,
         GridField<Dim>& grid, const SimConfig<Dim>& cfg, long step = -1);
template <int Dim>
void p2g(const ParticleSet<Dim>& particles, GridField<Dim>& grid, const SimConfig<Dim>& cfg, long step = -1) {
  p2g(particles.state, particles.material, particles.actuation, grid, cfg, step);
}

template <int Dim>
void grid_update(GridField<Dim>& grid, const SimConfig<Dim>& cfg, const BoundaryField<Dim>& boundary);

// Gathers grid velocities: v, C, advects x and updates F. `out` may alias `in`.
template <int Dim>
void g2p(const GridField<Dim>& grid, const ParticleState<Dim>& in, ParticleState<Dim>& out,
         const SimConfig<Dim>& cfg, long step = -1);
template <int Dim>
void g2p(const GridField<Dim>& grid, ParticleSet<Dim>& particles, const SimConfig<Dim>& cfg, long step = -1) {
  g2p(grid, particles.state, particles.state, cfg, step);
}

template <int Dim>
struct GridAdjoint {
  std::vector<double> mass;
  std::vector<Vec<Dim>> momentum;
  std::vector<Vec<Dim>> velocity;

  explicit GridAdjoint(const GridLayout<Dim>& l = {})
      : mass(l.node_count(), 0.0), momentum(l.node_count(), Vec<Dim>::Zero()),
        velocity(l.node_count(), Vec<Dim>::Zero()) {}
  void clear(const GridField<Dim>& grid);
};

struct MaterialAdjoint {
  std::vector<double> mass;
  std::vector<double> lambda;
  std::vector<double> mu;
  std::vector<double> eta;
  std::vector<double> actuation;  // per step, overwritten by p2g_vjp

  explicit MaterialAdjoint(std::size_t n = 0)
      : mass(n, 0.0), lambda(n, 0.0), mu(n, 0.0), eta(n, 0.0), actuation(n, 0.0) {}
};

// Backward of g2p. `adj_after` holds adjoints of the gathered state; the
// adjoint of the pre-step state is written to `adj_before` (overwritten) and
// grid velocity adjoints are accumulated into `adj_grid`.
template <int Dim>
void g2p_vjp(const GridField<Dim>& grid, const ParticleState<Dim>& before, const ParticleState<Dim>& after,
             const ParticleState<Dim>& adj_after, const SimConfig<Dim>& cfg, ParticleState<Dim>& adj_before,
             GridAdjoint<Dim>& adj_grid);

// Backward of grid_update: converts velocity adjoints into momentum and mass adjoints.
template <int Dim>
void grid_update_vjp(const GridField<Dim>& grid, const BoundaryField<Dim>& boundary, GridAdjoint<Dim>& adj_grid);

// Backward of p2g; accumulates into `adj_state` and `adj_material`.
template <int Dim>
void p2g_vjp(const ParticleState<Dim>& state, const ParticleMaterial& material, std::span<const double> actuation,
             const GridField<Dim>& grid, const GridAdjoint<Dim>& adj_grid, const SimConfig<Dim>& cfg,
             ParticleState<Dim>& adj_state, MaterialAdjoint& adj_material);

}  // namespace codesign
