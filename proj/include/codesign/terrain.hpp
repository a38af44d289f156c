#pragma once

// Random terrains: Gaussian-process height fields over the horizontal grid
// lattice, flattened on the inlet strip and rasterized onto grid nodes.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "codesign/common.hpp"
#include "codesign/mpm_engine.hpp"

namespace codesign {

// Horizontal lattice: nx points along x, nz along z (nz == 1 in 2D).
struct Lattice {
  long nx = 1;
  long nz = 1;
  double dx = 0.0125;
  double dz = 0.0125;

  long size() const { return nx * nz; }
  long index(long ix, long iz) const { return ix * nz + iz; }
  double x(long ix) const { return static_cast<double>(ix) * dx; }
  double z(long iz) const { return static_cast<double>(iz) * dz; }
  double length_x() const { return static_cast<double>(nx - 1) * dx; }

  template <int Dim>
  static Lattice from_grid(const GridLayout<Dim>& layout) {
    Lattice l;
    l.nx = layout.nodes(0);
    l.nz = Dim == 3 ? layout.nodes(Dim - 1) : 1;
    l.dx = layout.dx;
    l.dz = layout.dx;
    return l;
  }
};

struct TerrainHyper {
  double length_scale = 0.2;   // varrho, m
  double height_scale = 0.02;  // varsigma, m (standard deviation)
  double inlet_height = 0.1;   // h bar, m
  double inlet_extent = 0.3;   // x bar, m
};

struct TerrainSample {
  int dimension = 2;
  Lattice lattice;
  TerrainHyper hyper;
  std::uint64_t seed = 0;
  std::vector<double> height;  // h tilde, row-major [ix][iz]

  double at(long ix, long iz = 0) const { return height[lattice.index(ix, iz)]; }
};

// Gaussian kernel matrix over all lattice points (unit diagonal).
Eigen::MatrixXd gaussian_kernel(const Lattice& lattice, double length_scale);

// Factorizes the kernel once and draws h = mean + varsigma * L z.
class GpSampler {
 public:
  GpSampler(const Lattice& lattice, double length_scale);

  Eigen::VectorXd sample(std::uint64_t seed, double mean, double height_scale) const;
  double jitter() const { return jitter_; }
  const Eigen::MatrixXd& factor() const { return factor_; }

 private:
  Eigen::MatrixXd factor_;
  double jitter_ = 0.0;
};

Eigen::VectorXd gp_sample(const Lattice& lattice, double length_scale, double height_scale, double mean,
                          std::uint64_t seed);

// Splices the raw field onto the flat inlet so that h(xbar, z) = h(L_x, z) = hbar.
std::vector<double> flatten_inlet(const Eigen::VectorXd& raw, const Lattice& lattice, double xbar, double hbar);

TerrainSample make_terrain(const GpSampler& sampler, const Lattice& lattice, const TerrainHyper& hyper,
                           int dimension, std::uint64_t seed);

// floor(h / dy) with a relative tolerance so exact multiples land on their node.
int surface_index(double height, double dy);

// Rasterized terrain surface per horizontal column.
struct SurfaceGrid {
  Lattice lattice;
  std::vector<int> index;      // j of the top boundary node
  std::vector<double> height;  // index * dy

  double at(long ix, long iz = 0) const { return height[lattice.index(ix, iz)]; }
  int index_at(long ix, long iz = 0) const { return index[lattice.index(ix, iz)]; }
};

SurfaceGrid rasterize_surface(const TerrainSample& terrain, double dy, int max_index);

template <int Dim>
struct Ground {
  SurfaceGrid surface;
  BoundaryField<Dim> boundary;
  double inlet_height = 0.0;
};

// Surface and every node below it become ground nodes with the column normal
// estimated by central differences of the rasterized height; walls fill the
// remaining sides of the domain.
template <int Dim>
Ground<Dim> rasterize_boundary(const TerrainSample& terrain, const GridLayout<Dim>& layout, int wall_band = 2);

struct Dataset {
  int dimension = 2;
  Lattice lattice;
  TerrainHyper hyper;
  std::uint64_t master_seed = 0;
  std::vector<TerrainSample> terrains;
  std::vector<long> train;
  std::vector<long> test;
};

Dataset dataset_build(long n_train, long n_test, const TerrainHyper& hyper, const Lattice& lattice, int dimension,
                      std::uint64_t master_seed);

void write_terrain(const std::filesystem::path& path, const TerrainSample& terrain);
TerrainSample read_terrain(const std::filesystem::path& path);

// dataset/manifest.json + dataset/terrain_<idx>.bin
void write_dataset(const std::filesystem::path& dir, const Dataset& dataset);
Dataset read_dataset(const std::filesystem::path& dir);

}  // namespace codesign
