#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace codesign {

template <int Dim>
using Vec = Eigen::Matrix<double, Dim, 1>;
template <int Dim>
using Mat = Eigen::Matrix<double, Dim, Dim>;
template <int Dim>
using IVec = Eigen::Matrix<int, Dim, 1>;

// Rotation-like quantities: a single angle in 2D, an axis-angle vector in 3D.
template <int Dim>
using RotVec = Eigen::Matrix<double, Dim == 2 ? 1 : 3, 1>;

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Axis index of the vertical (gravity) direction.
inline constexpr int kVertical = 1;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SimulationError : public std::runtime_error {
 public:
  SimulationError(const std::string& what, long step, long particle)
      : std::runtime_error(what), step_(step), particle_(particle) {}

  long step() const { return step_; }
  long particle() const { return particle_; }

 private:
  long step_;
  long particle_;
};

class GradientError : public std::runtime_error {
 public:
  GradientError(const std::string& what, std::string block)
      : std::runtime_error(what), block_(std::move(block)) {}

  const std::string& block() const { return block_; }

 private:
  std::string block_;
};

// SplitMix64 mixing of (master, stream); used to derive independent seeds.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

}  // namespace codesign
