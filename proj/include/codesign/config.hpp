#pragma once

// Run configuration: JSON on disk, defaults per dimension, validation, and
// assembly of the scenario, dataset and trainer settings it describes.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "codesign/trainer.hpp"

namespace codesign {

struct RunConfig {
  int dimension = 2;
  std::vector<double> domain;          // L per axis, m
  double grid_spacing = 0.0125;
  double particle_spacing = 0.00625;
  std::vector<double> body_origin;     // lower corner of the design domain
  std::vector<double> body_size;

  struct Material {
    double density = 1000.0;
    double youngs_modulus = 1e5;
    double poisson_ratio = 0.4;
    double epsilon = 1e-5;
    bool operator==(const Material&) const = default;
  } material;

  struct Sim {
    double dt = 1e-4;
    double duration = 1.0;
    double viscosity = 100.0;
    double gravity = -9.8;
    long checkpoint_every = 50;
    int wall_band = 2;
    bool operator==(const Sim&) const = default;
  } sim;

  struct Design {
    double filter_radius = 0.009375;  // 1.5 particle spacings
    double filter_power = 2.0;
    double beta_topology = 4.0;
    double beta_layout = 4.0;
    int n_act = 4;
    bool operator==(const Design&) const = default;
  } design;

  struct Controller {
    double window = 0.4;
    double c_fb = 50.0;
    int n_ff = 56;
    double freq_min = 2.0;  // Hz
    double freq_max = 8.0;
    double c_act = 2e4;
    int stride = 3;
    int patch = 3;
    bool operator==(const Controller&) const = default;
  } controller;

  struct Terrain {
    double length_scale = 0.2;
    double height_scale = 0.02;
    double inlet_height = 0.1;
    double inlet_extent = 0.3;
    long n_train = 32;
    long n_test = 32;
    bool operator==(const Terrain&) const = default;
  } terrain;

  struct Objective {
    double target = 0.7;
    double w_theta = 1.0;
    double theta_bar = 3.14159265358979323846 / 2.0;
    double alpha = 0.01;
    bool operator==(const Objective&) const = default;
  } objective;

  struct Trainer {
    double learning_rate = 0.02;
    int batch_size = 4;
    double convergence_eps = 0.05;
    double bound_topology = 0.05;
    double bound_layout = 0.05;
    double tau0 = 1e-3;
    double tau_growth = 1.5;
    double tau_max = 100.0;
    long max_iterations = 3000;
    bool operator==(const Trainer&) const = default;
  } trainer;

  struct Output {
    long record_every_n_steps = 100;
    bool operator==(const Output&) const = default;
  } output;

  std::uint64_t seed = 0;

  bool operator==(const RunConfig&) const = default;
};

// Defaults of the 2D or 3D walker.
RunConfig default_config(int dimension);

// Throws ConfigError with the offending key.
void validate(const RunConfig& cfg);

nlohmann::json to_json(const RunConfig& cfg);
// `dimension` is required; absent keys take the defaults for that dimension,
// unknown keys are rejected.
RunConfig from_json(const nlohmann::json& j);

RunConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const RunConfig& cfg);

struct DerivedQuantities {
  double lambda = 0.0;
  double mu = 0.0;
  long steps = 0;
  long particles = 0;
  int n_fb = 0;
  int n_input = 0;
  int n_hidden = 0;
  double y_offset = 0.0;  // for the fully solid design domain
};

double lame_lambda(double youngs, double poisson);
double lame_mu(double youngs, double poisson);
DerivedQuantities derive(const RunConfig& cfg);

template <int Dim>
Scenario<Dim> make_scenario(const RunConfig& cfg);

TerrainHyper terrain_hyper(const RunConfig& cfg);
Lattice terrain_lattice(const RunConfig& cfg);
Dataset build_dataset(const RunConfig& cfg);
TrainerConfig trainer_config(const RunConfig& cfg, int threads);

// phi = psi = 0 and Xavier-initialized controller weights.
template <int Dim>
DesignVariables initial_variables(const RunConfig& cfg, const Scenario<Dim>& scenario);

// Seeds of the independent random streams, all derived from cfg.seed.
std::uint64_t terrain_seed(const RunConfig& cfg);
std::uint64_t controller_seed(const RunConfig& cfg);
std::uint64_t trainer_seed(const RunConfig& cfg);

}  // namespace codesign
