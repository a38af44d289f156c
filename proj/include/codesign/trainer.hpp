#pragma once

// Mini-batch Adam over (phi, psi, controller) with augmented-Lagrangian
// handling of the two binarization constraints.

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "codesign/gradient.hpp"

namespace codesign {

struct AdamConfig {
  double learning_rate = 0.02;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  DesignGradient m, v;
  long step = 0;

  static AdamState zeros_like(const DesignVariables& vars);
};

struct TrainerConfig {
  AdamConfig adam;
  int batch_size = 4;
  double convergence_eps = 0.05;  // on window sums of L
  ConstraintBounds bounds;
  double tau0 = 1e-3;
  double tau_growth = 1.5;
  double tau_max = 100.0;
  long max_iterations = 3000;
  int threads = 1;
  std::uint64_t seed = 0;
};

using Batches = std::vector<std::vector<int>>;

// Runs fn(0..n-1) on up to `threads` workers; the first exception (by index)
// is rethrown after all workers finish.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

// Random permutation of 0..n_data-1 cut into n_data / batch_size batches.
Batches make_batches(int n_data, int batch_size, std::mt19937_64& rng);

// One bias-corrected Adam step; increments state.step.
void adam_update(DesignVariables& vars, const DesignGradient& grad, AdamState& state, const AdamConfig& cfg);

// Only violated constraints move: kappa -= tau * violation, tau grows up to tau_max.
void update_multipliers(Multipliers& m, const Constraints& c, const ConstraintBounds& bounds, double growth,
                        double tau_max);

bool feasible(const Constraints& c, const ConstraintBounds& bounds);

struct HistoryRow {
  long iter = 0;  // 1-based
  double Ln = 0.0;
  double F_batch = 0.0;   // mean F over the batch
  double F_ma = 0.0;      // mean of F_batch over the trailing epoch window
  double weight_sq = 0.0; // |w|^2
  Constraints c;
  Multipliers m;  // values used to evaluate Ln
};

struct EpisodeMetrics {
  long iter = 0;
  int terrain_id = 0;
  LossTerms loss;
  Constraints c;
  double Ln = 0.0;
};

struct TrainResult {
  DesignVariables vars;
  std::vector<HistoryRow> history;
  std::vector<EpisodeMetrics> metrics;
  Multipliers multipliers;
  std::string termination;  // "converged" or "iteration_cap"
  bool warning = false;
  long best_iter = 0;       // iterate returned when the cap was hit
};

using ProgressFn = std::function<void(const HistoryRow&)>;

// Batch objective L_n and its gradient at the current variables.
struct BatchEvaluation {
  double Ln = 0.0;
  double F_batch = 0.0;
  double weight_sq = 0.0;
  Constraints c;
  DesignGradient grad;
  std::vector<EpisodeGradient> episodes;
};

template <int Dim>
BatchEvaluation evaluate_batch(const Scenario<Dim>& scenario, const DesignVariables& vars,
                               const std::vector<TerrainSample>& terrains, const std::vector<int>& batch,
                               const Multipliers& m, const TrainerConfig& cfg);

// Forward rollouts of one design over several terrains, in input order.
template <int Dim>
std::vector<LossTerms> evaluate_design(const Scenario<Dim>& scenario, const MaterializedDesign& design,
                                       const ControllerWeights& controller, const std::vector<TerrainSample>& terrains,
                                       int threads);

template <int Dim>
TrainResult train(const Scenario<Dim>& scenario, const std::vector<TerrainSample>& train_set,
                  const DesignVariables& initial, const TrainerConfig& cfg, const ProgressFn& progress = {});

}  // namespace codesign
