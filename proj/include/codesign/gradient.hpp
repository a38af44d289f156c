#pragma once

// Reverse-mode gradient of the episode loss through the whole rollout, using
// checkpoints every K steps and recomputing each segment during the sweep.

#include <cstdint>
#include <string>
#include <vector>

#include "codesign/episode.hpp"

namespace codesign {

struct DesignGradient {
  Eigen::VectorXd phi;
  RowMatrix psi;
  Eigen::VectorXd controller;

  static DesignGradient zeros_like(const DesignVariables& v);
  DesignGradient& operator+=(const DesignGradient& o);
  DesignGradient& operator*=(double s);
};

// Throws GradientError naming the first block with a non-finite entry.
void require_finite(const DesignGradient& g);

struct EpisodeGradient {
  LossTerms loss;
  DesignGradient grad;
};

template <int Dim>
EpisodeGradient episode_gradient(const Scenario<Dim>& scenario, const DesignVariables& vars,
                                 const MaterializedDesign& design, const TerrainSample& terrain);

template <int Dim>
EpisodeGradient backward_rollout(const Scenario<Dim>& scenario, const DesignVariables& vars,
                                 const TerrainSample& terrain) {
  const MaterializedDesign design = materialize(vars, scenario.filter, scenario.design);
  return episode_gradient<Dim>(scenario, vars, design, terrain);
}

// Episode loss alone (forward pass only).
template <int Dim>
double episode_objective(const Scenario<Dim>& scenario, const DesignVariables& vars, const TerrainSample& terrain);

struct FdRow {
  std::string block;
  long probe_idx = 0;
  double adjoint = 0.0;
  double fd = 0.0;
  double rel_err = 0.0;
};

struct FdReport {
  std::vector<FdRow> rows;

  double max_rel_err() const;
  double max_rel_err(const std::string& block) const;
  double median_rel_err(const std::string& block) const;
};

// |a - f| / max(|a|, |f|, floor)
double relative_error(double adjoint, double fd, double floor = 1e-10);

// Compares adjoint entries against central differences at random coordinates,
// cycling through the phi, psi and controller blocks.
template <int Dim>
FdReport finite_diff_check(const Scenario<Dim>& scenario, const DesignVariables& vars, const TerrainSample& terrain,
                           int n_probes, double h, std::uint64_t seed);

}  // namespace codesign
