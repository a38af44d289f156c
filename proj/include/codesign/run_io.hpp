#pragma once

// Files of a run directory: design and controller exports, training history,
// per-episode metrics, snapshots, signal traces and evaluation tables.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "codesign/trainer.hpp"

namespace codesign {

namespace fs = std::filesystem;

inline constexpr const char* kVersion = "0.1.0";

void ensure_dir(const fs::path& dir);

// id,x0,y0[,z0],phi,gamma,xi_1..xi_{Nact+1}
template <int Dim>
void write_design_csv(const fs::path& path, const std::vector<Vec<Dim>>& rest, const DesignVariables& vars,
                      const MaterializedDesign& design);

struct DesignTable {
  int dimension = 2;
  std::vector<Eigen::VectorXd> x0;
  Eigen::VectorXd phi;
  Eigen::VectorXd gamma;
  RowMatrix xi;
};
DesignTable read_design_csv(const fs::path& path);

// controller.bin holds the flat parameters as little-endian doubles;
// controller.json records the shape, seed, c_act and sensor settings.
void write_controller(const fs::path& dir, const ControllerWeights& w, std::uint64_t seed,
                      const SensorConfig& sensor);
ControllerWeights read_controller(const fs::path& dir);

void write_history_csv(const fs::path& path, const std::vector<HistoryRow>& history);
void write_metrics_csv(const fs::path& path, const std::vector<EpisodeMetrics>& metrics);

// One frame: id,x,y[,z],gamma,act_channel,a_signal. act_channel is the
// 1-based dominant layout channel (N_act + 1 is the passive one).
template <int Dim>
void write_snapshot_csv(const fs::path& path, const Snapshot<Dim>& snap, const MaterializedDesign& design);

// snapshots/frame_<step>.csv for every recorded frame.
template <int Dim>
void write_snapshots(const fs::path& dir, const Trajectory<Dim>& traj, const MaterializedDesign& design);

// step,t,xc,yc[,zc],theta_sq,a_1..a_Nact
template <int Dim>
void write_signals_csv(const fs::path& path, const Trajectory<Dim>& traj, double dt);

struct EvaluationRow {
  std::string label;
  long terrain_id = 0;
  LossTerms loss;
};
void write_evaluate_csv(const fs::path& path, const std::vector<EvaluationRow>& rows);

void write_json(const fs::path& path, const nlohmann::json& j);
nlohmann::json read_json(const fs::path& path);

// Shared manifest fields: version strings and the start time.
nlohmann::json manifest_base(const std::string& command, std::uint64_t seed);

}  // namespace codesign
