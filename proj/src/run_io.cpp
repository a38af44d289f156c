#include "codesign/run_io.hpp"

#include <bit>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <memory>
#include <sstream>

#include <Eigen/Core>

namespace codesign {

static_assert(std::endian::native == std::endian::little, "controller files assume a little-endian host");

using nlohmann::json;

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

File open_write(const fs::path& path) {
  File f(std::fopen(path.c_str(), "w"));
  if (!f) throw std::runtime_error("cannot write " + path.string());
  return f;
}

const char* kAxes[3] = {"x", "y", "z"};

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  for (std::string cell; std::getline(ss, cell, ',');) out.push_back(cell);
  return out;
}

}  // namespace

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw std::runtime_error("cannot create directory " + dir.string());
}

template <int Dim>
void write_design_csv(const fs::path& path, const std::vector<Vec<Dim>>& rest, const DesignVariables& vars,
                      const MaterializedDesign& design) {
  File f = open_write(path);
  std::fputs("id", f.get());
  for (int a = 0; a < Dim; ++a) std::fprintf(f.get(), ",%s0", kAxes[a]);
  std::fputs(",phi,gamma", f.get());
  for (long j = 0; j < design.xi.cols(); ++j) std::fprintf(f.get(), ",xi_%ld", j + 1);
  std::fputc('\n', f.get());
  for (std::size_t i = 0; i < rest.size(); ++i) {
    std::fprintf(f.get(), "%zu", i);
    for (int a = 0; a < Dim; ++a) std::fprintf(f.get(), ",%.17g", rest[i][a]);
    std::fprintf(f.get(), ",%.17g,%.17g", vars.phi[i], design.gamma[i]);
    for (long j = 0; j < design.xi.cols(); ++j) std::fprintf(f.get(), ",%.17g", design.xi(i, j));
    std::fputc('\n', f.get());
  }
}

DesignTable read_design_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open design " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("design " + path.string() + " is empty");
  const auto header = split(line);
  DesignTable t;
  t.dimension = 0;
  while (t.dimension < 3 && 1 + t.dimension < static_cast<int>(header.size()) &&
         header[1 + t.dimension] == std::string(kAxes[t.dimension]) + "0")
    ++t.dimension;
  const int offset = 1 + t.dimension;
  if (t.dimension < 2 || static_cast<int>(header.size()) < offset + 3 || header[offset] != "phi" ||
      header[offset + 1] != "gamma")
    throw ConfigError("design " + path.string() + " has an unexpected header");
  const long n_xi = static_cast<long>(header.size()) - offset - 2;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != header.size()) throw ConfigError("design " + path.string() + " has a ragged row");
    std::vector<double> r;
    for (std::size_t c = 1; c < cells.size(); ++c) r.push_back(std::stod(cells[c]));
    rows.push_back(std::move(r));
  }
  const long n = static_cast<long>(rows.size());
  t.phi.resize(n);
  t.gamma.resize(n);
  t.xi.resize(n, n_xi);
  for (long i = 0; i < n; ++i) {
    const auto& r = rows[i];
    t.x0.emplace_back(Eigen::Map<const Eigen::VectorXd>(r.data(), t.dimension));
    t.phi[i] = r[t.dimension];
    t.gamma[i] = r[t.dimension + 1];
    for (long j = 0; j < n_xi; ++j) t.xi(i, j) = r[t.dimension + 2 + j];
  }
  return t;
}

void write_controller(const fs::path& dir, const ControllerWeights& w, std::uint64_t seed,
                      const SensorConfig& s) {
  {
    std::ofstream out(dir / "controller.bin", std::ios::binary);
    out.write(reinterpret_cast<const char*>(w.params.data()),
              static_cast<std::streamsize>(w.params.size() * sizeof(double)));
    if (!out) throw std::runtime_error("cannot write " + (dir / "controller.bin").string());
  }
  json j;
  j["n_ff"] = w.shape.n_ff;
  j["n_fb"] = w.shape.n_fb;
  j["n_act"] = w.shape.n_act;
  j["n_input"] = w.shape.n_input();
  j["n_hidden"] = w.shape.n_hidden();
  j["param_count"] = w.shape.param_count();
  j["layout"] = "w1 (row-major n_hidden x n_input), b1, w2 (row-major n_act x n_hidden), b2";
  j["seed"] = seed;
  j["c_act"] = w.c_act;
  j["sensor"] = {{"window", s.window},       {"c_fb", s.c_fb},           {"y_offset", s.y_offset},
                 {"n_ff", s.n_ff},           {"omega_min", s.omega_min}, {"omega_max", s.omega_max},
                 {"stride", s.stride},       {"patch", s.patch}};
  write_json(dir / "controller.json", j);
}

ControllerWeights read_controller(const fs::path& dir) {
  const json j = read_json(dir / "controller.json");
  ControllerShape shape{j.at("n_ff").get<int>(), j.at("n_fb").get<int>(), j.at("n_act").get<int>()};
  ControllerWeights w(shape, j.at("c_act").get<double>());
  std::ifstream in(dir / "controller.bin", std::ios::binary);
  if (!in) throw ConfigError("cannot open " + (dir / "controller.bin").string());
  in.read(reinterpret_cast<char*>(w.params.data()), static_cast<std::streamsize>(w.params.size() * sizeof(double)));
  if (in.gcount() != static_cast<std::streamsize>(w.params.size() * sizeof(double)) || in.peek() != EOF)
    throw ConfigError("controller.bin does not hold " + std::to_string(w.params.size()) + " parameters");
  return w;
}

void write_history_csv(const fs::path& path, const std::vector<HistoryRow>& history) {
  File f = open_write(path);
  std::fputs("iter,Ln,F_ma,Cto,Clay,kappa_to,kappa_lay,tau_to,tau_lay\n", f.get());
  for (const auto& r : history)
    std::fprintf(f.get(), "%ld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.iter, r.Ln, r.F_ma,
                 r.c.topology, r.c.layout, r.m.kappa_to, r.m.kappa_lay, r.m.tau_to, r.m.tau_lay);
}

void write_metrics_csv(const fs::path& path, const std::vector<EpisodeMetrics>& metrics) {
  File f = open_write(path);
  std::fputs("iter,terrain_id,F,travel,posture_term,Cto,Clay,Ln\n", f.get());
  for (const auto& m : metrics)
    std::fprintf(f.get(), "%ld,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", m.iter, m.terrain_id, m.loss.F,
                 m.loss.travel, m.loss.posture_term, m.c.topology, m.c.layout, m.Ln);
}

template <int Dim>
void write_snapshot_csv(const fs::path& path, const Snapshot<Dim>& snap, const MaterializedDesign& design) {
  File f = open_write(path);
  std::fputs("id", f.get());
  for (int a = 0; a < Dim; ++a) std::fprintf(f.get(), ",%s", kAxes[a]);
  std::fputs(",gamma,act_channel,a_signal\n", f.get());
  for (std::size_t i = 0; i < snap.x.size(); ++i) {
    Eigen::Index channel = 0;
    design.xi.row(i).maxCoeff(&channel);
    std::fprintf(f.get(), "%zu", i);
    for (int a = 0; a < Dim; ++a) std::fprintf(f.get(), ",%.17g", snap.x[i][a]);
    std::fprintf(f.get(), ",%.17g,%ld,%.17g\n", design.gamma[i], static_cast<long>(channel) + 1, snap.actuation[i]);
  }
}

template <int Dim>
void write_snapshots(const fs::path& dir, const Trajectory<Dim>& traj, const MaterializedDesign& design) {
  ensure_dir(dir);
  for (const auto& s : traj.snapshots) {
    char name[64];
    std::snprintf(name, sizeof name, "frame_%06ld.csv", s.step);
    write_snapshot_csv<Dim>(dir / name, s, design);
  }
}

template <int Dim>
void write_signals_csv(const fs::path& path, const Trajectory<Dim>& traj, double dt) {
  File f = open_write(path);
  std::fputs("step,t", f.get());
  for (int a = 0; a < Dim; ++a) std::fprintf(f.get(), ",%sc", kAxes[a]);
  std::fputs(",theta_sq", f.get());
  const long n_act = traj.signals.empty() ? 0 : traj.signals.front().size();
  for (long j = 0; j < n_act; ++j) std::fprintf(f.get(), ",a_%ld", j + 1);
  std::fputc('\n', f.get());
  for (long k = 0; k < traj.steps; ++k) {
    std::fprintf(f.get(), "%ld,%.17g", k, static_cast<double>(k) * dt);
    for (int a = 0; a < Dim; ++a) std::fprintf(f.get(), ",%.17g", traj.centroid[k][a]);
    std::fprintf(f.get(), ",%.17g", traj.angle_sq[k]);
    if (k < static_cast<long>(traj.signals.size()))
      for (long j = 0; j < n_act; ++j) std::fprintf(f.get(), ",%.17g", traj.signals[k][j]);
    std::fputc('\n', f.get());
  }
}

void write_evaluate_csv(const fs::path& path, const std::vector<EvaluationRow>& rows) {
  File f = open_write(path);
  std::fputs("label,terrain_id,travel,F,posture_term\n", f.get());
  for (const auto& r : rows)
    std::fprintf(f.get(), "%s,%ld,%.17g,%.17g,%.17g\n", r.label.c_str(), r.terrain_id, r.loss.travel, r.loss.F,
                 r.loss.posture_term);
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  out << j.dump(2) << "\n";
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + " is not valid JSON: " + e.what());
  }
}

json manifest_base(const std::string& command, std::uint64_t seed) {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  json j;
  j["command"] = command;
  j["seed"] = seed;
  j["started_utc"] = stamp;
  j["versions"] = {{"codesign", kVersion},
                   {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                 std::to_string(EIGEN_MINOR_VERSION)},
                   {"json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                   {"compiler", __VERSION__}};
  return j;
}

#define CODESIGN_RUN_IO(D)                                                                                         \
  template void write_design_csv<D>(const fs::path&, const std::vector<Vec<D>>&, const DesignVariables&,           \
                                    const MaterializedDesign&);                                                    \
  template void write_snapshot_csv<D>(const fs::path&, const Snapshot<D>&, const MaterializedDesign&);             \
  template void write_snapshots<D>(const fs::path&, const Trajectory<D>&, const MaterializedDesign&);              \
  template void write_signals_csv<D>(const fs::path&, const Trajectory<D>&, double);

CODESIGN_RUN_IO(2)
CODESIGN_RUN_IO(3)

}  // namespace codesign
