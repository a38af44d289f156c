#include "codesign/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

namespace codesign {

using nlohmann::json;

namespace {

// Every persisted field, visited with its dotted key path.
template <class Cfg, class F>
void visit_fields(Cfg& c, F&& f) {
  f("dimension", c.dimension);
  f("domain", c.domain);
  f("grid_spacing", c.grid_spacing);
  f("particle_spacing", c.particle_spacing);
  f("body_origin", c.body_origin);
  f("body_size", c.body_size);
  f("material.density", c.material.density);
  f("material.youngs_modulus", c.material.youngs_modulus);
  f("material.poisson_ratio", c.material.poisson_ratio);
  f("material.epsilon", c.material.epsilon);
  f("sim.dt", c.sim.dt);
  f("sim.duration", c.sim.duration);
  f("sim.viscosity", c.sim.viscosity);
  f("sim.gravity", c.sim.gravity);
  f("sim.checkpoint_every", c.sim.checkpoint_every);
  f("sim.wall_band", c.sim.wall_band);
  f("design.filter_radius", c.design.filter_radius);
  f("design.filter_power", c.design.filter_power);
  f("design.beta_topology", c.design.beta_topology);
  f("design.beta_layout", c.design.beta_layout);
  f("design.n_act", c.design.n_act);
  f("controller.window", c.controller.window);
  f("controller.c_fb", c.controller.c_fb);
  f("controller.n_ff", c.controller.n_ff);
  f("controller.freq_min", c.controller.freq_min);
  f("controller.freq_max", c.controller.freq_max);
  f("controller.c_act", c.controller.c_act);
  f("controller.stride", c.controller.stride);
  f("controller.patch", c.controller.patch);
  f("terrain.length_scale", c.terrain.length_scale);
  f("terrain.height_scale", c.terrain.height_scale);
  f("terrain.inlet_height", c.terrain.inlet_height);
  f("terrain.inlet_extent", c.terrain.inlet_extent);
  f("terrain.n_train", c.terrain.n_train);
  f("terrain.n_test", c.terrain.n_test);
  f("objective.target", c.objective.target);
  f("objective.w_theta", c.objective.w_theta);
  f("objective.theta_bar", c.objective.theta_bar);
  f("objective.alpha", c.objective.alpha);
  f("trainer.learning_rate", c.trainer.learning_rate);
  f("trainer.batch_size", c.trainer.batch_size);
  f("trainer.convergence_eps", c.trainer.convergence_eps);
  f("trainer.bound_topology", c.trainer.bound_topology);
  f("trainer.bound_layout", c.trainer.bound_layout);
  f("trainer.tau0", c.trainer.tau0);
  f("trainer.tau_growth", c.trainer.tau_growth);
  f("trainer.tau_max", c.trainer.tau_max);
  f("trainer.max_iterations", c.trainer.max_iterations);
  f("output.record_every_n_steps", c.output.record_every_n_steps);
  f("seed", c.seed);
}

json::json_pointer pointer_of(const std::string& key) {
  std::string p = "/" + key;
  for (auto& ch : p)
    if (ch == '.') ch = '/';
  return json::json_pointer(p);
}

// Leaf paths of j; arrays count as leaves.
void collect_keys(const json& j, const std::string& prefix, std::vector<std::string>& out) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (it->is_object())
      collect_keys(*it, key, out);
    else
      out.push_back(key);
  }
}

[[noreturn]] void bad(const std::string& key, const std::string& why) {
  throw ConfigError("config key '" + key + "': " + why);
}

bool on_lattice(double length, double dx) {
  const double n = std::round(length / dx);
  return n >= 1.0 && std::abs(n * dx - length) <= 1e-9 * std::max(1.0, length);
}

}  // namespace

RunConfig default_config(int dimension) {
  if (dimension != 2 && dimension != 3) bad("dimension", "must be 2 or 3");
  RunConfig c;
  c.dimension = dimension;
  c.domain.assign(dimension, 1.0);
  if (dimension == 2) {
    c.body_size = {0.2, 0.2};
    c.body_origin = {0.05, 0.1};
  } else {
    c.body_size = {0.15, 0.15, 0.15};
    c.body_origin = {0.05, 0.1, 0.425};
    c.design.n_act = 6;
    c.controller.window = 0.3;
    c.terrain.length_scale = 0.15;
    c.terrain.height_scale = 0.015;
    c.controller.c_fb = 1.0 / 0.015;
    c.terrain.n_train = 64;
    c.objective.w_theta = 5.0;
  }
  return c;
}

void validate(const RunConfig& c) {
  const int d = c.dimension;
  if (d != 2 && d != 3) bad("dimension", "must be 2 or 3");
  auto check_vec = [&](const char* key, const std::vector<double>& v) {
    if (static_cast<int>(v.size()) != d) bad(key, "needs " + std::to_string(d) + " entries");
  };
  check_vec("domain", c.domain);
  check_vec("body_origin", c.body_origin);
  check_vec("body_size", c.body_size);
  if (!(c.grid_spacing > 0.0)) bad("grid_spacing", "must be positive");
  for (int a = 0; a < d; ++a)
    if (!on_lattice(c.domain[a], c.grid_spacing)) bad("domain", "each side must be a multiple of grid_spacing");
  if (!(c.particle_spacing > 0.0)) bad("particle_spacing", "must be positive");
  for (int a = 0; a < d; ++a) {
    if (!on_lattice(c.body_size[a], c.particle_spacing))
      bad("body_size", "each side must be a multiple of particle_spacing");
    const double margin = c.sim.wall_band * c.grid_spacing;
    if (c.body_origin[a] < margin || c.body_origin[a] + c.body_size[a] > c.domain[a] - margin)
      bad("body_origin", "design domain must lie inside the walls");
  }
  if (!(c.material.density > 0.0)) bad("material.density", "must be positive");
  if (!(c.material.youngs_modulus > 0.0)) bad("material.youngs_modulus", "must be positive");
  if (!(c.material.poisson_ratio > -1.0 && c.material.poisson_ratio < 0.5))
    bad("material.poisson_ratio", "must lie in (-1, 0.5)");
  if (!(c.material.epsilon > 0.0 && c.material.epsilon < 1.0)) bad("material.epsilon", "must lie in (0, 1)");

  if (!(c.sim.dt > 0.0)) bad("sim.dt", "must be positive");
  if (!(c.sim.duration > 0.0)) bad("sim.duration", "must be positive");
  const double steps = c.sim.duration / c.sim.dt;
  if (std::abs(steps - std::round(steps)) > 1e-6 * steps)
    bad("sim.duration", "duration / dt = " + std::to_string(steps) + " is not a whole number of steps");
  if (!(c.sim.viscosity >= 0.0)) bad("sim.viscosity", "must be non-negative");
  if (c.sim.checkpoint_every < 1 || std::lround(steps) % c.sim.checkpoint_every != 0)
    bad("sim.checkpoint_every", "must divide the step count " + std::to_string(std::lround(steps)));
  if (c.sim.wall_band < 1) bad("sim.wall_band", "must be at least 1");

  if (!(c.design.filter_radius > 0.0)) bad("design.filter_radius", "must be positive");
  if (!(c.design.filter_power > 0.0)) bad("design.filter_power", "must be positive");
  if (!(c.design.beta_topology > 0.0)) bad("design.beta_topology", "must be positive");
  if (!(c.design.beta_layout > 0.0)) bad("design.beta_layout", "must be positive");
  if (c.design.n_act < 1) bad("design.n_act", "must be at least 1");

  if (!(c.controller.window >= 0.0)) bad("controller.window", "must be non-negative");
  if (!(c.controller.c_fb > 0.0)) bad("controller.c_fb", "must be positive");
  if (c.controller.n_ff < 2 || c.controller.n_ff % 2 != 0) bad("controller.n_ff", "must be even and at least 2");
  if (!(c.controller.freq_min > 0.0 && c.controller.freq_max >= c.controller.freq_min))
    bad("controller.freq_max", "needs 0 < freq_min <= freq_max");
  if (!(c.controller.c_act >= 0.0)) bad("controller.c_act", "must be non-negative");
  if (c.controller.stride < 1) bad("controller.stride", "must be at least 1");
  if (c.controller.patch < 1 || c.controller.patch % 2 == 0) bad("controller.patch", "must be odd and positive");

  if (!(c.terrain.length_scale > 0.0)) bad("terrain.length_scale", "must be positive");
  if (!(c.terrain.height_scale >= 0.0)) bad("terrain.height_scale", "must be non-negative");
  if (!(c.terrain.inlet_extent > 0.0 && c.terrain.inlet_extent < c.domain[0]))
    bad("terrain.inlet_extent", "must lie inside the domain");
  if (c.terrain.inlet_height < 3.0 * c.terrain.height_scale + c.grid_spacing)
    bad("terrain.inlet_height", "must be at least 3 height_scale + grid_spacing above the floor");
  if (c.terrain.inlet_height > c.domain[kVertical] - c.sim.wall_band * c.grid_spacing)
    bad("terrain.inlet_height", "must lie below the ceiling walls");
  if (c.terrain.n_train < 1) bad("terrain.n_train", "must be at least 1");
  if (c.terrain.n_test < 0) bad("terrain.n_test", "must be non-negative");

  if (!(c.objective.target > 0.0)) bad("objective.target", "must be positive");
  if (!(c.objective.theta_bar > 0.0)) bad("objective.theta_bar", "must be positive");
  if (!(c.objective.w_theta >= 0.0)) bad("objective.w_theta", "must be non-negative");
  if (!(c.objective.alpha >= 0.0)) bad("objective.alpha", "must be non-negative");

  if (!(c.trainer.learning_rate > 0.0)) bad("trainer.learning_rate", "must be positive");
  if (c.trainer.batch_size < 1 || c.terrain.n_train % c.trainer.batch_size != 0)
    bad("trainer.batch_size", "must divide terrain.n_train");
  if (!(c.trainer.convergence_eps >= 0.0)) bad("trainer.convergence_eps", "must be non-negative");
  if (!(c.trainer.tau0 > 0.0)) bad("trainer.tau0", "must be positive");
  if (!(c.trainer.tau_growth >= 1.0)) bad("trainer.tau_growth", "must be at least 1");
  if (!(c.trainer.tau_max >= c.trainer.tau0)) bad("trainer.tau_max", "must be at least tau0");
  if (c.trainer.max_iterations < 1) bad("trainer.max_iterations", "must be positive");
  if (c.output.record_every_n_steps < 0) bad("output.record_every_n_steps", "must be non-negative");
}

json to_json(const RunConfig& cfg) {
  json j = json::object();
  visit_fields(cfg, [&](const char* key, const auto& v) { j[pointer_of(key)] = v; });
  return j;
}

RunConfig from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  if (!j.contains("dimension")) bad("dimension", "required key is missing");
  int dim = 0;
  try {
    dim = j.at("dimension").get<int>();
  } catch (const json::exception&) {
    bad("dimension", "must be an integer");
  }
  RunConfig c = default_config(dim);
  std::set<std::string> known;
  visit_fields(c, [&](const char* key, auto& v) {
    known.insert(key);
    const auto ptr = pointer_of(key);
    if (!j.contains(ptr)) return;
    try {
      j.at(ptr).get_to(v);
    } catch (const json::exception& e) {
      bad(key, std::string("wrong type (") + e.what() + ")");
    }
  });
  std::vector<std::string> keys;
  collect_keys(j, "", keys);
  for (const auto& k : keys)
    if (!known.count(k)) bad(k, "unknown key");

  // Quantities defined relative to others follow them unless set explicitly.
  if (!j.contains(pointer_of("particle_spacing")) && j.contains(pointer_of("grid_spacing")))
    c.particle_spacing = c.grid_spacing / 2.0;
  if (!j.contains(pointer_of("design.filter_radius")) &&
      (j.contains(pointer_of("particle_spacing")) || j.contains(pointer_of("grid_spacing"))))
    c.design.filter_radius = 1.5 * c.particle_spacing;
  if (!j.contains(pointer_of("controller.c_fb")) && j.contains(pointer_of("terrain.height_scale")) &&
      c.terrain.height_scale > 0.0)
    c.controller.c_fb = 1.0 / c.terrain.height_scale;
  validate(c);
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(j);
}

void save_config(const std::filesystem::path& path, const RunConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << to_json(cfg).dump(2) << "\n";
}

double lame_lambda(double E, double nu) { return E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu)); }
double lame_mu(double E, double nu) { return E / (2.0 * (1.0 + nu)); }

namespace {

SensorConfig sensor_config(const RunConfig& c) {
  SensorConfig s;
  s.window = c.controller.window;
  s.c_fb = c.controller.c_fb;
  s.n_ff = c.controller.n_ff;
  s.omega_min = 2.0 * 3.14159265358979323846 * c.controller.freq_min;
  s.omega_max = 2.0 * 3.14159265358979323846 * c.controller.freq_max;
  s.stride = c.controller.stride;
  s.patch = c.controller.patch;
  return s;
}

}  // namespace

DerivedQuantities derive(const RunConfig& c) {
  DerivedQuantities d;
  d.lambda = lame_lambda(c.material.youngs_modulus, c.material.poisson_ratio);
  d.mu = lame_mu(c.material.youngs_modulus, c.material.poisson_ratio);
  d.steps = std::lround(c.sim.duration / c.sim.dt);
  d.particles = 1;
  for (int a = 0; a < c.dimension; ++a) d.particles *= std::lround(c.body_size[a] / c.particle_spacing);
  d.n_fb = make_feedback_layout(sensor_config(c), c.grid_spacing, c.dimension).size();
  d.n_input = c.controller.n_ff + d.n_fb;
  d.n_hidden = ControllerShape{c.controller.n_ff, d.n_fb, c.design.n_act}.n_hidden();
  d.y_offset = c.body_origin[kVertical] + 0.5 * c.body_size[kVertical] - c.terrain.inlet_height;
  return d;
}

template <int Dim>
Scenario<Dim> make_scenario(const RunConfig& c) {
  if (c.dimension != Dim) throw ConfigError("config dimension does not match the requested scenario");
  validate(c);
  const DerivedQuantities d = derive(c);
  Scenario<Dim> sc;
  sc.layout.dx = c.grid_spacing;
  for (int a = 0; a < Dim; ++a) sc.layout.cells[a] = static_cast<int>(std::lround(c.domain[a] / c.grid_spacing));
  sc.sim.dt = c.sim.dt;
  sc.sim.duration = c.sim.duration;
  sc.sim.gravity = c.sim.gravity * Vec<Dim>::Unit(kVertical);
  Vec<Dim> origin, size;
  for (int a = 0; a < Dim; ++a) {
    origin[a] = c.body_origin[a];
    size[a] = c.body_size[a];
  }
  sc.rest = block_positions<Dim>(origin, size, c.particle_spacing);
  sc.design.beta_topology = c.design.beta_topology;
  sc.design.beta_layout = c.design.beta_layout;
  sc.design.base.rho = c.material.density;
  sc.design.base.lambda = d.lambda;
  sc.design.base.mu = d.mu;
  sc.design.base.eta = c.sim.viscosity;
  sc.design.base.epsilon = c.material.epsilon;
  sc.design.volume = std::pow(c.particle_spacing, Dim);
  sc.filter = DesignFilter(sc.rest, c.design.filter_radius, c.design.filter_power);
  sc.sensor = sensor_config(c);
  sc.sensor.y_offset = d.y_offset;
  sc.feedback = make_feedback_layout(sc.sensor, c.grid_spacing, Dim);
  sc.objective.target = c.objective.target;
  sc.objective.duration = c.sim.duration;
  sc.objective.w_theta = c.objective.w_theta;
  sc.objective.theta_bar = c.objective.theta_bar;
  sc.objective.alpha = c.objective.alpha;
  sc.n_act = c.design.n_act;
  sc.checkpoint_every = c.sim.checkpoint_every;
  sc.wall_band = c.sim.wall_band;
  return sc;
}

TerrainHyper terrain_hyper(const RunConfig& c) {
  TerrainHyper h;
  h.length_scale = c.terrain.length_scale;
  h.height_scale = c.terrain.height_scale;
  h.inlet_height = c.terrain.inlet_height;
  h.inlet_extent = c.terrain.inlet_extent;
  return h;
}

Lattice terrain_lattice(const RunConfig& c) {
  Lattice l;
  l.dx = l.dz = c.grid_spacing;
  l.nx = std::lround(c.domain[0] / c.grid_spacing) + 1;
  l.nz = c.dimension == 3 ? std::lround(c.domain[2] / c.grid_spacing) + 1 : 1;
  return l;
}

std::uint64_t terrain_seed(const RunConfig& c) { return derive_seed(c.seed, 1); }
std::uint64_t controller_seed(const RunConfig& c) { return derive_seed(c.seed, 2); }
std::uint64_t trainer_seed(const RunConfig& c) { return derive_seed(c.seed, 3); }

Dataset build_dataset(const RunConfig& c) {
  return dataset_build(c.terrain.n_train, c.terrain.n_test, terrain_hyper(c), terrain_lattice(c), c.dimension,
                       terrain_seed(c));
}

TrainerConfig trainer_config(const RunConfig& c, int threads) {
  TrainerConfig t;
  t.adam.learning_rate = c.trainer.learning_rate;
  t.batch_size = c.trainer.batch_size;
  t.convergence_eps = c.trainer.convergence_eps;
  t.bounds = {c.trainer.bound_topology, c.trainer.bound_layout};
  t.tau0 = c.trainer.tau0;
  t.tau_growth = c.trainer.tau_growth;
  t.tau_max = c.trainer.tau_max;
  t.max_iterations = c.trainer.max_iterations;
  t.threads = std::max(threads, 1);
  t.seed = trainer_seed(c);
  return t;
}

template <int Dim>
DesignVariables initial_variables(const RunConfig& c, const Scenario<Dim>& sc) {
  DesignVariables v;
  const long n = sc.particle_count();
  v.phi = Eigen::VectorXd::Zero(n);
  v.psi = RowMatrix::Zero(n, sc.n_act + 1);
  v.controller = xavier_init(sc.controller_shape(), c.controller.c_act, controller_seed(c));
  return v;
}

template Scenario<2> make_scenario<2>(const RunConfig&);
template Scenario<3> make_scenario<3>(const RunConfig&);
template DesignVariables initial_variables<2>(const RunConfig&, const Scenario<2>&);
template DesignVariables initial_variables<3>(const RunConfig&, const Scenario<3>&);

}  // namespace codesign
