// codesign: terrain generation, optimization, replay, evaluation and
// gradient checks for the soft-walker co-design pipeline.

#include <chrono>
#include <cstdio>
#include <iostream>
#include <optional>
#include <random>
#include <thread>

#include <CLI11.hpp>

#include "codesign/config.hpp"
#include "codesign/run_io.hpp"

using namespace codesign;

namespace {

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  int threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
};

void add_common(CLI::App* cmd, Common& c, bool config_required) {
  auto* opt = cmd->add_option("--config", c.config, "run configuration (JSON)");
  if (config_required) opt->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", c.out, "output directory")->required();
  cmd->add_option("--seed", c.seed, "override the configured master seed");
  cmd->add_option("--threads", c.threads, "episodes evaluated in parallel")->check(CLI::PositiveNumber);
}

RunConfig resolve(const Common& c, const fs::path& fallback = {}) {
  fs::path path = c.config;
  if (path.empty()) path = fallback / "config.json";
  RunConfig cfg = load_config(path);
  if (c.seed) cfg.seed = *c.seed;
  return cfg;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Dataset dataset_for(const RunConfig& cfg, const std::string& dir) {
  if (dir.empty()) return build_dataset(cfg);
  Dataset ds = read_dataset(dir);
  if (ds.dimension != cfg.dimension) throw ConfigError("dataset dimension does not match the config");
  return ds;
}

std::vector<TerrainSample> pick(const Dataset& ds, const std::vector<long>& ids) {
  std::vector<TerrainSample> out;
  for (long i : ids) out.push_back(ds.terrains.at(i));
  return out;
}

int cmd_gen_terrain(const Common& c) {
  const RunConfig cfg = resolve(c);
  const auto t0 = std::chrono::steady_clock::now();
  const Dataset ds = build_dataset(cfg);
  const fs::path out = c.out;
  ensure_dir(out);
  write_dataset(out / "dataset", ds);
  save_config(out / "config.json", cfg);
  auto m = manifest_base("gen-terrain", cfg.seed);
  m["wall_time_s"] = seconds_since(t0);
  m["terrains"] = ds.terrains.size();
  write_json(out / "manifest.json", m);
  return 0;
}

template <int Dim>
int run_optimize(const RunConfig& cfg, const Common& c, const std::string& dataset_dir, bool quiet) {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path out = c.out;
  ensure_dir(out);
  save_config(out / "config.json", cfg);
  const Scenario<Dim> sc = make_scenario<Dim>(cfg);
  const Dataset ds = dataset_for(cfg, dataset_dir);
  if (dataset_dir.empty()) write_dataset(out / "dataset", ds);
  const DesignVariables init = initial_variables<Dim>(cfg, sc);
  const TrainerConfig tc = trainer_config(cfg, c.threads);

  const TrainResult res = train<Dim>(sc, pick(ds, ds.train), init, tc, [&](const HistoryRow& r) {
    if (!quiet)
      std::fprintf(stderr, "iter %ld  Ln %.5f  F_ma %.5f  Cto %.4f  Clay %.4f\n", r.iter, r.Ln, r.F_ma,
                   r.c.topology, r.c.layout);
  });

  const MaterializedDesign design = materialize(res.vars, sc.filter, sc.design);
  write_history_csv(out / "history.csv", res.history);
  write_metrics_csv(out / "metrics.csv", res.metrics);
  write_design_csv<Dim>(out / "design.csv", sc.rest, res.vars, design);
  SensorConfig sensor = sc.sensor;
  sensor.y_offset = centroid<Dim>(sc.rest, design.gamma)[kVertical] - cfg.terrain.inlet_height;
  write_controller(out, res.vars.controller, controller_seed(cfg), sensor);

  auto m = manifest_base("optimize", cfg.seed);
  m["wall_time_s"] = seconds_since(t0);
  m["termination"] = res.termination;
  if (res.warning)
    m["warning"] = res.best_iter <= static_cast<long>(res.history.size())
                       ? "iteration cap reached; returned the best feasible iterate seen"
                       : "iteration cap reached with no feasible iterate; returned the last one";
  m["iterations"] = res.history.size();
  m["returned_iter"] = res.best_iter;
  m["multipliers"] = {{"kappa_to", res.multipliers.kappa_to}, {"kappa_lay", res.multipliers.kappa_lay},
                      {"tau_to", res.multipliers.tau_to}, {"tau_lay", res.multipliers.tau_lay}};
  const Constraints fc = binarization_constraints(design.gamma, design.xi, sc.n_act);
  m["final_constraints"] = {{"Cto", fc.topology}, {"Clay", fc.layout}};
  write_json(out / "manifest.json", m);
  if (res.warning) std::fprintf(stderr, "warning: iteration cap reached before convergence\n");
  return 0;
}

struct Replay {
  MaterializedDesign design;
  ControllerWeights controller;
};

template <int Dim>
Replay load_run(const fs::path& run, const Scenario<Dim>& sc) {
  const DesignTable t = read_design_csv(run / "design.csv");
  if (t.dimension != Dim || t.gamma.size() != sc.particle_count() || t.xi.cols() != sc.n_act + 1)
    throw ConfigError("design.csv does not match the configured scenario");
  for (long i = 0; i < sc.particle_count(); ++i)
    if ((t.x0[i] - sc.rest[i]).norm() > 1e-9) throw ConfigError("design.csv particle positions differ from the config");
  Replay r{materialize_fields(t.gamma, t.xi, sc.design), read_controller(run)};
  if (r.controller.shape.n_input() != sc.controller_shape().n_input() || r.controller.shape.n_act != sc.n_act)
    throw ConfigError("controller files do not match the configured scenario");
  return r;
}

template <int Dim>
int run_rollout(const RunConfig& cfg, const Common& c, const fs::path& run, const std::string& dataset_dir,
                long terrain_id) {
  const auto t0 = std::chrono::steady_clock::now();
  const Scenario<Dim> sc = make_scenario<Dim>(cfg);
  const Replay r = load_run<Dim>(run, sc);
  const Dataset ds = dataset_for(cfg, dataset_dir.empty() && fs::exists(run / "dataset") ? (run / "dataset").string()
                                                                                           : dataset_dir);
  if (terrain_id < 0) {
    if (ds.test.empty()) throw ConfigError("dataset has no test terrains; pass --terrain");
    terrain_id = ds.test.front();
  }
  if (terrain_id >= static_cast<long>(ds.terrains.size())) throw ConfigError("terrain id out of range");

  RolloutOptions opt;
  opt.snapshot_every = cfg.output.record_every_n_steps;
  opt.record_signals = true;
  const Trajectory<Dim> tr = rollout<Dim>(sc, r.design, r.controller, ds.terrains[terrain_id], opt);

  const fs::path out = c.out;
  ensure_dir(out);
  save_config(out / "config.json", cfg);
  EpisodeMetrics em;
  em.terrain_id = static_cast<int>(terrain_id);
  em.loss = tr.loss;
  em.c = binarization_constraints(r.design.gamma, r.design.xi, sc.n_act);
  em.Ln = tr.loss.F + 0.5 * cfg.objective.alpha * r.controller.params.squaredNorm();
  write_metrics_csv(out / "metrics.csv", {em});
  write_signals_csv<Dim>(out / "signals.csv", tr, sc.sim.dt);
  if (opt.snapshot_every > 0) write_snapshots<Dim>(out / "snapshots", tr, r.design);
  auto m = manifest_base("rollout", cfg.seed);
  m["wall_time_s"] = seconds_since(t0);
  m["run"] = run.string();
  m["terrain_id"] = terrain_id;
  m["travel"] = tr.loss.travel;
  m["F"] = tr.loss.F;
  write_json(out / "manifest.json", m);
  std::printf("terrain %ld  travel %.6f m  F %.6f\n", terrain_id, tr.loss.travel, tr.loss.F);
  return 0;
}

template <int Dim>
int run_evaluate(const RunConfig& cfg, const Common& c, const fs::path& run, const std::string& dataset_dir,
                 std::string label, bool on_train) {
  const auto t0 = std::chrono::steady_clock::now();
  const Scenario<Dim> sc = make_scenario<Dim>(cfg);
  const Replay r = load_run<Dim>(run, sc);
  const Dataset ds = dataset_for(cfg, dataset_dir.empty() && fs::exists(run / "dataset") ? (run / "dataset").string()
                                                                                           : dataset_dir);
  const std::vector<long>& ids = on_train ? ds.train : ds.test;
  if (ids.empty()) throw ConfigError("dataset split is empty");
  const auto losses = evaluate_design<Dim>(sc, r.design, r.controller, pick(ds, ids), c.threads);
  if (label.empty()) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "W=%g", cfg.controller.window);
    label = buf;
  }
  std::vector<EvaluationRow> rows;
  double mean_f = 0.0, mean_d = 0.0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    rows.push_back({label, ids[i], losses[i]});
    mean_f += losses[i].F / static_cast<double>(ids.size());
    mean_d += losses[i].travel / static_cast<double>(ids.size());
  }
  const fs::path out = c.out;
  ensure_dir(out);
  write_evaluate_csv(out / "evaluate.csv", rows);
  auto m = manifest_base("evaluate", cfg.seed);
  m["wall_time_s"] = seconds_since(t0);
  m["run"] = run.string();
  m["split"] = on_train ? "train" : "test";
  m["mean_F"] = mean_f;
  m["mean_travel"] = mean_d;
  write_json(out / "manifest.json", m);
  std::printf("%s: %zu terrains  mean travel %.6f m  mean F %.6f\n", label.c_str(), ids.size(), mean_d, mean_f);
  return 0;
}

template <int Dim>
int run_grad_check(const RunConfig& cfg, const Common& c, int probes, double h, double spread) {
  const Scenario<Dim> sc = make_scenario<Dim>(cfg);
  const TerrainHyper hyper = terrain_hyper(cfg);
  const Lattice lat = terrain_lattice(cfg);
  const TerrainSample terrain =
      make_terrain(GpSampler(lat, hyper.length_scale), lat, hyper, Dim, derive_seed(terrain_seed(cfg), 0));
  DesignVariables vars = initial_variables<Dim>(cfg, sc);
  // Away from phi = psi = 0 so that every block has a generic gradient.
  std::mt19937_64 rng(derive_seed(cfg.seed, 4));
  std::normal_distribution<double> nd(0.0, spread);
  for (long i = 0; i < vars.phi.size(); ++i) vars.phi[i] = nd(rng);
  for (long i = 0; i < vars.psi.size(); ++i) vars.psi.data()[i] = nd(rng);
  const FdReport rep = finite_diff_check<Dim>(sc, vars, terrain, probes, h, derive_seed(cfg.seed, 5));

  const fs::path out = c.out;
  ensure_dir(out);
  std::FILE* f = std::fopen((out / "grad_check.csv").c_str(), "w");
  if (!f) throw std::runtime_error("cannot write grad_check.csv");
  for (std::FILE* s : {stdout, f}) {
    std::fputs("block,probe_idx,adjoint,fd,rel_err\n", s);
    for (const auto& r : rep.rows)
      std::fprintf(s, "%s,%ld,%.17g,%.17g,%.17g\n", r.block.c_str(), r.probe_idx, r.adjoint, r.fd, r.rel_err);
  }
  std::fclose(f);
  std::fprintf(stderr, "max rel err %.3e (phi %.3e, psi %.3e, controller %.3e)\n", rep.max_rel_err(),
               rep.max_rel_err("phi"), rep.max_rel_err("psi"), rep.max_rel_err("controller"));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Co-design of soft walkers: topology, actuator layout and controller"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "help for every subcommand");

  Common gen, opt, roll, eval, grad;
  auto* c_gen = app.add_subcommand("gen-terrain", "sample the train/test terrain dataset");
  add_common(c_gen, gen, true);

  auto* c_opt = app.add_subcommand("optimize", "co-optimize design and controller over the training terrains");
  add_common(c_opt, opt, true);
  std::string opt_dataset;
  std::optional<long> opt_iters;
  bool opt_quiet = false;
  c_opt->add_option("--dataset", opt_dataset, "existing dataset directory (default: generate into <out>/dataset)");
  c_opt->add_option("--max-iterations", opt_iters, "override trainer.max_iterations");
  c_opt->add_flag("--quiet", opt_quiet, "no per-iteration progress");

  auto* c_roll = app.add_subcommand("rollout", "replay an optimized design on one terrain");
  add_common(c_roll, roll, false);
  std::string roll_run, roll_dataset;
  long roll_terrain = -1;
  c_roll->add_option("--run", roll_run, "run directory written by optimize")->required()->check(CLI::ExistingDirectory);
  c_roll->add_option("--dataset", roll_dataset, "dataset directory (default: <run>/dataset)");
  c_roll->add_option("--terrain", roll_terrain, "terrain index (default: first test terrain)");

  auto* c_eval = app.add_subcommand("evaluate", "roll an optimized design out over the test split");
  add_common(c_eval, eval, false);
  std::string eval_run, eval_dataset, eval_label;
  bool eval_train = false;
  c_eval->add_option("--run", eval_run, "run directory written by optimize")->required()->check(CLI::ExistingDirectory);
  c_eval->add_option("--dataset", eval_dataset, "dataset directory (default: <run>/dataset)");
  c_eval->add_option("--label", eval_label, "group label in evaluate.csv (default: W=<window>)");
  c_eval->add_flag("--train", eval_train, "evaluate the training split instead");

  auto* c_grad = app.add_subcommand("grad-check", "compare adjoint gradients with central differences");
  add_common(c_grad, grad, true);
  int probes = 64;
  double fd_h = 1e-5, spread = 0.5;
  c_grad->add_option("--probes", probes, "number of random coordinates")->check(CLI::PositiveNumber);
  c_grad->add_option("--step", fd_h, "finite difference step")->check(CLI::PositiveNumber);
  c_grad->add_option("--spread", spread, "std of the random phi/psi the check runs at");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help() << std::flush;
    return 1;
  }

  try {
    if (app.got_subcommand(c_gen)) return cmd_gen_terrain(gen);
    if (app.got_subcommand(c_opt)) {
      RunConfig cfg = resolve(opt);
      if (opt_iters) {
        cfg.trainer.max_iterations = *opt_iters;
        validate(cfg);
      }
      return cfg.dimension == 2 ? run_optimize<2>(cfg, opt, opt_dataset, opt_quiet)
                                : run_optimize<3>(cfg, opt, opt_dataset, opt_quiet);
    }
    if (app.got_subcommand(c_roll)) {
      const RunConfig cfg = resolve(roll, roll_run);
      return cfg.dimension == 2 ? run_rollout<2>(cfg, roll, roll_run, roll_dataset, roll_terrain)
                                : run_rollout<3>(cfg, roll, roll_run, roll_dataset, roll_terrain);
    }
    if (app.got_subcommand(c_eval)) {
      const RunConfig cfg = resolve(eval, eval_run);
      return cfg.dimension == 2 ? run_evaluate<2>(cfg, eval, eval_run, eval_dataset, eval_label, eval_train)
                                : run_evaluate<3>(cfg, eval, eval_run, eval_dataset, eval_label, eval_train);
    }
    if (app.got_subcommand(c_grad)) {
      const RunConfig cfg = resolve(grad);
      return cfg.dimension == 2 ? run_grad_check<2>(cfg, grad, probes, fd_h, spread)
                                : run_grad_check<3>(cfg, grad, probes, fd_h, spread);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  std::cerr << app.help();
  return 1;
}
