#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "codesign/run_io.hpp"
#include "support.hpp"

using namespace codesign;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("codesign_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<std::string> lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

void expect_key_error(const json& j, const std::string& key) {
  try {
    validate(from_json(j));
    FAIL() << "accepted a config with a bad '" << key << "'";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find(key), std::string::npos) << e.what();
  }
}

}  // namespace

TEST(Config, MaterialDefaults) {
  const auto d = derive(default_config(2));
  EXPECT_NEAR(d.lambda, 142857.14, 0.01);
  EXPECT_NEAR(d.mu, 35714.29, 0.01);
  EXPECT_EQ(d.steps, 10000);
  EXPECT_EQ(d.particles, 32 * 32);
  EXPECT_EQ(d.n_fb, 33);
  EXPECT_EQ(d.n_input, 89);
  EXPECT_EQ(d.n_hidden, 47);
}

TEST(Config, ThreeDimensionalDefaults) {
  const RunConfig c = default_config(3);
  EXPECT_EQ(c.design.n_act, 6);
  EXPECT_EQ(c.controller.window, 0.3);
  EXPECT_EQ(c.terrain.length_scale, 0.15);
  EXPECT_EQ(c.terrain.height_scale, 0.015);
  EXPECT_EQ(c.terrain.n_train, 64);
  EXPECT_EQ(c.terrain.n_test, 32);
  EXPECT_EQ(c.objective.w_theta, 5.0);
  EXPECT_NEAR(c.controller.c_fb, 1.0 / 0.015, 1e-12);
  EXPECT_NO_THROW(validate(c));
  EXPECT_EQ(derive(c).particles, 24 * 24 * 24);
}

TEST(Config, DimensionIsRequired) {
  try {
    from_json(json{{"sim", {{"dt", 1e-4}}}});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("dimension"), std::string::npos);
  }
}

TEST(Config, RoundTrip) {
  RunConfig c = default_config(2);
  c.seed = 77;
  c.controller.window = 0.2;
  c.trainer.max_iterations = 12;
  EXPECT_EQ(from_json(to_json(c)), c);
  const fs::path p = scratch("cfg") / "config.json";
  save_config(p, c);
  EXPECT_EQ(load_config(p), c);
  const RunConfig c3 = default_config(3);
  EXPECT_EQ(from_json(to_json(c3)), c3);
}

TEST(Config, AbsentKeysTakeDefaults) {
  const RunConfig c = from_json(json{{"dimension", 2}, {"controller", {{"window", 0.0}}}});
  RunConfig expect = default_config(2);
  expect.controller.window = 0.0;
  EXPECT_EQ(c, expect);
}

TEST(Config, RejectsBadInput) {
  expect_key_error(json{{"dimension", 2}, {"sim", {{"dtt", 1e-4}}}}, "sim.dtt");
  expect_key_error(json{{"dimension", 2}, {"bogus", 1}}, "bogus");
  expect_key_error(json{{"dimension", 2}, {"sim", {{"duration", 1.00005}}}}, "sim.duration");
  expect_key_error(json{{"dimension", 2}, {"sim", {{"dt", "fast"}}}}, "sim.dt");
  expect_key_error(json{{"dimension", 2}, {"sim", {{"checkpoint_every", 3}}}}, "sim.checkpoint_every");
  expect_key_error(json{{"dimension", 2}, {"controller", {{"n_ff", 5}}}}, "controller.n_ff");
  expect_key_error(json{{"dimension", 2}, {"trainer", {{"batch_size", 5}}}}, "trainer.batch_size");
  expect_key_error(json{{"dimension", 2}, {"terrain", {{"height_scale", 0.05}}}}, "terrain.inlet_height");
  expect_key_error(json{{"dimension", 2}, {"body_origin", {0.9, 0.1}}}, "body_origin");
  expect_key_error(json{{"dimension", 4}}, "dimension");
}

TEST(Config, DerivedDefaultsFollowTheirInputs) {
  const RunConfig c = from_json(json{{"dimension", 2}, {"grid_spacing", 0.025}, {"terrain", {{"height_scale", 0.025}}}});
  EXPECT_EQ(c.particle_spacing, 0.0125);
  EXPECT_NEAR(c.design.filter_radius, 0.01875, 1e-15);
  EXPECT_NEAR(c.controller.c_fb, 40.0, 1e-12);
}

TEST(RunIo, DesignCsvRoundTrip) {
  const Scenario<2> sc = fixtures::tiny_scenario();
  const auto v = fixtures::random_variables(sc);
  const auto d = materialize(v, sc.filter, sc.design);
  const fs::path p = scratch("design") / "design.csv";
  write_design_csv<2>(p, sc.rest, v, d);
  const auto t = read_design_csv(p);
  EXPECT_EQ(t.dimension, 2);
  EXPECT_EQ(t.phi, v.phi);
  EXPECT_EQ(t.gamma, d.gamma);
  EXPECT_EQ(t.xi, d.xi);
  ASSERT_EQ(t.x0.size(), sc.rest.size());
  EXPECT_EQ(t.x0[5], Eigen::VectorXd(sc.rest[5]));
  EXPECT_EQ(lines(p).front(), "id,x0,y0,phi,gamma,xi_1,xi_2,xi_3");
}

TEST(RunIo, ControllerRoundTrip) {
  const Scenario<2> sc = fixtures::tiny_scenario();
  const auto w = xavier_init(sc.controller_shape(), 2e4, 9);
  const fs::path dir = scratch("ctrl");
  write_controller(dir, w, 9, sc.sensor);
  const auto r = read_controller(dir);
  EXPECT_EQ(r.params, w.params);
  EXPECT_EQ(r.c_act, w.c_act);
  EXPECT_EQ(r.shape.n_fb, w.shape.n_fb);
  EXPECT_EQ(fs::file_size(dir / "controller.bin"), static_cast<std::uintmax_t>(8 * w.params.size()));
  const json meta = read_json(dir / "controller.json");
  EXPECT_EQ(meta["param_count"], w.shape.param_count());
  EXPECT_EQ(meta["seed"], 9);
}

TEST(RunIo, HistoryAndMetricsHeaders) {
  const fs::path dir = scratch("hist");
  HistoryRow row;
  row.iter = 1;
  row.Ln = 1.25;
  write_history_csv(dir / "history.csv", {row});
  EpisodeMetrics m;
  m.iter = 1;
  m.terrain_id = 3;
  write_metrics_csv(dir / "metrics.csv", {m, m});
  const auto h = lines(dir / "history.csv");
  ASSERT_EQ(h.size(), 2u);
  EXPECT_EQ(h[0], "iter,Ln,F_ma,Cto,Clay,kappa_to,kappa_lay,tau_to,tau_lay");
  const auto mt = lines(dir / "metrics.csv");
  ASSERT_EQ(mt.size(), 3u);
  EXPECT_EQ(mt[0], "iter,terrain_id,F,travel,posture_term,Cto,Clay,Ln");
  EXPECT_EQ(mt[1].substr(0, 4), "1,3,");
}

// End-to-end runs of the command-line tool on a tiny configuration.
class Cli : public ::testing::Test {
 protected:
  static fs::path root() { return fs::temp_directory_path() / "codesign_cli_test"; }

  static int run(const std::string& args) {
    const std::string cmd = std::string(CODESIGN_CLI) + " " + args + " >" + (root() / "stdout.txt").string() +
                            " 2>" + (root() / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  static void SetUpTestSuite() {
    fs::remove_all(root());
    fs::create_directories(root());
    const json cfg = {{"dimension", 2},
                      {"domain", {0.5, 0.5}},
                      {"grid_spacing", 0.025},
                      {"body_origin", {0.075, 0.1}},
                      {"body_size", {0.1, 0.1}},
                      {"sim", {{"dt", 2e-4}, {"duration", 0.02}, {"checkpoint_every", 10}}},
                      {"design", {{"n_act", 2}}},
                      {"controller", {{"n_ff", 4}, {"window", 0.1}}},
                      {"terrain", {{"inlet_extent", 0.2}, {"n_train", 2}, {"n_test", 3}}},
                      {"objective", {{"target", 0.05}}},
                      {"trainer", {{"batch_size", 2}, {"max_iterations", 3}}},
                      {"output", {{"record_every_n_steps", 25}}},
                      {"seed", 5}};
    write_json(root() / "tiny.json", cfg);
  }

  static std::string stderr_text() {
    std::ifstream in(root() / "stderr.txt");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }
};

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(run("--help"), 0);
  EXPECT_EQ(run(""), 1);
  EXPECT_EQ(run("optimize --out " + (root() / "x").string()), 1);
  EXPECT_EQ(run("frobnicate"), 1);
}

TEST_F(Cli, RuntimeErrorsExitTwo) {
  write_json(root() / "bad.json", json{{"dimension", 2}, {"sim", {{"checkpoint_every", 3}}}});
  EXPECT_EQ(run("optimize --config " + (root() / "bad.json").string() + " --out " + (root() / "bad").string()), 2);
  EXPECT_NE(stderr_text().find("sim.checkpoint_every"), std::string::npos) << stderr_text();
}

TEST_F(Cli, FullPipeline) {
  const std::string cfg = (root() / "tiny.json").string();
  const fs::path data = root() / "data", run_dir = root() / "run", roll = root() / "roll", eval = root() / "eval";

  ASSERT_EQ(run("gen-terrain --config " + cfg + " --out " + data.string()), 0) << stderr_text();
  EXPECT_TRUE(fs::exists(data / "manifest.json"));
  EXPECT_TRUE(fs::exists(data / "dataset" / "terrain_4.bin"));
  const fs::path dataset = data / "dataset";

  ASSERT_EQ(run("optimize --quiet --threads 1 --config " + cfg + " --dataset " + dataset.string() + " --out " +
                run_dir.string()),
            0)
      << stderr_text();
  for (const char* f : {"config.json", "history.csv", "metrics.csv", "design.csv", "controller.bin",
                        "controller.json", "manifest.json"})
    EXPECT_TRUE(fs::exists(run_dir / f)) << f;
  EXPECT_EQ(lines(run_dir / "history.csv").size(), 4u);
  EXPECT_EQ(lines(run_dir / "metrics.csv").size(), 7u);
  const json manifest = read_json(run_dir / "manifest.json");
  EXPECT_EQ(manifest["seed"], 5);
  EXPECT_EQ(manifest["termination"], "iteration_cap");

  ASSERT_EQ(run("rollout --run " + run_dir.string() + " --dataset " + dataset.string() + " --out " + roll.string()), 0)
      << stderr_text();
  const auto m = lines(roll / "metrics.csv");
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(m[1].substr(0, 4), "0,2,");  // first test terrain
  EXPECT_EQ(lines(roll / "signals.csv").size(), 101u);  // one row per step
  int frames = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(roll / "snapshots")) ++frames;
  EXPECT_EQ(frames, 4);  // steps 0, 25, 50, 75

  ASSERT_EQ(run("evaluate --run " + run_dir.string() + " --dataset " + dataset.string() + " --out " + eval.string()), 0)
      << stderr_text();
  const auto e = lines(eval / "evaluate.csv");
  ASSERT_EQ(e.size(), 4u);
  EXPECT_EQ(e[0], "label,terrain_id,travel,F,posture_term");
  EXPECT_EQ(e[1].substr(0, 6), "W=0.1,");

  ASSERT_EQ(run("grad-check --probes 9 --config " + cfg + " --out " + (root() / "grad").string()), 0)
      << stderr_text();
  const auto g = lines(root() / "grad" / "grad_check.csv");
  EXPECT_EQ(g.size(), 10u);
}
