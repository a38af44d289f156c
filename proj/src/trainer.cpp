#include "codesign/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <thread>

namespace codesign {

AdamState AdamState::zeros_like(const DesignVariables& vars) {
  return {DesignGradient::zeros_like(vars), DesignGradient::zeros_like(vars), 0};
}

Batches make_batches(int n_data, int batch_size, std::mt19937_64& rng) {
  if (n_data < 1 || batch_size < 1 || n_data % batch_size != 0)
    throw ConfigError("batch size " + std::to_string(batch_size) + " must divide the " + std::to_string(n_data) +
                      " training terrains");
  std::vector<int> perm(n_data);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Batches out(n_data / batch_size);
  for (int b = 0; b < static_cast<int>(out.size()); ++b)
    out[b].assign(perm.begin() + b * batch_size, perm.begin() + (b + 1) * batch_size);
  return out;
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int n_threads = std::clamp(threads, 1, static_cast<int>(std::max<std::size_t>(n, 1)));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

namespace {

template <class X, class G>
void adam_block(X& x, const G& g, G& m, G& v, double lr_t, const AdamConfig& cfg) {
  m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
  v = (cfg.beta2 * v.array() + (1.0 - cfg.beta2) * g.array().square()).matrix();
  x.array() -= lr_t * m.array() / (v.array().sqrt() + cfg.epsilon);
}

}  // namespace

void adam_update(DesignVariables& vars, const DesignGradient& grad, AdamState& st, const AdamConfig& cfg) {
  require_finite(grad);
  if (grad.phi.size() != vars.phi.size() || grad.psi.rows() != vars.psi.rows() ||
      grad.psi.cols() != vars.psi.cols() || grad.controller.size() != vars.controller.params.size())
    throw ConfigError("gradient shape does not match the design variables");
  ++st.step;
  const double t = static_cast<double>(st.step);
  // Bias correction folded into the step size; epsilon sees the corrected v.
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  AdamConfig corrected = cfg;
  corrected.epsilon = cfg.epsilon * std::sqrt(c2);
  const double lr_t = cfg.learning_rate * std::sqrt(c2) / c1;
  adam_block(vars.phi, grad.phi, st.m.phi, st.v.phi, lr_t, corrected);
  adam_block(vars.psi, grad.psi, st.m.psi, st.v.psi, lr_t, corrected);
  adam_block(vars.controller.params, grad.controller, st.m.controller, st.v.controller, lr_t, corrected);
}

void update_multipliers(Multipliers& m, const Constraints& c, const ConstraintBounds& bounds, double growth,
                        double tau_max) {
  const double vto = c.topology - bounds.topology;
  if (vto > 0.0) {
    m.kappa_to -= m.tau_to * vto;
    m.tau_to = std::min(m.tau_to * growth, tau_max);
  }
  const double vlay = c.layout - bounds.layout;
  if (vlay > 0.0) {
    m.kappa_lay -= m.tau_lay * vlay;
    m.tau_lay = std::min(m.tau_lay * growth, tau_max);
  }
}

bool feasible(const Constraints& c, const ConstraintBounds& bounds) {
  return c.topology <= bounds.topology && c.layout <= bounds.layout;
}

template <int Dim>
BatchEvaluation evaluate_batch(const Scenario<Dim>& sc, const DesignVariables& vars,
                               const std::vector<TerrainSample>& terrains, const std::vector<int>& batch,
                               const Multipliers& m, const TrainerConfig& cfg) {
  const MaterializedDesign design = materialize(vars, sc.filter, sc.design);
  BatchEvaluation ev;
  ev.episodes.resize(batch.size());
  parallel_for(batch.size(), cfg.threads, [&](std::size_t i) {
    ev.episodes[i] = episode_gradient<Dim>(sc, vars, design, terrains.at(batch[i]));
  });

  // Merge in batch order so the sum does not depend on thread timing.
  ev.grad = DesignGradient::zeros_like(vars);
  for (const auto& e : ev.episodes) {
    ev.F_batch += e.loss.F;
    ev.grad += e.grad;
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  ev.F_batch *= inv;
  ev.grad *= inv;

  const double alpha = sc.objective.alpha;
  ev.weight_sq = vars.controller.params.squaredNorm();
  ev.grad.controller += alpha * vars.controller.params;

  ev.c = binarization_constraints(design.gamma, design.xi, sc.n_act);
  const double s_to = penalty_slope(ev.c.topology, cfg.bounds.topology, m.kappa_to, m.tau_to);
  const double s_lay = penalty_slope(ev.c.layout, cfg.bounds.layout, m.kappa_lay, m.tau_lay);
  if (s_to != 0.0 || s_lay != 0.0) {
    DesignFieldAdjoint adj{Eigen::VectorXd::Zero(design.gamma.size()),
                           RowMatrix::Zero(design.xi.rows(), design.xi.cols())};
    binarization_constraints_vjp(design.gamma, design.xi, sc.n_act, s_to, s_lay, adj.gamma, adj.xi);
    materialize_vjp(design, sc.filter, sc.design, adj, ev.grad.phi, ev.grad.psi);
  }
  ev.Ln = augmented_lagrangian(ev.F_batch, ev.weight_sq, alpha, ev.c, cfg.bounds, m);
  require_finite(ev.grad);
  return ev;
}

template <int Dim>
std::vector<LossTerms> evaluate_design(const Scenario<Dim>& sc, const MaterializedDesign& design,
                                       const ControllerWeights& controller, const std::vector<TerrainSample>& terrains,
                                       int threads) {
  std::vector<LossTerms> out(terrains.size());
  parallel_for(terrains.size(), threads,
               [&](std::size_t i) { out[i] = rollout<Dim>(sc, design, controller, terrains[i]).loss; });
  return out;
}

template <int Dim>
TrainResult train(const Scenario<Dim>& sc, const std::vector<TerrainSample>& train_set,
                  const DesignVariables& initial, const TrainerConfig& cfg, const ProgressFn& progress) {
  if (cfg.max_iterations < 1) throw ConfigError("iteration cap must be positive");
  const int n_data = static_cast<int>(train_set.size());
  std::mt19937_64 rng(derive_seed(cfg.seed, 0x7472616eULL));
  Batches batches = make_batches(n_data, cfg.batch_size, rng);
  const long window = static_cast<long>(batches.size());

  TrainResult res;
  res.vars = initial;
  res.multipliers.tau_to = res.multipliers.tau_lay = cfg.tau0;
  AdamState adam = AdamState::zeros_like(initial);
  std::vector<double> L;
  std::vector<double> F;

  DesignVariables best;
  double best_score = std::numeric_limits<double>::infinity();
  std::size_t n = 0;
  for (long s = 1; s <= cfg.max_iterations; ++s) {
    const BatchEvaluation ev = evaluate_batch<Dim>(sc, res.vars, train_set, batches[n], res.multipliers, cfg);
    L.push_back(ev.Ln);
    F.push_back(ev.F_batch);

    HistoryRow row;
    row.iter = s;
    row.Ln = ev.Ln;
    row.F_batch = ev.F_batch;
    const long w = std::min<long>(window, s);
    row.F_ma = std::accumulate(F.end() - w, F.end(), 0.0) / static_cast<double>(w);
    row.weight_sq = ev.weight_sq;
    row.c = ev.c;
    row.m = res.multipliers;
    res.history.push_back(row);
    for (std::size_t i = 0; i < ev.episodes.size(); ++i)
      res.metrics.push_back({s, batches[n][i], ev.episodes[i].loss, ev.c, ev.Ln});
    if (progress) progress(row);

    const bool ok = feasible(ev.c, cfg.bounds);
    if (ok && s >= window && row.F_ma < best_score) {
      best_score = row.F_ma;
      best = res.vars;
      res.best_iter = s;
    }

    // Window test, skipped until two full windows exist.
    if (s >= 2 * window) {
      const double recent = std::accumulate(L.end() - window, L.end(), 0.0);
      const double previous = std::accumulate(L.end() - 2 * window, L.end() - window, 0.0);
      if (std::abs(recent - previous) < cfg.convergence_eps) {
        if (ok) {
          res.termination = "converged";
          res.best_iter = s;
          return res;
        }
        update_multipliers(res.multipliers, ev.c, cfg.bounds, cfg.tau_growth, cfg.tau_max);
      }
    }

    adam_update(res.vars, ev.grad, adam, cfg.adam);
    if (++n == batches.size()) {
      n = 0;
      batches = make_batches(n_data, cfg.batch_size, rng);
    }
  }

  res.termination = "iteration_cap";
  res.warning = true;
  if (res.best_iter > 0) {
    res.vars = std::move(best);
  } else {
    res.best_iter = cfg.max_iterations + 1;  // the final, unevaluated iterate
  }
  return res;
}

#define CODESIGN_TRAINER(D)                                                                                        \
  template BatchEvaluation evaluate_batch<D>(const Scenario<D>&, const DesignVariables&,                           \
                                             const std::vector<TerrainSample>&, const std::vector<int>&,           \
                                             const Multipliers&, const TrainerConfig&);                            \
  template std::vector<LossTerms> evaluate_design<D>(const Scenario<D>&, const MaterializedDesign&,               \
                                                     const ControllerWeights&, const std::vector<TerrainSample>&, \
                                                     int);                                                        \
  template TrainResult train<D>(const Scenario<D>&, const std::vector<TerrainSample>&, const DesignVariables&,     \
                                const TrainerConfig&, const ProgressFn&);

CODESIGN_TRAINER(2)
CODESIGN_TRAINER(3)

}  // namespace codesign
