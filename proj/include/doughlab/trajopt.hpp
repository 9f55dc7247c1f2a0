#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "doughlab/sim.hpp"
#include "doughlab/sinkhorn.hpp"

namespace dough::trajopt {

// Single-tool open-loop optimization problem: drive the dough from the
// initial world toward the goal world's particle configuration.
struct TrajOptProblem {
  sim::WorldState initial;
  sim::WorldState goal;
  int tool = 0;
  int horizon = 50;
  double lambda = 1.0;  // weight of the tool-approach term
  int iterations = 200;
  double lr = 0.02;
  ot::SinkhornConfig loss_ot{1e-3, 80, 1e-6};  // warm-started along the rollout
  int ot_samples = 64;
  uint64_t seed = 0;
  bool keep_states = false;

  void validate() const;
};

struct Trajectory {
  int tool = 0;
  int horizon = 0;
  int config_id = -1;
  int subtask = 0;
  std::vector<sim::Observation> obs;  // o_0 .. o_T
  sim::Observation goal_obs;
  std::vector<double> actions;  // T x A flat, raw commands with inactive blocks zeroed
  std::vector<double> rewards;  // r_0 .. r_T = -S(s_t, s_g) in loss-OT units
  double final_loss = 0.0;
  double eval_initial_div = 0.0;  // metric-grade divergences for the yield report
  double eval_final_div = 0.0;
  std::vector<sim::WorldState> states;  // optional debugging payload

  double normalized_improvement() const {
    return eval_initial_div > 0 ? (eval_initial_div - eval_final_div) / eval_initial_div : 0.0;
  }
};

struct RolloutParts {
  double total = 0.0;
  std::vector<double> divergences;  // S(s_t, s_g) for t = 1..T
  std::vector<double> approach;     // ||m_k(s_t) - d(s_t)|| for t = 1..T
};

// Sum over t=1..T of S_eps(particles_t, goal particles) + lambda * approach.
// `actions` is [T,A]; inactive tool blocks must already be masked.
ad::Tensor rollout_loss(const TrajOptProblem& p, const ad::Tensor& actions, RolloutParts* parts = nullptr);

struct OptimResult {
  std::vector<double> best_actions;  // T*A flat
  double best_loss = 0.0;
  std::vector<double> loss_curve;  // loss per evaluated iterate
  Trajectory trajectory;
};

OptimResult optimize(const TrajOptProblem& p);

// Metric-grade divergence between two worlds' dough (uniform subsample to at
// most max_samples points, fixed seed).
double metric_divergence(const sim::WorldState& a, const sim::WorldState& b,
                         const ot::SinkhornConfig& cfg = {1e-3, 200, 1e-6}, int max_samples = 300);

// ---------------------------------------------------------------------------
// Demonstration generation
// ---------------------------------------------------------------------------

struct SampledConfig {
  sim::WorldState initial;
  sim::WorldState goal;
  int intended_tool = 0;
  int subtask = 0;
};

using ConfigSampler = std::function<SampledConfig(int config_id)>;

struct DemoMeta {
  std::string file;
  int config_id = 0;
  int tool = 0;
  int subtask = 0;
  std::string split;  // train | holdout
  bool ok = false;
  double final_loss = 0.0;
  double ni = 0.0;
  std::string error;
};

struct DemoDataset {
  std::vector<Trajectory> trajectories;  // only the successful ones
  std::vector<DemoMeta> meta;            // one entry per attempted (config, tool)
  std::string task_name;
  uint64_t seed = 0;
  int n_configs = 0;
  int tool_count = 0;

  int yield_ok() const {
    int n = 0;
    for (const auto& m : meta) n += m.ok ? 1 : 0;
    return n;
  }
};

struct DemoGenConfig {
  int n_configs = 200;
  int threads = 2;
  uint64_t seed = 0;
  double holdout_fraction = 0.2;  // fixed at creation: config_id hash bucket
  TrajOptProblem base;            // horizon / lr / iterations / ot settings
  ot::SinkhornConfig metric_ot{1e-3, 200, 1e-6};
  int metric_samples = 300;
  std::string task_name;
};

DemoDataset generate_demos(const ConfigSampler& sampler, int tool_count, const DemoGenConfig& cfg);

bool is_holdout(int config_id, double fraction, uint64_t seed);

// On-disk layout: <dir>/manifest.txt plus one "DSKT" record per trajectory.
void save_dataset(const DemoDataset& ds, const std::string& dir);
DemoDataset load_dataset(const std::string& dir);

void save_trajectory(const Trajectory& t, const std::string& path);
Trajectory load_trajectory(const std::string& path);

}  // namespace dough::trajopt
