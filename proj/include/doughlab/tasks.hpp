#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "doughlab/config.hpp"
#include "doughlab/trajopt.hpp"

namespace dough::tasks {

// (s0 - st) / s0; 0 for doing nothing, 1 for a perfect match.
double normalized_improvement(double s0, double st);

// Connected dough clusters at the given linking radius.
int cluster_count(const sim::WorldState& w, double radius);

enum class TaskKind { LiftSpread2D, GatherTransport2D, CutRearrange2D };

struct EvalEpisode {
  double s0 = 0.0;
  double st = 0.0;
  double improvement = 0.0;
  bool success = false;
  bool ok = false;  // episode ran without error
  std::string error;
};

struct EvalResult {
  std::vector<EvalEpisode> episodes;
  double mean_improvement = 0.0;
  double success_rate = 0.0;
  double threshold = 0.0;
};

// One evaluation episode: run from the initial world toward the goal
// observation; only the evaluator touches goal state for the metric.
struct EpisodeOutcome {
  sim::WorldState final_world;
};
using Agent = std::function<EpisodeOutcome(const sim::WorldState& initial, const sim::Observation& goal_obs,
                                           int episode_index)>;

class Task {
 public:
  static Task by_name(const std::string& name, const Config& overrides = Config());
  static std::vector<std::string> names();

  const std::string& name() const { return name_; }
  TaskKind kind() const { return kind_; }
  int plan_horizon() const { return plan_horizon_; }  // H
  int skill_steps() const { return skill_steps_; }    // T
  int tool_count() const { return 2; }
  int subtask_count() const { return subtask_count_; }
  uint64_t version() const { return version_; }
  const Config& params() const { return params_; }
  const ot::SinkhornConfig& metric_ot() const { return metric_ot_; }
  int metric_samples() const { return metric_samples_; }

  // Deterministic (initial, goal) pair; subtask cycles with config_id.
  trajopt::SampledConfig sample_configuration(int config_id) const;
  // Single-stage configuration of a chosen subtask (for targeted demo runs).
  trajopt::SampledConfig sample_subtask(int subtask, uint64_t seed_id) const;

  // The 5 fixed multi-stage evaluation configurations.
  std::vector<trajopt::SampledConfig> eval_set() const;
  uint64_t eval_set_hash() const;

  // Midpoint between scripted-replay and do-nothing divergence distributions.
  double success_threshold() const;

  double divergence(const sim::WorldState& a, const sim::WorldState& goal) const;

  EvalResult evaluate(const Agent& agent, int threads = 1) const;

  // Scripted tool motions that manufacture goals; exposed for the
  // reachability self-check and ablation baselines.
  sim::WorldState run_stage_script(const sim::WorldState& w, int stage) const;
  int stage_count() const { return plan_horizon_; }
  int stage_tool(int stage) const;

  // Serializes the resolved parameters as a text config.
  std::string to_config_text() const;

 private:
  Task() = default;
  struct Blob {
    double cx, cy, w, h;
  };
  sim::WorldState base_world() const;
  sim::WorldState sample_initial(Rng& rng) const;
  trajopt::SampledConfig make_config(uint64_t stream, int subtask) const;

  std::string name_;
  TaskKind kind_ = TaskKind::LiftSpread2D;
  int plan_horizon_ = 2;
  int skill_steps_ = 50;
  int subtask_count_ = 2;
  uint64_t version_ = 1;
  uint64_t seed_base_ = 0;
  Config params_;
  ot::SinkhornConfig metric_ot_{1e-3, 200, 1e-6};
  int metric_samples_ = 300;
  mutable std::optional<double> threshold_cache_;
};

void write_eval_csv(const EvalResult& r, const std::string& path);
std::string eval_summary_line(const EvalResult& r);

}  // namespace dough::tasks
