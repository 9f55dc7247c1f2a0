#include "doughlab/trajopt.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doughlab/config.hpp"

namespace dough::trajopt {

namespace fs = std::filesystem;
using namespace dough::ad;

void TrajOptProblem::validate() const {
  if (horizon < 1) fail("trajopt: horizon must be >= 1");
  if (lambda < 0) fail("trajopt: lambda must be >= 0");
  if (tool < 0 || tool >= initial.tool_count()) fail("trajopt: tool index out of range");
  if (initial.dough.count() != goal.dough.count()) fail("trajopt: initial and goal particle counts differ");
  if (initial.tool_count() != goal.tool_count()) fail("trajopt: initial and goal tool layouts differ");
}

namespace {

std::vector<int> subsample_indices(int n, int max_count, Rng rng) {
  std::vector<int> idx(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
  if (n <= max_count) return idx;
  rng.shuffle(idx);
  idx.resize(static_cast<size_t>(max_count));
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

ad::Tensor rollout_loss(const TrajOptProblem& p, const ad::Tensor& actions, RolloutParts* parts) {
  p.validate();
  int T = p.horizon;
  int A = p.initial.action_dim();
  if (actions.ndim() != 2 || actions.dim(0) != T || actions.dim(1) != A)
    fail("rollout_loss: actions must be [" + std::to_string(T) + "," + std::to_string(A) + "], got " +
         shape_str(actions.shape));

  int n = p.initial.dough.count();
  Rng sub_rng = Rng(p.seed).fork("ot_subsample");
  std::vector<int> idx_a = subsample_indices(n, p.ot_samples, sub_rng.fork(0));
  std::vector<int> idx_b = subsample_indices(n, p.ot_samples, sub_rng.fork(1));
  int ma = static_cast<int>(idx_a.size()), mb = static_cast<int>(idx_b.size());
  std::vector<double> wa(static_cast<size_t>(ma), 1.0 / ma), wb(static_cast<size_t>(mb), 1.0 / mb);

  Tensor goal_pts(Shape{mb, 2});
  for (int i = 0; i < mb; ++i) {
    goal_pts.v[2 * static_cast<size_t>(i)] = p.goal.dough.x[2 * static_cast<size_t>(idx_b[static_cast<size_t>(i)])];
    goal_pts.v[2 * static_cast<size_t>(i) + 1] =
        p.goal.dough.x[2 * static_cast<size_t>(idx_b[static_cast<size_t>(i)]) + 1];
  }

  ot::DivergenceCache cache;
  sim::SimVars vars = sim::vars_of(p.initial);
  Tensor total = Tensor::scalar(0.0);
  if (parts) {
    parts->divergences.clear();
    parts->approach.clear();
  }
  double inv_n = 1.0 / n;

  for (int t = 0; t < T; ++t) {
    Tensor at = reshape(slice_rows(actions, t, t + 1), Shape{A});
    vars = sim::step_op(p.initial, vars, at);
    if (!vars.x.all_finite()) fail("rollout_loss: non-finite state at step " + std::to_string(t));

    Tensor xa = gather_rows(vars.x, idx_a);
    ot::OtResult stats;
    Tensor div = ot::sinkhorn_divergence_op(xa, wa, goal_pts, wb, p.loss_ot, &cache, &stats);
    cache.b_static = true;

    // approach term: distance between active tool center and dough center
    Tensor com = scale(sum_rows(vars.x), inv_n);  // [2]
    Tensor tool_xy = reshape(slice_cols(slice_rows(vars.poses, p.tool, p.tool + 1), 0, 2), Shape{2});
    Tensor diff = sub(tool_xy, com);
    Tensor dist = vsqrt(add_const(sum(mul(diff, diff)), 1e-12));

    if (parts) {
      parts->divergences.push_back(div.item());
      parts->approach.push_back(dist.item());
    }
    total = add(total, add(div, scale(dist, p.lambda)));
  }
  if (parts) parts->total = total.item();
  return total;
}

OptimResult optimize(const TrajOptProblem& p) {
  p.validate();
  int T = p.horizon;
  int A = p.initial.action_dim();

  // inactive tool blocks are masked on the tape, so their gradients vanish
  // and the zero-initialized commands stay exactly zero
  std::vector<double> mask_row = sim::action_mask(p.initial, p.tool);
  Tensor mask(Shape{T, A});
  for (int t = 0; t < T; ++t)
    for (int a = 0; a < A; ++a) mask.v[static_cast<size_t>(t) * A + a] = mask_row[static_cast<size_t>(a)];

  Tensor actions(Shape{T, A}, 0.0);  // all-zero initialization
  Adam adam({.lr = p.lr});

  OptimResult res;
  res.best_loss = std::numeric_limits<double>::infinity();
  res.best_actions = actions.v;
  bool any_finite = false;

  for (int iter = 0; iter <= p.iterations; ++iter) {
    Tape tape;
    Tensor leaf = tape.leaf(actions);
    Tensor masked = mul(leaf, mask);
    double value = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> grad;
    try {
      Tensor loss = rollout_loss(p, masked, nullptr);
      value = loss.item();
      if (std::isfinite(value) && iter < p.iterations) {
        Gradients g = tape.backward(loss);
        grad = g.grad_of(leaf).v;
      }
    } catch (const Error&) {
      value = std::numeric_limits<double>::quiet_NaN();
    }

    res.loss_curve.push_back(value);
    if (std::isfinite(value)) {
      any_finite = true;
      if (value < res.best_loss) {
        res.best_loss = value;
        res.best_actions = actions.v;
      }
    } else {
      // skip this iterate: restart from the best point seen so far
      actions.v = res.best_actions;
      continue;
    }
    if (iter == p.iterations) break;
    bool grad_finite = true;
    for (double gv : grad)
      if (!std::isfinite(gv)) grad_finite = false;
    if (!grad_finite) {
      actions.v = res.best_actions;
      continue;
    }
    adam.update(actions, grad, "actions");
    adam.advance();
  }
  if (!any_finite) fail("trajopt: every iterate produced a non-finite loss");

  // final rollout at the best iterate: observations, rewards, states
  Trajectory& traj = res.trajectory;
  traj.tool = p.tool;
  traj.horizon = T;
  traj.final_loss = res.best_loss;
  for (int t = 0; t < T; ++t) {
    std::vector<double> row(static_cast<size_t>(A));
    for (int a = 0; a < A; ++a)
      row[static_cast<size_t>(a)] =
          res.best_actions[static_cast<size_t>(t) * A + a] * mask_row[static_cast<size_t>(a)];
    traj.actions.insert(traj.actions.end(), row.begin(), row.end());
  }

  int n = p.initial.dough.count();
  Rng sub_rng = Rng(p.seed).fork("ot_subsample");
  std::vector<int> idx_a = subsample_indices(n, p.ot_samples, sub_rng.fork(0));
  std::vector<int> idx_b = subsample_indices(n, p.ot_samples, sub_rng.fork(1));
  ot::PointCloud goal_cloud;
  for (int i : idx_b) {
    goal_cloud.pts.push_back(p.goal.dough.x[2 * static_cast<size_t>(i)]);
    goal_cloud.pts.push_back(p.goal.dough.x[2 * static_cast<size_t>(i) + 1]);
  }
  goal_cloud.w.assign(idx_b.size(), 1.0 / static_cast<double>(idx_b.size()));

  auto reward_of = [&](const sim::WorldState& s) {
    ot::PointCloud cur;
    for (int i : idx_a) {
      cur.pts.push_back(s.dough.x[2 * static_cast<size_t>(i)]);
      cur.pts.push_back(s.dough.x[2 * static_cast<size_t>(i) + 1]);
    }
    cur.w.assign(idx_a.size(), 1.0 / static_cast<double>(idx_a.size()));
    return -ot::sinkhorn_divergence(cur, goal_cloud, p.loss_ot).value;
  };

  sim::WorldState s = p.initial;
  traj.obs.push_back(sim::render(s));
  traj.rewards.push_back(reward_of(s));
  if (p.keep_states) traj.states.push_back(s);
  for (int t = 0; t < T; ++t) {
    std::vector<double> row(traj.actions.begin() + static_cast<int64_t>(t) * A,
                            traj.actions.begin() + static_cast<int64_t>(t + 1) * A);
    s = sim::step(s, row, t);
    traj.obs.push_back(sim::render(s));
    traj.rewards.push_back(reward_of(s));
    if (p.keep_states) traj.states.push_back(s);
  }
  traj.goal_obs = sim::render(p.goal);
  traj.eval_initial_div = metric_divergence(p.initial, p.goal);
  traj.eval_final_div = metric_divergence(s, p.goal);
  return res;
}

double metric_divergence(const sim::WorldState& a, const sim::WorldState& b, const ot::SinkhornConfig& cfg,
                         int max_samples) {
  Rng rng(20240001);  // fixed subsample seed: the metric is a pure function of states
  auto cloud_of = [&](const sim::WorldState& w, uint64_t stream) {
    std::vector<int> idx = subsample_indices(w.dough.count(), max_samples, rng.fork(stream));
    ot::PointCloud c;
    for (int i : idx) {
      c.pts.push_back(w.dough.x[2 * static_cast<size_t>(i)]);
      c.pts.push_back(w.dough.x[2 * static_cast<size_t>(i) + 1]);
    }
    c.w.assign(idx.size(), 1.0 / static_cast<double>(idx.size()));
    return c;
  };
  return ot::sinkhorn_divergence(cloud_of(a, 0), cloud_of(b, 1), cfg).value;
}

// ---------------------------------------------------------------------------
// Demonstration generation
// ---------------------------------------------------------------------------

bool is_holdout(int config_id, double fraction, uint64_t seed) {
  uint64_t h = hash_u64(static_cast<uint64_t>(config_id), hash_u64(seed));
  return (h % 1000) < static_cast<uint64_t>(fraction * 1000.0);
}

DemoDataset generate_demos(const ConfigSampler& sampler, int tool_count, const DemoGenConfig& cfg) {
  if (cfg.n_configs < 1) fail("generate_demos: need at least one configuration");
  DemoDataset ds;
  ds.task_name = cfg.task_name;
  ds.seed = cfg.seed;
  ds.n_configs = cfg.n_configs;
  ds.tool_count = tool_count;

  size_t items = static_cast<size_t>(cfg.n_configs) * tool_count;
  std::vector<std::optional<Trajectory>> results(items);
  std::vector<DemoMeta> metas(items);

  parallel_for(items, cfg.threads, [&](size_t item) {
    int config_id = static_cast<int>(item) / tool_count;
    int tool = static_cast<int>(item) % tool_count;
    DemoMeta& m = metas[item];
    m.config_id = config_id;
    m.tool = tool;
    m.split = is_holdout(config_id, cfg.holdout_fraction, cfg.seed) ? "holdout" : "train";
    try {
      SampledConfig sc = sampler(config_id);
      TrajOptProblem prob = cfg.base;
      prob.initial = sc.initial;
      prob.goal = sc.goal;
      prob.tool = tool;
      prob.seed = hash_u64(static_cast<uint64_t>(item), hash_u64(cfg.seed));
      OptimResult r = optimize(prob);
      r.trajectory.config_id = config_id;
      r.trajectory.subtask = sc.subtask;
      m.subtask = sc.subtask;
      m.ok = true;
      m.final_loss = r.best_loss;
      m.ni = r.trajectory.normalized_improvement();
      results[item] = std::move(r.trajectory);
    } catch (const std::exception& e) {
      m.ok = false;
      m.error = e.what();
    }
  });

  for (size_t i = 0; i < items; ++i) {
    if (results[i]) ds.trajectories.push_back(std::move(*results[i]));
    ds.meta.push_back(std::move(metas[i]));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// On-disk records: header (magic "DSKT", version, tool, T, obs shape C/R/R,
// action dim), then f64 arrays (actions, rewards, final loss, eval
// divergences); observations stored as f32 rasters after the f64 block.
// ---------------------------------------------------------------------------

namespace {

void put_u32(std::ofstream& out, uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }

uint32_t get_u32(std::ifstream& in) {
  uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 4);
  if (!in) fail("trajectory file truncated");
  return v;
}

void put_obs(std::ofstream& out, const sim::Observation& o) {
  out.write(reinterpret_cast<const char*>(o.data.data()), static_cast<std::streamsize>(o.data.size() * sizeof(float)));
}

sim::Observation get_obs(std::ifstream& in, int res) {
  sim::Observation o;
  o.res = res;
  o.data.resize(static_cast<size_t>(3) * res * res);
  in.read(reinterpret_cast<char*>(o.data.data()), static_cast<std::streamsize>(o.data.size() * sizeof(float)));
  if (!in) fail("trajectory file truncated in observations");
  return o;
}

}  // namespace

void save_trajectory(const Trajectory& t, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("cannot write trajectory: " + path);
  out.write("DSKT", 4);
  put_u32(out, 1);
  put_u32(out, static_cast<uint32_t>(t.tool));
  put_u32(out, static_cast<uint32_t>(t.horizon));
  int res = t.goal_obs.res;
  put_u32(out, 3);
  put_u32(out, static_cast<uint32_t>(res));
  put_u32(out, static_cast<uint32_t>(res));
  uint32_t adim = t.horizon > 0 ? static_cast<uint32_t>(t.actions.size() / t.horizon) : 0;
  put_u32(out, adim);
  put_u32(out, static_cast<uint32_t>(t.config_id));
  put_u32(out, static_cast<uint32_t>(t.subtask));

  out.write(reinterpret_cast<const char*>(t.actions.data()),
            static_cast<std::streamsize>(t.actions.size() * sizeof(double)));
  out.write(reinterpret_cast<const char*>(t.rewards.data()),
            static_cast<std::streamsize>(t.rewards.size() * sizeof(double)));
  double tail[3] = {t.final_loss, t.eval_initial_div, t.eval_final_div};
  out.write(reinterpret_cast<const char*>(tail), sizeof(tail));
  for (const auto& o : t.obs) put_obs(out, o);
  put_obs(out, t.goal_obs);
  if (!out) fail("trajectory write failed: " + path);
}

Trajectory load_trajectory(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open trajectory: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::strncmp(magic, "DSKT", 4) != 0) fail("bad trajectory magic: " + path);
  if (get_u32(in) != 1) fail("unsupported trajectory version: " + path);
  Trajectory t;
  t.tool = static_cast<int>(get_u32(in));
  t.horizon = static_cast<int>(get_u32(in));
  uint32_t channels = get_u32(in);
  uint32_t res = get_u32(in);
  uint32_t res2 = get_u32(in);
  if (channels != 3 || res != res2) fail("unsupported observation shape in " + path);
  uint32_t adim = get_u32(in);
  t.config_id = static_cast<int>(get_u32(in));
  t.subtask = static_cast<int>(get_u32(in));

  t.actions.resize(static_cast<size_t>(t.horizon) * adim);
  in.read(reinterpret_cast<char*>(t.actions.data()), static_cast<std::streamsize>(t.actions.size() * sizeof(double)));
  t.rewards.resize(static_cast<size_t>(t.horizon) + 1);
  in.read(reinterpret_cast<char*>(t.rewards.data()), static_cast<std::streamsize>(t.rewards.size() * sizeof(double)));
  double tail[3];
  in.read(reinterpret_cast<char*>(tail), sizeof(tail));
  if (!in) fail("trajectory file truncated: " + path);
  t.final_loss = tail[0];
  t.eval_initial_div = tail[1];
  t.eval_final_div = tail[2];
  for (int i = 0; i <= t.horizon; ++i) t.obs.push_back(get_obs(in, static_cast<int>(res)));
  t.goal_obs = get_obs(in, static_cast<int>(res));
  return t;
}

void save_dataset(const DemoDataset& ds, const std::string& dir) {
  fs::create_directories(dir);
  std::ostringstream man;
  man << "[dataset]\n";
  man << "task = " << ds.task_name << "\n";
  man << "seed = " << ds.seed << "\n";
  man << "configs = " << ds.n_configs << "\n";
  man << "tools = " << ds.tool_count << "\n";
  man << "records = " << ds.trajectories.size() << "\n";
  man << "attempted = " << ds.meta.size() << "\n";

  size_t next_file = 0;
  std::vector<std::string> files;
  for (const auto& t : ds.trajectories) {
    char name[64];
    std::snprintf(name, sizeof(name), "traj_%05zu_t%d.dskt", next_file++, t.tool);
    save_trajectory(t, (fs::path(dir) / name).string());
    files.push_back(name);
  }
  man << "\n";
  size_t fi = 0;
  for (const auto& m : ds.meta) {
    man << "[record_" << m.config_id << "_" << m.tool << "]\n";
    man << "config = " << m.config_id << "\n";
    man << "tool = " << m.tool << "\n";
    man << "subtask = " << m.subtask << "\n";
    man << "split = " << m.split << "\n";
    man << "ok = " << (m.ok ? "true" : "false") << "\n";
    if (m.ok) {
      man << "file = " << files[fi++] << "\n";
      man << "final_loss = " << m.final_loss << "\n";
      man << "ni = " << m.ni << "\n";
    } else {
      man << "error = " << m.error << "\n";
    }
    man << "\n";
  }
  write_text_file((fs::path(dir) / "manifest.txt").string(), man.str());
}

DemoDataset load_dataset(const std::string& dir) {
  Config man = Config::load((fs::path(dir) / "manifest.txt").string());
  DemoDataset ds;
  ds.task_name = man.get_str("dataset.task", "");
  ds.seed = static_cast<uint64_t>(man.get_int("dataset.seed", 0));
  ds.n_configs = static_cast<int>(man.get_int("dataset.configs", 0));
  ds.tool_count = static_cast<int>(man.get_int("dataset.tools", 0));

  for (int c = 0; c < ds.n_configs; ++c) {
    for (int k = 0; k < ds.tool_count; ++k) {
      std::string sec = "record_" + std::to_string(c) + "_" + std::to_string(k);
      if (!man.has(sec + ".config")) continue;
      DemoMeta m;
      m.config_id = c;
      m.tool = k;
      m.subtask = static_cast<int>(man.get_int(sec + ".subtask", 0));
      m.split = man.get_str(sec + ".split", "train");
      m.ok = man.get_bool(sec + ".ok", false);
      if (m.ok) {
        m.file = man.get_str(sec + ".file", "");
        m.final_loss = man.get_double(sec + ".final_loss", 0);
        m.ni = man.get_double(sec + ".ni", 0);
        Trajectory t = load_trajectory((fs::path(dir) / m.file).string());
        ds.trajectories.push_back(std::move(t));
      } else {
        m.error = man.get_str(sec + ".error", "");
      }
      ds.meta.push_back(std::move(m));
    }
  }
  return ds;
}

}  // namespace dough::trajopt
