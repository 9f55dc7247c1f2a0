#include "doughlab/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace dough::sim {

using namespace dough::ad;

int action_dim(ToolKind kind) {
  switch (kind) {
    case ToolKind::Spatula: return 3;
    case ToolKind::RollingPin: return 2;
    case ToolKind::Gripper: return 4;
    case ToolKind::Knife: return 2;
  }
  fail("unknown tool kind");
}

const char* tool_kind_name(ToolKind kind) {
  switch (kind) {
    case ToolKind::Spatula: return "spatula";
    case ToolKind::RollingPin: return "rolling_pin";
    case ToolKind::Gripper: return "gripper";
    case ToolKind::Knife: return "knife";
  }
  fail("unknown tool kind");
}

ToolKind tool_kind_from_name(const std::string& name) {
  for (ToolKind k : {ToolKind::Spatula, ToolKind::RollingPin, ToolKind::Gripper, ToolKind::Knife})
    if (name == tool_kind_name(k)) return k;
  fail("unknown tool kind '" + name + "'");
}

int WorldState::action_dim() const {
  int d = 0;
  for (const auto& t : tools) d += sim::action_dim(t.kind);
  return d;
}

int WorldState::action_offset(int tool) const {
  if (tool < 0 || tool >= tool_count()) fail("tool index " + std::to_string(tool) + " out of range");
  int off = 0;
  for (int k = 0; k < tool; ++k) off += sim::action_dim(tools[static_cast<size_t>(k)].kind);
  return off;
}

void WorldState::validate() const {
  int n = dough.count();
  if (dough.x.size() != static_cast<size_t>(n) * 2 || dough.v.size() != static_cast<size_t>(n) * 2)
    fail("world: dough array sizes inconsistent");
  for (double q : dough.x)
    if (!std::isfinite(q)) fail("world: non-finite dough position");
  for (double q : dough.v)
    if (!std::isfinite(q)) fail("world: non-finite dough velocity");
}

SimVars vars_of(const WorldState& w) {
  int n = w.dough.count(), k = w.tool_count();
  SimVars s;
  s.x = Tensor(Shape{n, 2}, w.dough.x);
  s.v = Tensor(Shape{n, 2}, w.dough.v);
  s.poses = Tensor(Shape{k, 4});
  for (int i = 0; i < k; ++i) {
    const Pose& p = w.tools[static_cast<size_t>(i)].pose;
    s.poses.v[static_cast<size_t>(i) * 4 + 0] = p.x;
    s.poses.v[static_cast<size_t>(i) * 4 + 1] = p.y;
    s.poses.v[static_cast<size_t>(i) * 4 + 2] = p.angle;
    s.poses.v[static_cast<size_t>(i) * 4 + 3] = p.aperture;
  }
  return s;
}

void assign_vars(WorldState& w, const SimVars& vars) {
  w.dough.x = vars.x.v;
  w.dough.v = vars.v.v;
  for (int i = 0; i < w.tool_count(); ++i) {
    Pose& p = w.tools[static_cast<size_t>(i)].pose;
    p.x = vars.poses.v[static_cast<size_t>(i) * 4 + 0];
    p.y = vars.poses.v[static_cast<size_t>(i) * 4 + 1];
    p.angle = vars.poses.v[static_cast<size_t>(i) * 4 + 2];
    p.aperture = vars.poses.v[static_cast<size_t>(i) * 4 + 3];
  }
}

// ---------------------------------------------------------------------------
// Neighbor search: uniform grid, cell = interaction radius. Pair order is a
// pure function of positions, which keeps rollouts bit-deterministic.
// ---------------------------------------------------------------------------

void neighbor_pairs(const std::vector<double>& x, int n, double radius, std::vector<int>& out_i,
                    std::vector<int>& out_j) {
  out_i.clear();
  out_j.clear();
  if (n == 0) return;
  const double lo = -0.1, hi = 1.1;
  int cells = std::max(1, static_cast<int>((hi - lo) / radius));
  double cell = (hi - lo) / cells;
  auto cell_of = [&](double q) {
    int c = static_cast<int>((q - lo) / cell);
    return std::clamp(c, 0, cells - 1);
  };
  std::vector<std::vector<int>> grid(static_cast<size_t>(cells) * cells);
  std::vector<int> cx(static_cast<size_t>(n)), cy(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    cx[static_cast<size_t>(i)] = cell_of(x[2 * static_cast<size_t>(i)]);
    cy[static_cast<size_t>(i)] = cell_of(x[2 * static_cast<size_t>(i) + 1]);
    grid[static_cast<size_t>(cx[static_cast<size_t>(i)]) * cells + cy[static_cast<size_t>(i)]].push_back(i);
  }
  double r2 = radius * radius;
  for (int i = 0; i < n; ++i) {
    double xi = x[2 * static_cast<size_t>(i)], yi = x[2 * static_cast<size_t>(i) + 1];
    for (int dc = -1; dc <= 1; ++dc) {
      int cc = cx[static_cast<size_t>(i)] + dc;
      if (cc < 0 || cc >= cells) continue;
      for (int dr = -1; dr <= 1; ++dr) {
        int cr = cy[static_cast<size_t>(i)] + dr;
        if (cr < 0 || cr >= cells) continue;
        for (int j : grid[static_cast<size_t>(cc) * cells + cr]) {
          if (j <= i) continue;
          double dx = x[2 * static_cast<size_t>(j)] - xi, dy = x[2 * static_cast<size_t>(j) + 1] - yi;
          if (dx * dx + dy * dy < r2) {
            out_i.push_back(i);
            out_j.push_back(j);
          }
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Differentiable step
// ---------------------------------------------------------------------------

namespace {

Tensor column(const Tensor& t, int j) {
  int rows = t.dim(0);
  return reshape(slice_cols(t, j, j + 1), Shape{rows});
}

Tensor scalar_at(const Tensor& t, int row, int col) {
  return reshape(slice_cols(slice_rows(t, row, row + 1), col, col + 1), Shape{1});
}

struct ForceAccum {
  Tensor fx, fy;  // [N]
};

struct ContactParams {
  double k, w, kd;
};

// Penalty force from one source: F = softplus(-sdf/w) (k - kd (v.n)) n.
void add_contact(ForceAccum& acc, const Tensor& sdf, const Tensor& nx, const Tensor& ny, const Tensor& vx,
                 const Tensor& vy, const ContactParams& cp) {
  Tensor phi = softplus(scale(sdf, -1.0 / cp.w), 1.0);
  Tensor vn = add(mul(vx, nx), mul(vy, ny));
  Tensor mag = mul(phi, add_const(scale(vn, -cp.kd), cp.k));
  acc.fx = add(acc.fx, mul(mag, nx));
  acc.fy = add(acc.fy, mul(mag, ny));
}

struct CapsuleFrame {
  Tensor cx, cy, cosT, sinT;  // [1] each; constants for static geometry
  double half_len, radius;
};

// Distance and outward normal of a capsule along the local x axis.
void capsule_sdf_op(const CapsuleFrame& f, const Tensor& px, const Tensor& py, Tensor* sdf, Tensor* nx, Tensor* ny) {
  Tensor dx = add_scalar_t(px, neg(f.cx));
  Tensor dy = add_scalar_t(py, neg(f.cy));
  Tensor lx = add(mul_scalar_t(dx, f.cosT), mul_scalar_t(dy, f.sinT));
  Tensor ly = sub(mul_scalar_t(dy, f.cosT), mul_scalar_t(dx, f.sinT));
  Tensor ex = sub(lx, clamp(lx, -f.half_len, f.half_len));
  Tensor dist = vsqrt(add_const(add(mul(ex, ex), mul(ly, ly)), 1e-18));
  *sdf = add_const(dist, -f.radius);
  Tensor inx = vdiv(ex, dist);
  Tensor iny = vdiv(ly, dist);
  *nx = sub(mul_scalar_t(inx, f.cosT), mul_scalar_t(iny, f.sinT));
  *ny = add(mul_scalar_t(iny, f.cosT), mul_scalar_t(inx, f.sinT));
}

void disc_sdf_op(const Tensor& cx, const Tensor& cy, double radius, const Tensor& px, const Tensor& py, Tensor* sdf,
                 Tensor* nx, Tensor* ny) {
  Tensor dx = add_scalar_t(px, neg(cx));
  Tensor dy = add_scalar_t(py, neg(cy));
  Tensor dist = vsqrt(add_const(add(mul(dx, dx), mul(dy, dy)), 1e-18));
  *sdf = add_const(dist, -radius);
  *nx = vdiv(dx, dist);
  *ny = vdiv(dy, dist);
}

}  // namespace

SimVars step_op(const WorldState& world, const SimVars& in, const Tensor& action) {
  const WorldParams& P = world.params;
  int n = world.dough.count();
  int K = world.tool_count();
  int A = world.action_dim();
  if (action.size() != A)
    fail("step: action dim " + std::to_string(action.size()) + " does not match world layout (" + std::to_string(A) +
         ")");
  if (P.dt <= 0) fail("step: dt must be > 0");

  // --- integrate tool poses from smooth-clamped velocity commands ---
  Tensor cmd = smooth_clamp(reshape(action, Shape{1, A}), -1.0, 1.0, P.clamp_beta);
  Tensor layout(Shape{A, K * 4}, 0.0);  // command -> pose-rate map
  {
    int off = 0;
    for (int k = 0; k < K; ++k) {
      auto set = [&](int dof, int col, double speed) {
        layout.v[static_cast<size_t>(off + dof) * (K * 4) + (k * 4 + col)] = speed;
      };
      switch (world.tools[static_cast<size_t>(k)].kind) {
        case ToolKind::Spatula:
          set(0, 0, P.trans_speed);
          set(1, 1, P.trans_speed);
          set(2, 2, P.rot_speed);
          break;
        case ToolKind::RollingPin:  // dof order: translate-y, translate-x
          set(0, 1, P.trans_speed);
          set(1, 0, P.trans_speed);
          break;
        case ToolKind::Gripper:
          set(0, 0, P.trans_speed);
          set(1, 1, P.trans_speed);
          set(2, 2, P.rot_speed);
          set(3, 3, P.aperture_speed);
          break;
        case ToolKind::Knife:
          set(0, 0, P.trans_speed);
          set(1, 1, P.trans_speed);
          break;
      }
      off += sim::action_dim(world.tools[static_cast<size_t>(k)].kind);
    }
  }
  Tensor pose_rate = reshape(matmul(cmd, layout), Shape{K, 4});
  Tensor poses_new = add(in.poses, scale(pose_rate, P.dt));

  // soft lower bound on gripper apertures; other tools keep their column
  bool any_gripper = false;
  for (const auto& t : world.tools) any_gripper |= (t.kind == ToolKind::Gripper);
  if (any_gripper) {
    Tensor ap = slice_cols(poses_new, 3, 4);
    Tensor floored = add_const(softplus(add_const(ap, -P.aperture_min), 80.0), P.aperture_min);
    Tensor mask(Shape{K, 1}, 0.0);
    Tensor inv(Shape{K, 1}, 0.0);
    for (int k = 0; k < K; ++k) {
      bool g = world.tools[static_cast<size_t>(k)].kind == ToolKind::Gripper;
      mask.v[static_cast<size_t>(k)] = g ? 1.0 : 0.0;
      inv.v[static_cast<size_t>(k)] = g ? 0.0 : 1.0;
    }
    Tensor ap_final = add(mul(floored, mask), mul(ap, inv));
    poses_new = concat_cols(slice_cols(poses_new, 0, 3), ap_final);
  }

  // --- drift, then kick: positions advance on the pre-step velocity, forces
  // act at the new positions, damping scales the carried-over velocity ---
  Tensor x_new = clamp(add(in.x, scale(in.v, P.dt)), -0.05, 1.05);

  Tensor px = column(x_new, 0), py = column(x_new, 1);
  Tensor vx = column(in.v, 0), vy = column(in.v, 1);
  ForceAccum acc{Tensor(Shape{n}, 0.0), Tensor(Shape{n}, 0.0)};
  ContactParams cp{P.contact_k, P.contact_w, P.contact_damp};

  for (int k = 0; k < K; ++k) {
    const Tool& tool = world.tools[static_cast<size_t>(k)];
    Tensor cx = scalar_at(poses_new, k, 0);
    Tensor cy = scalar_at(poses_new, k, 1);
    Tensor th = scalar_at(poses_new, k, 2);
    Tensor sdf, nx, ny;
    switch (tool.kind) {
      case ToolKind::RollingPin:
        disc_sdf_op(cx, cy, tool.radius, px, py, &sdf, &nx, &ny);
        add_contact(acc, sdf, nx, ny, vx, vy, cp);
        break;
      case ToolKind::Spatula:
      case ToolKind::Knife: {
        CapsuleFrame f{cx, cy, vcos(th), vsin(th), tool.half_len, tool.radius};
        capsule_sdf_op(f, px, py, &sdf, &nx, &ny);
        add_contact(acc, sdf, nx, ny, vx, vy, cp);
        break;
      }
      case ToolKind::Gripper: {
        Tensor ct = vcos(th), st = vsin(th);
        Tensor half_ap = scale(scalar_at(poses_new, k, 3), 0.5);
        for (double side : {-1.0, 1.0}) {
          // jaw center: c + R(theta) (0, side*aperture/2)
          Tensor off = scale(half_ap, side);
          Tensor jx = sub(cx, mul(st, off));
          Tensor jy = add(cy, mul(ct, off));
          CapsuleFrame f{jx, jy, ct, st, tool.half_len, tool.radius};
          capsule_sdf_op(f, px, py, &sdf, &nx, &ny);
          add_contact(acc, sdf, nx, ny, vx, vy, cp);
        }
        break;
      }
    }
  }

  for (const auto& s : world.statics) {
    double dx = s.x1 - s.x0, dy = s.y1 - s.y0;
    double len = std::sqrt(dx * dx + dy * dy);
    CapsuleFrame f{Tensor::scalar(0.5 * (s.x0 + s.x1)), Tensor::scalar(0.5 * (s.y0 + s.y1)),
                   Tensor::scalar(len > 0 ? dx / len : 1.0), Tensor::scalar(len > 0 ? dy / len : 0.0), 0.5 * len,
                   s.radius};
    Tensor sdf, nx, ny;
    capsule_sdf_op(f, px, py, &sdf, &nx, &ny);
    add_contact(acc, sdf, nx, ny, vx, vy, cp);
  }

  // box walls as half-planes
  {
    Tensor zero(Shape{n}, 0.0), one(Shape{n}, 1.0), mone(Shape{n}, -1.0);
    add_contact(acc, px, one, zero, vx, vy, cp);                        // x >= 0
    add_contact(acc, add_const(neg(px), 1.0), mone, zero, vx, vy, cp);  // x <= 1
    add_contact(acc, py, zero, one, vx, vy, cp);                        // y >= 0
    add_contact(acc, add_const(neg(py), 1.0), zero, mone, vx, vy, cp);  // y <= 1
  }

  // pairwise cohesion + viscosity over a fixed-radius neighborhood
  std::vector<int> pi, pj;
  neighbor_pairs(x_new.v, n, P.cohesion_h, pi, pj);
  Tensor f_pair(Shape{n, 2}, 0.0);
  if (!pi.empty()) {
    int np = static_cast<int>(pi.size());
    Tensor xi = gather_rows(x_new, pi), xj = gather_rows(x_new, pj);
    Tensor vi = gather_rows(in.v, pi), vj = gather_rows(in.v, pj);
    Tensor dvec = sub(xj, xi);
    Tensor d2 = sum_cols(mul(dvec, dvec));
    Tensor d = vsqrt(add_const(d2, 1e-18));
    // kernel (1 - (d/h)^2)^2, exactly zero beyond h
    Tensor kq = relu(add_const(scale(d2, -1.0 / (P.cohesion_h * P.cohesion_h)), 1.0));
    Tensor kern = mul(kq, kq);
    Tensor spring = mul(scale(add_const(d, -P.cohesion_d0), P.cohesion_k), kern);
    Tensor dir = mul_colvec(dvec, vdiv(Tensor(Shape{np}, 1.0), d));
    Tensor f_on_i = add(mul_colvec(dir, spring), mul_colvec(sub(vj, vi), scale(kern, P.viscosity_k)));
    f_pair = sub(scatter_add_rows(f_on_i, pi, n), scatter_add_rows(f_on_i, pj, n));
  }

  // --- integrate ---
  Tensor inv_m(Shape{n});
  for (int i = 0; i < n; ++i) inv_m.v[static_cast<size_t>(i)] = 1.0 / world.dough.mass[static_cast<size_t>(i)];
  Tensor ax = mul(add(acc.fx, column(f_pair, 0)), inv_m);
  Tensor ay = add_const(mul(add(acc.fy, column(f_pair, 1)), inv_m), P.gravity);

  Tensor vx_new = add(scale(vx, P.damping), scale(ax, P.dt));
  Tensor vy_new = add(scale(vy, P.damping), scale(ay, P.dt));
  Tensor v_new = concat_cols(reshape(vx_new, Shape{n, 1}), reshape(vy_new, Shape{n, 1}));

  SimVars out;
  out.x = x_new;
  out.v = v_new;
  out.poses = poses_new;
  return out;
}

WorldState step(const WorldState& w, const std::vector<double>& action, int step_index) {
  SimVars in = vars_of(w);
  Tensor a(Shape{static_cast<int>(action.size())}, action);
  SimVars out = step_op(w, in, a);
  if (!out.x.all_finite() || !out.v.all_finite() || !out.poses.all_finite()) {
    std::string where = step_index >= 0 ? " at step " + std::to_string(step_index) : "";
    fail("sim step produced non-finite state" + where);
  }
  WorldState next = w;
  assign_vars(next, out);
  return next;
}

// ---------------------------------------------------------------------------
// Rendering (plain scalar math; observations feed networks as inputs, they
// carry no gradients)
// ---------------------------------------------------------------------------

namespace {

double capsule_sdf_scalar(double px, double py, double cx, double cy, double cosT, double sinT, double L, double r) {
  double dx = px - cx, dy = py - cy;
  double lx = dx * cosT + dy * sinT;
  double ly = dy * cosT - dx * sinT;
  double ex = lx - std::clamp(lx, -L, L);
  return std::sqrt(ex * ex + ly * ly) - r;
}

double sigmoid_s(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

}  // namespace

Observation render(const WorldState& w) {
  const WorldParams& P = w.params;
  int R = P.render_res;
  Observation obs;
  obs.res = R;
  obs.data.assign(static_cast<size_t>(3) * R * R, 0.0f);

  // channel 0: dough density, per-particle gaussian splat normalized so each
  // particle deposits gain*mass in total (image integral tracks in-view mass)
  {
    std::vector<double> ch(static_cast<size_t>(R) * R, 0.0);
    double sigma = P.render_sigma_px;
    int win = std::max(2, static_cast<int>(std::ceil(4.0 * sigma)));
    int n = w.dough.count();
    std::vector<double> kern(static_cast<size_t>(2 * win + 1) * (2 * win + 1));
    for (int i = 0; i < n; ++i) {
      double pxp = w.dough.x[2 * static_cast<size_t>(i)] * R - 0.5;
      double pyp = (1.0 - w.dough.x[2 * static_cast<size_t>(i) + 1]) * R - 0.5;
      int c0 = static_cast<int>(std::floor(pxp)) - win, r0 = static_cast<int>(std::floor(pyp)) - win;
      double total = 0.0;
      int idx = 0;
      for (int rr = r0; rr <= r0 + 2 * win; ++rr) {
        for (int cc = c0; cc <= c0 + 2 * win; ++cc, ++idx) {
          double d2 = (cc - pxp) * (cc - pxp) + (rr - pyp) * (rr - pyp);
          double kv = std::exp(-d2 / (2.0 * sigma * sigma));
          kern[static_cast<size_t>(idx)] = kv;
          total += kv;
        }
      }
      if (total <= 0) continue;
      double scale_i = P.render_gain * w.dough.mass[static_cast<size_t>(i)] / total;
      idx = 0;
      for (int rr = r0; rr <= r0 + 2 * win; ++rr) {
        for (int cc = c0; cc <= c0 + 2 * win; ++cc, ++idx) {
          if (rr < 0 || rr >= R || cc < 0 || cc >= R) continue;
          ch[static_cast<size_t>(rr) * R + cc] += kern[static_cast<size_t>(idx)] * scale_i;
        }
      }
    }
    for (size_t i = 0; i < ch.size(); ++i) obs.data[i] = static_cast<float>(std::min(1.0, ch[i]));
  }

  // channels 1-2: tool and static occupancy via smoothed SDF indicators
  for (int rr = 0; rr < R; ++rr) {
    for (int cc = 0; cc < R; ++cc) {
      double px = (cc + 0.5) / R;
      double py = 1.0 - (rr + 0.5) / R;
      double clear_tools = 1.0;
      for (const auto& t : w.tools) {
        double ct = std::cos(t.pose.angle), st = std::sin(t.pose.angle);
        if (t.kind == ToolKind::RollingPin) {
          double dx = px - t.pose.x, dy = py - t.pose.y;
          double sdf = std::sqrt(dx * dx + dy * dy) - t.radius;
          clear_tools *= 1.0 - sigmoid_s(-sdf / P.render_tool_w);
        } else if (t.kind == ToolKind::Gripper) {
          for (double side : {-1.0, 1.0}) {
            double off = side * 0.5 * t.pose.aperture;
            double jx = t.pose.x - st * off, jy = t.pose.y + ct * off;
            double sdf = capsule_sdf_scalar(px, py, jx, jy, ct, st, t.half_len, t.radius);
            clear_tools *= 1.0 - sigmoid_s(-sdf / P.render_tool_w);
          }
        } else {
          double sdf = capsule_sdf_scalar(px, py, t.pose.x, t.pose.y, ct, st, t.half_len, t.radius);
          clear_tools *= 1.0 - sigmoid_s(-sdf / P.render_tool_w);
        }
      }
      double clear_static = 1.0;
      for (const auto& s : w.statics) {
        double dx = s.x1 - s.x0, dy = s.y1 - s.y0;
        double len = std::sqrt(dx * dx + dy * dy);
        double ct = len > 0 ? dx / len : 1.0, st = len > 0 ? dy / len : 0.0;
        double sdf = capsule_sdf_scalar(px, py, 0.5 * (s.x0 + s.x1), 0.5 * (s.y0 + s.y1), ct, st, 0.5 * len, s.radius);
        clear_static *= 1.0 - sigmoid_s(-sdf / P.render_tool_w);
      }
      obs.data[(static_cast<size_t>(1) * R + rr) * R + cc] =
          static_cast<float>(std::clamp(1.0 - clear_tools, 0.0, 1.0));
      obs.data[(static_cast<size_t>(2) * R + rr) * R + cc] =
          static_cast<float>(std::clamp(1.0 - clear_static, 0.0, 1.0));
    }
  }
  return obs;
}

// ---------------------------------------------------------------------------

std::vector<double> action_mask(const WorldState& w, int active_tool) {
  if (active_tool < 0 || active_tool >= w.tool_count())
    fail("mask_action: tool index " + std::to_string(active_tool) + " out of range (K=" +
         std::to_string(w.tool_count()) + ")");
  std::vector<double> m(static_cast<size_t>(w.action_dim()), 0.0);
  int off = w.action_offset(active_tool);
  int dim = sim::action_dim(w.tools[static_cast<size_t>(active_tool)].kind);
  for (int i = 0; i < dim; ++i) m[static_cast<size_t>(off + i)] = 1.0;
  return m;
}

std::vector<double> mask_action(const WorldState& w, const std::vector<double>& action, int active_tool) {
  if (action.size() != static_cast<size_t>(w.action_dim())) fail("mask_action: action size mismatch");
  std::vector<double> m = action_mask(w, active_tool);
  std::vector<double> out(action.size());
  for (size_t i = 0; i < action.size(); ++i) out[i] = action[i] * m[i];
  return out;
}

WorldState reset_tools(const WorldState& w) {
  WorldState out = w;
  for (auto& t : out.tools) t.pose = t.init_pose;
  return out;
}

std::array<double, 2> dough_center(const WorldState& w) {
  double sx = 0, sy = 0, sm = 0;
  for (int i = 0; i < w.dough.count(); ++i) {
    double m = w.dough.mass[static_cast<size_t>(i)];
    sx += m * w.dough.x[2 * static_cast<size_t>(i)];
    sy += m * w.dough.x[2 * static_cast<size_t>(i) + 1];
    sm += m;
  }
  if (sm <= 0) return {0.5, 0.5};
  return {sx / sm, sy / sm};
}

// ---------------------------------------------------------------------------
// Serialization: header (magic "DSKW", version u32, N u32, K u32), then
// little-endian f64 arrays in declared field order:
//   params (19 values), tool kinds [K], half_len [K], radius [K],
//   poses [K*4], init poses [K*4], static count, statics [S*5],
//   dough positions [N*2], velocities [N*2], masses [N].
// ---------------------------------------------------------------------------

namespace {

void put_f64(std::ofstream& out, const double* p, size_t n) {
  out.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
}

void get_f64(std::ifstream& in, double* p, size_t n) {
  in.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
  if (!in) fail("world file truncated");
}

std::vector<double> params_to_vec(const WorldParams& p) {
  return {p.dt,
          p.gravity,
          p.damping,
          p.contact_k,
          p.contact_w,
          p.contact_damp,
          p.cohesion_k,
          p.cohesion_d0,
          p.cohesion_h,
          p.viscosity_k,
          p.clamp_beta,
          p.trans_speed,
          p.rot_speed,
          p.aperture_speed,
          p.aperture_min,
          static_cast<double>(p.render_res),
          p.render_sigma_px,
          p.render_gain,
          p.render_tool_w};
}

WorldParams params_from_vec(const std::vector<double>& v) {
  WorldParams p;
  size_t i = 0;
  p.dt = v[i++];
  p.gravity = v[i++];
  p.damping = v[i++];
  p.contact_k = v[i++];
  p.contact_w = v[i++];
  p.contact_damp = v[i++];
  p.cohesion_k = v[i++];
  p.cohesion_d0 = v[i++];
  p.cohesion_h = v[i++];
  p.viscosity_k = v[i++];
  p.clamp_beta = v[i++];
  p.trans_speed = v[i++];
  p.rot_speed = v[i++];
  p.aperture_speed = v[i++];
  p.aperture_min = v[i++];
  p.render_res = static_cast<int>(v[i++]);
  p.render_sigma_px = v[i++];
  p.render_gain = v[i++];
  p.render_tool_w = v[i++];
  return p;
}

}  // namespace

void save_world(const WorldState& w, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("cannot write world file: " + path);
  out.write("DSKW", 4);
  uint32_t version = 1, n = static_cast<uint32_t>(w.dough.count()), k = static_cast<uint32_t>(w.tool_count());
  out.write(reinterpret_cast<const char*>(&version), 4);
  out.write(reinterpret_cast<const char*>(&n), 4);
  out.write(reinterpret_cast<const char*>(&k), 4);

  std::vector<double> pv = params_to_vec(w.params);
  put_f64(out, pv.data(), pv.size());
  std::vector<double> kinds, hl, rad, poses, inits;
  for (const auto& t : w.tools) {
    kinds.push_back(static_cast<double>(t.kind));
    hl.push_back(t.half_len);
    rad.push_back(t.radius);
    poses.insert(poses.end(), {t.pose.x, t.pose.y, t.pose.angle, t.pose.aperture});
    inits.insert(inits.end(), {t.init_pose.x, t.init_pose.y, t.init_pose.angle, t.init_pose.aperture});
  }
  put_f64(out, kinds.data(), kinds.size());
  put_f64(out, hl.data(), hl.size());
  put_f64(out, rad.data(), rad.size());
  put_f64(out, poses.data(), poses.size());
  put_f64(out, inits.data(), inits.size());
  double sc = static_cast<double>(w.statics.size());
  put_f64(out, &sc, 1);
  for (const auto& s : w.statics) {
    double seg[5] = {s.x0, s.y0, s.x1, s.y1, s.radius};
    put_f64(out, seg, 5);
  }
  put_f64(out, w.dough.x.data(), w.dough.x.size());
  put_f64(out, w.dough.v.data(), w.dough.v.size());
  put_f64(out, w.dough.mass.data(), w.dough.mass.size());
  if (!out) fail("world write failed: " + path);
}

WorldState load_world(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open world file: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::strncmp(magic, "DSKW", 4) != 0) fail("bad world file magic: " + path);
  uint32_t version = 0, n = 0, k = 0;
  in.read(reinterpret_cast<char*>(&version), 4);
  in.read(reinterpret_cast<char*>(&n), 4);
  in.read(reinterpret_cast<char*>(&k), 4);
  if (!in || version != 1) fail("unsupported world file version in " + path);

  WorldState w;
  std::vector<double> pv(19);
  get_f64(in, pv.data(), pv.size());
  w.params = params_from_vec(pv);

  std::vector<double> kinds(k), hl(k), rad(k), poses(static_cast<size_t>(k) * 4), inits(static_cast<size_t>(k) * 4);
  if (k > 0) {
    get_f64(in, kinds.data(), k);
    get_f64(in, hl.data(), k);
    get_f64(in, rad.data(), k);
    get_f64(in, poses.data(), poses.size());
    get_f64(in, inits.data(), inits.size());
  }
  for (uint32_t i = 0; i < k; ++i) {
    Tool t;
    t.kind = static_cast<ToolKind>(static_cast<int>(kinds[i]));
    t.half_len = hl[i];
    t.radius = rad[i];
    t.pose = {poses[4 * i], poses[4 * i + 1], poses[4 * i + 2], poses[4 * i + 3]};
    t.init_pose = {inits[4 * i], inits[4 * i + 1], inits[4 * i + 2], inits[4 * i + 3]};
    w.tools.push_back(t);
  }
  double sc = 0;
  get_f64(in, &sc, 1);
  for (int i = 0; i < static_cast<int>(sc); ++i) {
    double seg[5];
    get_f64(in, seg, 5);
    w.statics.push_back({seg[0], seg[1], seg[2], seg[3], seg[4]});
  }
  w.dough.x.resize(static_cast<size_t>(n) * 2);
  w.dough.v.resize(static_cast<size_t>(n) * 2);
  w.dough.mass.resize(n);
  get_f64(in, w.dough.x.data(), w.dough.x.size());
  get_f64(in, w.dough.v.data(), w.dough.v.size());
  get_f64(in, w.dough.mass.data(), w.dough.mass.size());
  return w;
}

}  // namespace dough::sim
