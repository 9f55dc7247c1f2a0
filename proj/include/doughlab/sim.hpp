#pragma once

#include <array>
#include <string>
#include <vector>

#include "doughlab/tensor.hpp"

namespace dough::sim {

using ad::Tape;
using ad::Tensor;

enum class ToolKind { Spatula = 0, RollingPin = 1, Gripper = 2, Knife = 3 };

int action_dim(ToolKind kind);  // spatula 3, rolling pin 2, gripper 4, knife 2
const char* tool_kind_name(ToolKind kind);
ToolKind tool_kind_from_name(const std::string& name);

struct Pose {
  double x = 0, y = 0, angle = 0, aperture = 0;
};

// Rigid SDF tool under velocity control. Spatula/knife are capsules along the
// local x axis; the rolling pin is a disc; the gripper is two parallel
// capsule jaws offset +-aperture/2 along the local y axis.
struct Tool {
  ToolKind kind = ToolKind::Spatula;
  double half_len = 0.06;
  double radius = 0.01;
  Pose pose;
  Pose init_pose;
};

struct StaticSeg {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0, radius = 0.01;
};

struct WorldParams {
  double dt = 0.02;
  double gravity = -9.8;
  double damping = 0.98;
  double contact_k = 250.0;     // contact penalty accel scale
  double contact_w = 0.01;      // softplus(-sdf/w) width
  double contact_damp = 8.0;    // normal-velocity damping inside the contact skin
  double cohesion_k = 60.0;     // pair spring accel per meter of stretch
  double cohesion_d0 = 0.011;   // pair rest distance
  double cohesion_h = 0.033;    // neighborhood radius
  double viscosity_k = 3.0;     // pair velocity smoothing
  double clamp_beta = 20.0;     // smooth action clamp sharpness
  double trans_speed = 0.5;     // m/s at full command
  double rot_speed = 2.0;       // rad/s at full command
  double aperture_speed = 0.25; // m/s at full command
  double aperture_min = 0.015;
  int render_res = 32;
  double render_sigma_px = 1.0;
  double render_gain = 0.5;
  double render_tool_w = 0.012;  // sdf indicator smoothing, meters
};

struct DoughState {
  std::vector<double> x;     // N x 2
  std::vector<double> v;     // N x 2
  std::vector<double> mass;  // N

  int count() const { return static_cast<int>(mass.size()); }
};

struct WorldState {
  DoughState dough;
  std::vector<Tool> tools;
  std::vector<StaticSeg> statics;
  WorldParams params;

  int tool_count() const { return static_cast<int>(tools.size()); }
  int action_dim() const;
  int action_offset(int tool) const;  // start of the tool's block
  void validate() const;
};

// 3 x R x R raster: dough density splat, tool occupancy, static occupancy.
struct Observation {
  int channels = 3;
  int res = 0;
  std::vector<float> data;

  float at(int c, int r, int col) const { return data[(static_cast<size_t>(c) * res + r) * res + col]; }
  size_t size() const { return data.size(); }
};

// Differentiable world variables; constants (no tape) give the plain step.
struct SimVars {
  Tensor x;      // [N,2]
  Tensor v;      // [N,2]
  Tensor poses;  // [K,4] rows (x, y, angle, aperture)
};

SimVars vars_of(const WorldState& w);
void assign_vars(WorldState& w, const SimVars& vars);

// One semi-implicit Euler step. All force terms are smooth in positions,
// velocities, poses and actions; composed from tape primitives so gradients
// flow to every input. `action` is the raw joint command [A]; it passes
// through a smooth clamp onto (-1,1) before scaling to velocities.
SimVars step_op(const WorldState& world, const SimVars& in, const Tensor& action);

// Plain step on concrete state. step_index is used in error messages.
WorldState step(const WorldState& w, const std::vector<double>& action, int step_index = -1);

Observation render(const WorldState& w);

std::vector<double> mask_action(const WorldState& w, const std::vector<double>& action, int active_tool);
// 0/1 mask with ones over the active tool's block.
std::vector<double> action_mask(const WorldState& w, int active_tool);

WorldState reset_tools(const WorldState& w);

std::array<double, 2> dough_center(const WorldState& w);

// Fixed-radius neighbor pairs (i < j), deterministic order.
void neighbor_pairs(const std::vector<double>& x, int n, double radius, std::vector<int>& out_i,
                    std::vector<int>& out_j);

// Flat binary serialization, magic "DSKW". Bit-exact round trip.
void save_world(const WorldState& w, const std::string& path);
WorldState load_world(const std::string& path);

}  // namespace dough::sim
