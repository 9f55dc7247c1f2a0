#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "doughlab/common.hpp"

namespace dough::ad {

using Shape = std::vector<int>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

class Tape;

// Dense f64 tensor. A tensor with node >= 0 is registered on exactly one
// tape; node == -1 means constant (no gradient tracking).
struct Tensor {
  Shape shape;
  std::vector<double> v;
  int node = -1;
  Tape* tape = nullptr;

  Tensor() = default;
  Tensor(Shape s, double fill = 0.0) : shape(std::move(s)), v(static_cast<size_t>(shape_numel(shape)), fill) {}
  Tensor(Shape s, std::vector<double> values);

  static Tensor scalar(double x);
  static Tensor from(std::vector<double> values);  // 1-D

  int64_t size() const { return static_cast<int64_t>(v.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
  int ndim() const { return static_cast<int>(shape.size()); }
  bool on_tape() const { return node >= 0; }
  double item() const;
  double& at(int64_t i) { return v[static_cast<size_t>(i)]; }
  double at(int64_t i) const { return v[static_cast<size_t>(i)]; }
  bool all_finite() const;
};

// Gradient buffers keyed by tape node id; unreached nodes read as zeros.
class Gradients {
 public:
  explicit Gradients(size_t n_nodes) : bufs_(n_nodes) {}

  bool has(int node) const { return node >= 0 && !bufs_[static_cast<size_t>(node)].empty(); }

  // Gradient values for a node, allocating a zero buffer on first touch.
  std::vector<double>& touch(int node, size_t n) {
    auto& b = bufs_[static_cast<size_t>(node)];
    if (b.empty()) b.assign(n, 0.0);
    return b;
  }

  // Zero tensor if the node was never reached.
  Tensor grad_of(const Tensor& t) const;

  const std::vector<double>& raw(int node) const { return bufs_[static_cast<size_t>(node)]; }

 private:
  std::vector<std::vector<double>> bufs_;
};

// Define-by-run tape. Rebuilt per forward pass; backward walks the node
// records in strict reverse order, so gradients are deterministic.
class Tape {
 public:
  // parents[i] < 0 means "constant input, no gradient flows there".
  using BackwardFn = std::function<void(const std::vector<double>& gout, Gradients& g)>;

  struct Node {
    const char* op;
    std::vector<int> parents;
    int64_t out_size;
    BackwardFn backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Registers `value` as a differentiable leaf owned by this tape.
  Tensor leaf(const Tensor& value);

  // Registers an op output. Used by every primitive in ops.cpp.
  Tensor record(const char* op, Tensor out_value, std::vector<int> parents, BackwardFn backward);

  size_t num_nodes() const { return nodes_.size(); }
  const Node& node(size_t i) const { return nodes_[i]; }

  // Reverse-mode sweep from a scalar root. Every node gets visited at most
  // once, in reverse record order.
  Gradients backward(const Tensor& root) const;

 private:
  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Primitives. Each checks shapes and records a VJP closure. Inputs may be
// constants (node == -1) or live on the same tape; mixing tapes is an error.
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
// Broadcast a 1-element (possibly tape-tracked) scalar over a tensor.
Tensor mul_scalar_t(const Tensor& a, const Tensor& s);
Tensor add_scalar_t(const Tensor& a, const Tensor& s);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor vdiv(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double c);
Tensor add_const(const Tensor& a, double c);
Tensor vexp(const Tensor& a);
Tensor vlog(const Tensor& a);
Tensor vtanh(const Tensor& a);
Tensor vsin(const Tensor& a);
Tensor vcos(const Tensor& a);
Tensor vsqrt(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor softplus(const Tensor& a, double beta = 1.0);
Tensor vpow(const Tensor& a, double p);
Tensor vmin(const Tensor& a, const Tensor& b);  // subgradient 0 at ties -> picks a
Tensor vmax(const Tensor& a, const Tensor& b);
Tensor clamp(const Tensor& a, double lo, double hi);              // hard; grad 0 where clamped
Tensor smooth_clamp(const Tensor& a, double lo, double hi, double beta);  // C-inf, odd around the midpoint

Tensor sum(const Tensor& a);   // -> scalar
Tensor mean(const Tensor& a);  // -> scalar

Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a = false, bool trans_b = false);

// Shape plumbing. reshape shares values; slices/gathers copy.
Tensor reshape(const Tensor& a, Shape s);
Tensor slice_rows(const Tensor& a, int r0, int r1);       // [R,C] -> [r1-r0, C]; 1-D treated as [R,1]
Tensor slice_cols(const Tensor& a, int c0, int c1);       // [R,C] -> [R, c1-c0]
Tensor concat_cols(const Tensor& a, const Tensor& b);     // [R,Ca],[R,Cb] -> [R,Ca+Cb]
Tensor concat_rows(const Tensor& a, const Tensor& b);
Tensor gather_rows(const Tensor& a, const std::vector<int>& idx);
Tensor scatter_add_rows(const Tensor& a, const std::vector<int>& idx, int out_rows);
Tensor tile_rows(const Tensor& a, int times);  // [1,C] or [C] -> [times, C]

// Broadcast helpers for batched layers.
Tensor add_rowvec(const Tensor& a, const Tensor& b);  // [R,C] + [C]
Tensor mul_colvec(const Tensor& a, const Tensor& b);  // [R,C] * [R] per-row scale
Tensor sum_cols(const Tensor& a);                     // [R,C] -> [R]
Tensor sum_rows(const Tensor& a);                     // [R,C] -> [C]

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad);
// Transposed convolution; weight layout [Cin, Cout, kh, kw].
Tensor conv2d_transpose(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad);

// ---------------------------------------------------------------------------
// Adam with bias correction.
// ---------------------------------------------------------------------------

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  const AdamConfig& config() const { return cfg_; }
  AdamConfig& config() { return cfg_; }
  int64_t steps() const { return t_; }

  // In-place update of `param` from `grad`; `name` appears in error messages.
  // Call for every parameter each step, then advance() once.
  void update(Tensor& param, const std::vector<double>& grad, const std::string& name);
  void update(Tensor& param, const Tensor& grad, const std::string& name) { update(param, grad.v, name); }
  void advance() { ++t_; }

  void reset() {
    t_ = 0;
    slots_.clear();
  }

 private:
  struct Slot {
    std::vector<double> m, v;
  };
  AdamConfig cfg_;
  int64_t t_ = 0;  // completed steps; bias correction uses t_+1
  std::map<std::string, Slot> slots_;
};

}  // namespace dough::ad
