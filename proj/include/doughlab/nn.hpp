#pragma once

#include <string>
#include <vector>

#include "doughlab/config.hpp"
#include "doughlab/tensor.hpp"

namespace dough::nn {

using ad::Shape;
using ad::Tape;
using ad::Tensor;

// Named trainable tensor. `node` is rebound every forward pass (define-by-run)
// so gradients can be looked up after backward.
struct Param {
  std::string name;
  Tensor value;
  int node = -1;

  Tensor watch(Tape& tape) {
    Tensor t = tape.leaf(value);
    node = t.node;
    return t;
  }
};

// Flat registry of the params a model owns, in declaration order.
class ParamSet {
 public:
  Param& add(const std::string& name, Tensor init) {
    params_.push_back(std::make_unique<Param>(Param{name, std::move(init), -1}));
    return *params_.back();
  }
  std::vector<Param*> all() {
    std::vector<Param*> out;
    out.reserve(params_.size());
    for (auto& p : params_) out.push_back(p.get());
    return out;
  }
  Param* find(const std::string& name) {
    for (auto& p : params_)
      if (p->name == name) return p.get();
    return nullptr;
  }
  size_t count() const { return params_.size(); }

 private:
  std::vector<std::unique_ptr<Param>> params_;
};

// One optimizer step over a param subset from a completed backward pass.
// Parameters whose node never appeared in the graph get zero gradient.
void adam_step(ad::Adam& adam, const std::vector<Param*>& params, const ad::Gradients& grads);

// Kaiming-style init helpers (deterministic via our Rng).
Tensor init_linear_w(int in, int out, Rng& rng);
Tensor init_conv_w(int cout, int cin, int k, Rng& rng);
Tensor init_convt_w(int cin, int cout, int k, Rng& rng);

struct Linear {
  Param *w = nullptr, *b = nullptr;
  int in = 0, out = 0;

  void build(ParamSet& ps, const std::string& name, int in_, int out_, Rng& rng);
  // x [B, in] -> [B, out]
  Tensor forward(Tape& tape, const Tensor& x);
};

struct Conv2d {
  Param *w = nullptr, *b = nullptr;
  int cin = 0, cout = 0, k = 4, stride = 2, pad = 1;

  void build(ParamSet& ps, const std::string& name, int cin_, int cout_, Rng& rng, int k_ = 4, int stride_ = 2,
             int pad_ = 1);
  Tensor forward(Tape& tape, const Tensor& x);
};

struct ConvT2d {
  Param *w = nullptr, *b = nullptr;
  int cin = 0, cout = 0, k = 4, stride = 2, pad = 1;

  void build(ParamSet& ps, const std::string& name, int cin_, int cout_, Rng& rng, int k_ = 4, int stride_ = 2,
             int pad_ = 1);
  Tensor forward(Tape& tape, const Tensor& x);
};

// ---------------------------------------------------------------------------
// Checkpoint archive: text manifest (config + tensor directory) followed by a
// contiguous little-endian f32 payload.
// ---------------------------------------------------------------------------

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

class TensorArchive {
 public:
  Config meta;

  void put(const std::string& name, const Tensor& t) { tensors_.push_back({name, t.shape, t.v}); }
  const NamedTensor* get(const std::string& name) const;
  const std::vector<NamedTensor>& tensors() const { return tensors_; }

  void save(const std::string& path) const;
  static TensorArchive load(const std::string& path);

  void put_params(const std::vector<Param*>& params) {
    for (auto* p : params) put(p->name, p->value);
  }
  // Loads values into matching params; missing or mismatched shapes fail.
  void load_params(const std::vector<Param*>& params) const;

 private:
  std::vector<NamedTensor> tensors_;
};

}  // namespace dough::nn
