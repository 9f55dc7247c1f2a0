#include "doughlab/nn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace dough::nn {

void adam_step(ad::Adam& adam, const std::vector<Param*>& params, const ad::Gradients& grads) {
  for (Param* p : params) {
    if (p->node >= 0 && grads.has(p->node)) {
      adam.update(p->value, grads.raw(p->node), p->name);
    } else {
      std::vector<double> zero(p->value.v.size(), 0.0);
      adam.update(p->value, zero, p->name);
    }
  }
  adam.advance();
}

namespace {
Tensor uniform_init(Shape shape, double bound, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& x : t.v) x = rng.uniform(-bound, bound);
  return t;
}
}  // namespace

Tensor init_linear_w(int in, int out, Rng& rng) {
  double bound = std::sqrt(1.0 / in);
  return uniform_init(Shape{in, out}, bound, rng);
}

Tensor init_conv_w(int cout, int cin, int k, Rng& rng) {
  double bound = std::sqrt(1.0 / (cin * k * k));
  return uniform_init(Shape{cout, cin, k, k}, bound, rng);
}

Tensor init_convt_w(int cin, int cout, int k, Rng& rng) {
  double bound = std::sqrt(1.0 / (cin * k * k));
  return uniform_init(Shape{cin, cout, k, k}, bound, rng);
}

void Linear::build(ParamSet& ps, const std::string& name, int in_, int out_, Rng& rng) {
  in = in_;
  out = out_;
  w = &ps.add(name + ".w", init_linear_w(in, out, rng));
  b = &ps.add(name + ".b", Tensor(Shape{out}, 0.0));
}

Tensor Linear::forward(Tape& tape, const Tensor& x) {
  return ad::add_rowvec(ad::matmul(x, w->watch(tape)), b->watch(tape));
}

void Conv2d::build(ParamSet& ps, const std::string& name, int cin_, int cout_, Rng& rng, int k_, int stride_,
                   int pad_) {
  cin = cin_;
  cout = cout_;
  k = k_;
  stride = stride_;
  pad = pad_;
  w = &ps.add(name + ".w", init_conv_w(cout, cin, k, rng));
  b = &ps.add(name + ".b", Tensor(Shape{cout}, 0.0));
}

Tensor Conv2d::forward(Tape& tape, const Tensor& x) {
  return ad::conv2d(x, w->watch(tape), b->watch(tape), stride, pad);
}

void ConvT2d::build(ParamSet& ps, const std::string& name, int cin_, int cout_, Rng& rng, int k_, int stride_,
                    int pad_) {
  cin = cin_;
  cout = cout_;
  k = k_;
  stride = stride_;
  pad = pad_;
  w = &ps.add(name + ".w", init_convt_w(cin, cout, k, rng));
  b = &ps.add(name + ".b", Tensor(Shape{cout}, 0.0));
}

Tensor ConvT2d::forward(Tape& tape, const Tensor& x) {
  return ad::conv2d_transpose(x, w->watch(tape), b->watch(tape), stride, pad);
}

// ---------------------------------------------------------------------------
// TensorArchive
// ---------------------------------------------------------------------------

const NamedTensor* TensorArchive::get(const std::string& name) const {
  for (const auto& t : tensors_)
    if (t.name == name) return &t;
  return nullptr;
}

void TensorArchive::save(const std::string& path) const {
  std::ostringstream head;
  head << "DSKC1\n";
  std::string cfg = meta.to_text();
  head << "meta_bytes " << cfg.size() << "\n" << cfg;
  int64_t offset = 0;
  for (const auto& t : tensors_) {
    head << "tensor " << t.name << " " << t.shape.size();
    for (int d : t.shape) head << " " << d;
    head << " " << offset << "\n";
    offset += static_cast<int64_t>(t.values.size());
  }
  head << "payload_f32 " << offset << "\n";

  std::ofstream out(path, std::ios::binary);
  if (!out) fail("cannot write checkpoint: " + path);
  std::string h = head.str();
  out.write(h.data(), static_cast<std::streamsize>(h.size()));
  for (const auto& t : tensors_) {
    std::vector<float> f(t.values.size());
    for (size_t i = 0; i < f.size(); ++i) f[i] = static_cast<float>(t.values[i]);
    out.write(reinterpret_cast<const char*>(f.data()), static_cast<std::streamsize>(f.size() * sizeof(float)));
  }
  if (!out) fail("checkpoint write failed: " + path);
}

TensorArchive TensorArchive::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open checkpoint: " + path);
  std::string magic;
  std::getline(in, magic);
  if (magic != "DSKC1") fail("bad checkpoint magic in " + path);

  TensorArchive ar;
  std::string line;
  std::getline(in, line);
  std::istringstream ml(line);
  std::string tag;
  size_t meta_bytes = 0;
  ml >> tag >> meta_bytes;
  if (tag != "meta_bytes") fail("bad checkpoint header in " + path);
  std::string cfg(meta_bytes, '\0');
  in.read(cfg.data(), static_cast<std::streamsize>(meta_bytes));
  ar.meta = Config::parse(cfg);

  int64_t payload = -1;
  struct Entry {
    std::string name;
    Shape shape;
    int64_t offset;
  };
  std::vector<Entry> entries;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    ls >> tag;
    if (tag == "tensor") {
      Entry e;
      size_t nd = 0;
      ls >> e.name >> nd;
      e.shape.resize(nd);
      for (auto& d : e.shape) ls >> d;
      ls >> e.offset;
      entries.push_back(std::move(e));
    } else if (tag == "payload_f32") {
      ls >> payload;
      break;
    } else {
      fail("bad checkpoint line: " + line);
    }
  }
  if (payload < 0) fail("checkpoint missing payload header: " + path);
  std::vector<float> data(static_cast<size_t>(payload));
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(float)));
  if (!in) fail("checkpoint payload truncated: " + path);

  for (const auto& e : entries) {
    int64_t n = ad::shape_numel(e.shape);
    NamedTensor t{e.name, e.shape, {}};
    t.values.resize(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) t.values[static_cast<size_t>(i)] = data[static_cast<size_t>(e.offset + i)];
    ar.tensors_.push_back(std::move(t));
  }
  return ar;
}

void TensorArchive::load_params(const std::vector<Param*>& params) const {
  for (Param* p : params) {
    const NamedTensor* t = get(p->name);
    if (!t) fail("checkpoint missing tensor '" + p->name + "'");
    if (t->shape != p->value.shape)
      fail("checkpoint tensor '" + p->name + "' has shape " + ad::shape_str(t->shape) + ", expected " +
           ad::shape_str(p->value.shape));
    p->value.v = t->values;
  }
}

}  // namespace dough::nn
