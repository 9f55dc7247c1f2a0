#include "doughlab/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

namespace dough::ad {

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) {
    if (d < 0) fail("negative extent in shape " + shape_str(s));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream out;
  out << "[";
  for (size_t i = 0; i < s.size(); ++i) out << (i ? "," : "") << s[i];
  out << "]";
  return out.str();
}

Tensor::Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), v(std::move(values)) {
  if (shape_numel(shape) != static_cast<int64_t>(v.size()))
    fail("tensor: shape " + shape_str(shape) + " does not match " + std::to_string(v.size()) + " values");
}

Tensor Tensor::scalar(double x) {
  Tensor t(Shape{});
  t.v = {x};
  return t;
}

Tensor Tensor::from(std::vector<double> values) {
  Shape s{static_cast<int>(values.size())};
  return Tensor(std::move(s), std::move(values));
}

double Tensor::item() const {
  if (v.size() != 1) fail("item() on non-scalar tensor of shape " + shape_str(shape));
  return v[0];
}

bool Tensor::all_finite() const {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

Tensor Gradients::grad_of(const Tensor& t) const {
  Tensor g(t.shape, 0.0);
  if (t.node >= 0 && !bufs_[static_cast<size_t>(t.node)].empty()) g.v = bufs_[static_cast<size_t>(t.node)];
  return g;
}

Tensor Tape::leaf(const Tensor& value) {
  Tensor out = value;
  out.tape = this;
  out.node = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{"leaf", {}, out.size(), nullptr});
  return out;
}

Tensor Tape::record(const char* op, Tensor out_value, std::vector<int> parents, BackwardFn backward) {
  out_value.tape = this;
  out_value.node = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{op, std::move(parents), out_value.size(), std::move(backward)});
  return out_value;
}

Gradients Tape::backward(const Tensor& root) const {
  if (root.size() != 1) fail("backward: root must be scalar, got shape " + shape_str(root.shape));
  if (root.tape != this || root.node < 0) fail("backward: root is not on this tape");
  Gradients g(nodes_.size());
  g.touch(root.node, 1)[0] = 1.0;
  for (int id = root.node; id >= 0; --id) {
    if (!g.has(id)) continue;
    const Node& n = nodes_[static_cast<size_t>(id)];
    if (n.backward) n.backward(g.raw(id), g);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Recording helpers
// ---------------------------------------------------------------------------

namespace {

Tape* tape_of(std::initializer_list<const Tensor*> ins, const char* op) {
  Tape* t = nullptr;
  for (const Tensor* x : ins) {
    if (!x->on_tape()) continue;
    if (t && x->tape != t) fail(std::string(op) + ": inputs live on different tapes");
    t = x->tape;
  }
  return t;
}

void check_same(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape)
    fail(std::string(op) + ": shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
}

void axpy(std::vector<double>& acc, const std::vector<double>& g) {
  for (size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
}

// Elementwise unary: out[i] = f(a[i]); va-captured derivative d[i] multiplies gout.
Tensor unary_op(const char* op, const Tensor& a, std::vector<double> out_v, std::vector<double> dv) {
  Tensor out(a.shape, std::move(out_v));
  Tape* t = tape_of({&a}, op);
  if (!t) return out;
  int pa = a.node;
  return t->record(op, std::move(out), {pa}, [pa, d = std::move(dv)](const std::vector<double>& g, Gradients& gr) {
    if (pa < 0) return;
    auto& ga = gr.touch(pa, d.size());
    for (size_t i = 0; i < d.size(); ++i) ga[i] += g[i] * d[i];
  });
}

struct MatDims {
  int m, k, n;
};

// c[m,n] += a[m,k] * b[k,n]
void matmul_raw(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    double* crow = c + static_cast<int64_t>(i) * n;
    const double* arow = a + static_cast<int64_t>(i) * k;
    for (int l = 0; l < k; ++l) {
      double av = arow[l];
      if (av == 0.0) continue;
      const double* brow = b + static_cast<int64_t>(l) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

std::vector<double> transpose_raw(const std::vector<double>& a, int rows, int cols) {
  std::vector<double> out(a.size());
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) out[static_cast<int64_t>(c) * rows + r] = a[static_cast<int64_t>(r) * cols + c];
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise primitives
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  check_same("add", a, b);
  Tensor out(a.shape);
  for (int64_t i = 0; i < a.size(); ++i) out.v[i] = a.v[i] + b.v[i];
  Tape* t = tape_of({&a, &b}, "add");
  if (!t) return out;
  int pa = a.node, pb = b.node;
  size_t n = out.v.size();
  return t->record("add", std::move(out), {pa, pb}, [pa, pb, n](const std::vector<double>& g, Gradients& gr) {
    if (pa >= 0) axpy(gr.touch(pa, n), g);
    if (pb >= 0) axpy(gr.touch(pb, n), g);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same("sub", a, b);
  Tensor out(a.shape);
  for (int64_t i = 0; i < a.size(); ++i) out.v[i] = a.v[i] - b.v[i];
  Tape* t = tape_of({&a, &b}, "sub");
  if (!t) return out;
  int pa = a.node, pb = b.node;
  size_t n = out.v.size();
  return t->record("sub", std::move(out), {pa, pb}, [pa, pb, n](const std::vector<double>& g, Gradients& gr) {
    if (pa >= 0) axpy(gr.touch(pa, n), g);
    if (pb >= 0) {
      auto& gb = gr.touch(pb, n);
      for (size_t i = 0; i < n; ++i) gb[i] -= g[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same("mul", a, b);
  Tensor out(a.shape);
  for (int64_t i = 0; i < a.size(); ++i) out.v[i] = a.v[i] * b.v[i];
  Tape* t = tape_of({&a, &b}, "mul");
  if (!t) return out;
  int pa = a.node, pb = b.node;
  return t->record("mul", std::move(out), {pa, pb},
                   [pa, pb, av = a.v, bv = b.v](const std::vector<double>& g, Gradients& gr) {
                     size_t n = g.size();
                     if (pa >= 0) {
                       auto& ga = gr.touch(pa, n);
                       for (size_t i = 0; i < n; ++i) ga[i] += g[i] * bv[i];
                     }
                     if (pb >= 0) {
                       auto& gb = gr.touch(pb, n);
                       for (size_t i = 0; i < n; ++i) gb[i] += g[i] * av[i];
                     }
                   });
}

Tensor vdiv(const Tensor& a, const Tensor& b) {
  check_same("div", a, b);
  Tensor out(a.shape);
  for (int64_t i = 0; i < a.size(); ++i) out.v[i] = a.v[i] / b.v[i];
  Tape* t = tape_of({&a, &b}, "div");
  if (!t) return out;
  int pa = a.node, pb = b.node;
  return t->record("div", std::move(out), {pa, pb},
                   [pa, pb, av = a.v, bv = b.v](const std::vector<double>& g, Gradients& gr) {
                     size_t n = g.size();
                     if (pa >= 0) {
                       auto& ga = gr.touch(pa, n);
                       for (size_t i = 0; i < n; ++i) ga[i] += g[i] / bv[i];
                     }
                     if (pb >= 0) {
                       auto& gb = gr.touch(pb, n);
                       for (size_t i = 0; i < n; ++i) gb[i] -= g[i] * av[i] / (bv[i] * bv[i]);
                     }
                   });
}

Tensor mul_scalar_t(const Tensor& a, const Tensor& s) {
  if (s.size() != 1) fail("mul_scalar_t: scalar operand has shape " + shape_str(s.shape));
  double sv = s.v[0];
  Tensor out(a.shape);
  for (int64_t i = 0; i < a.size(); ++i) out.v[i] = a.v[i] * sv;
  Tape* t = tape_of({&a, &s}, "mul_scalar_t");
  if (!t) return out;
  int pa = a.node, ps = s.node;
  return t->record("mul_scalar_t", std::move(out), {pa, ps},
                   [pa, ps, sv, av = a.v](const std::vector<double>& g, Gradients& gr) {
                     size_t n = g.size();
                     if (pa >= 0) {
                       auto& ga = gr.touch(pa, n);
                       for (size_t i = 0; i < n; ++i) ga[i] += g[i] * sv;
                     }
                     if (ps >= 0) {
                       double acc = 0;
                       for (size_t i = 0; i < n; ++i) acc += g[i] * av[i];
                       gr.touch(ps, 1)[0] += acc;
                     }
                   });
}

Tensor add_scalar_t(const Tensor& a, const Tensor& s) {
  if (s.size() != 1) fail("add_scalar_t: scalar operand has shape " + shape_str(s.shape));
  double sv = s.v[0];
  Tensor out(a.shape);
  for (int64_t i = 0; i < a.size(); ++i) out.v[i] = a.v[i] + sv;
  Tape* t = tape_of({&a, &s}, "add_scalar_t");
  if (!t) return out;
  int pa = a.node, ps = s.node;
  size_t n = out.v.size();
  return t->record("add_scalar_t", std::move(out), {pa, ps},
                   [pa, ps, n](const std::vector<double>& g, Gradients& gr) {
                     if (pa >= 0) axpy(gr.touch(pa, n), g);
                     if (ps >= 0) {
                       double acc = 0;
                       for (size_t i = 0; i < n; ++i) acc += g[i];
                       gr.touch(ps, 1)[0] += acc;
                     }
                   });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor scale(const Tensor& a, double c) {
  Tensor out(a.shape);
  for (int64_t i = 0; i < a.size(); ++i) out.v[i] = a.v[i] * c;
  Tape* t = tape_of({&a}, "scale");
  if (!t) return out;
  int pa = a.node;
  size_t n = out.v.size();
  return t->record("scale", std::move(out), {pa}, [pa, c, n](const std::vector<double>& g, Gradients& gr) {
    if (pa < 0) return;
    auto& ga = gr.touch(pa, n);
    for (size_t i = 0; i < n; ++i) ga[i] += g[i] * c;
  });
}

Tensor add_const(const Tensor& a, double c) {
  Tensor out(a.shape);
  for (int64_t i = 0; i < a.size(); ++i) out.v[i] = a.v[i] + c;
  Tape* t = tape_of({&a}, "add_const");
  if (!t) return out;
  int pa = a.node;
  size_t n = out.v.size();
  return t->record("add_const", std::move(out), {pa}, [pa, n](const std::vector<double>& g, Gradients& gr) {
    if (pa >= 0) axpy(gr.touch(pa, n), g);
  });
}

Tensor vexp(const Tensor& a) {
  std::vector<double> o(a.v.size()), d(a.v.size());
  for (size_t i = 0; i < a.v.size(); ++i) {
    o[i] = std::exp(a.v[i]);
    d[i] = o[i];
  }
  return unary_op("exp", a, std::move(o), std::move(d));
}

Tensor vlog(const Tensor& a) {
  std::vector<double> o(a.v.size()), d(a.v.size());
  for (size_t i = 0; i < a.v.size(); ++i) {
    o[i] = std::log(a.v[i]);
    d[i] = 1.0 / a.v[i];
  }
  return unary_op("log", a, std::move(o), std::move(d));
}

Tensor vtanh(const Tensor& a) {
  std::vector<double> o(a.v.size()), d(a.v.size());
  for (size_t i = 0; i < a.v.size(); ++i) {
    o[i] = std::tanh(a.v[i]);
    d[i] = 1.0 - o[i] * o[i];
  }
  return unary_op("tanh", a, std::move(o), std::move(d));
}

Tensor vsin(const Tensor& a) {
  std::vector<double> o(a.v.size()), d(a.v.size());
  for (size_t i = 0; i < a.v.size(); ++i) {
    o[i] = std::sin(a.v[i]);
    d[i] = std::cos(a.v[i]);
  }
  return unary_op("sin", a, std::move(o), std::move(d));
}

Tensor vcos(const Tensor& a) {
  std::vector<double> o(a.v.size()), d(a.v.size());
  for (size_t i = 0; i < a.v.size(); ++i) {
    o[i] = std::cos(a.v[i]);
    d[i] = -std::sin(a.v[i]);
  }
  return unary_op("cos", a, std::move(o), std::move(d));
}

Tensor vsqrt(const Tensor& a) {
  std::vector<double> o(a.v.size()), d(a.v.size());
  for (size_t i = 0; i < a.v.size(); ++i) {
    o[i] = std::sqrt(a.v[i]);
    d[i] = 0.5 / o[i];
  }
  return unary_op("sqrt", a, std::move(o), std::move(d));
}

Tensor relu(const Tensor& a) {
  std::vector<double> o(a.v.size()), d(a.v.size());
  for (size_t i = 0; i < a.v.size(); ++i) {
    o[i] = a.v[i] > 0.0 ? a.v[i] : 0.0;
    d[i] = a.v[i] > 0.0 ? 1.0 : 0.0;
  }
  return unary_op("relu", a, std::move(o), std::move(d));
}

namespace {
inline double sigmoid_stable(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}
inline double softplus_stable(double x, double beta) {
  double z = beta * x;
  if (z > 30.0) return x + std::log1p(std::exp(-z)) / beta;
  return std::log1p(std::exp(z)) / beta;
}
}  // namespace

Tensor sigmoid(const Tensor& a) {
  std::vector<double> o(a.v.size()), d(a.v.size());
  for (size_t i = 0; i < a.v.size(); ++i) {
    o[i] = sigmoid_stable(a.v[i]);
    d[i] = o[i] * (1.0 - o[i]);
  }
  return unary_op("sigmoid", a, std::move(o), std::move(d));
}

Tensor softplus(const Tensor& a, double beta) {
  std::vector<double> o(a.v.size()), d(a.v.size());
  for (size_t i = 0; i < a.v.size(); ++i) {
    o[i] = softplus_stable(a.v[i], beta);
    d[i] = sigmoid_stable(beta * a.v[i]);
  }
  return unary_op("softplus", a, std::move(o), std::move(d));
}

Tensor vpow(const Tensor& a, double p) {
  std::vector<double> o(a.v.size()), d(a.v.size());
  for (size_t i = 0; i < a.v.size(); ++i) {
    o[i] = std::pow(a.v[i], p);
    d[i] = p * std::pow(a.v[i], p - 1.0);
  }
  return unary_op("pow", a, std::move(o), std::move(d));
}

Tensor vmin(const Tensor& a, const Tensor& b) {
  check_same("min", a, b);
  Tensor out(a.shape);
  for (int64_t i = 0; i < a.size(); ++i) out.v[i] = std::min(a.v[i], b.v[i]);
  Tape* t = tape_of({&a, &b}, "min");
  if (!t) return out;
  int pa = a.node, pb = b.node;
  return t->record("min", std::move(out), {pa, pb},
                   [pa, pb, av = a.v, bv = b.v](const std::vector<double>& g, Gradients& gr) {
                     size_t n = g.size();
                     // ties get zero subgradient on both sides
                     if (pa >= 0) {
                       auto& ga = gr.touch(pa, n);
                       for (size_t i = 0; i < n; ++i)
                         if (av[i] < bv[i]) ga[i] += g[i];
                     }
                     if (pb >= 0) {
                       auto& gb = gr.touch(pb, n);
                       for (size_t i = 0; i < n; ++i)
                         if (bv[i] < av[i]) gb[i] += g[i];
                     }
                   });
}

Tensor vmax(const Tensor& a, const Tensor& b) {
  check_same("max", a, b);
  Tensor out(a.shape);
  for (int64_t i = 0; i < a.size(); ++i) out.v[i] = std::max(a.v[i], b.v[i]);
  Tape* t = tape_of({&a, &b}, "max");
  if (!t) return out;
  int pa = a.node, pb = b.node;
  return t->record("max", std::move(out), {pa, pb},
                   [pa, pb, av = a.v, bv = b.v](const std::vector<double>& g, Gradients& gr) {
                     size_t n = g.size();
                     if (pa >= 0) {
                       auto& ga = gr.touch(pa, n);
                       for (size_t i = 0; i < n; ++i)
                         if (av[i] > bv[i]) ga[i] += g[i];
                     }
                     if (pb >= 0) {
                       auto& gb = gr.touch(pb, n);
                       for (size_t i = 0; i < n; ++i)
                         if (bv[i] > av[i]) gb[i] += g[i];
                     }
                   });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  std::vector<double> o(a.v.size()), d(a.v.size());
  for (size_t i = 0; i < a.v.size(); ++i) {
    o[i] = std::clamp(a.v[i], lo, hi);
    d[i] = (a.v[i] > lo && a.v[i] < hi) ? 1.0 : 0.0;
  }
  return unary_op("clamp", a, std::move(o), std::move(d));
}

Tensor smooth_clamp(const Tensor& a, double lo, double hi, double beta) {
  if (!(lo < hi)) fail("smooth_clamp: lo must be < hi");
  // s(u) = u - softplus(u - hi) + softplus(lo - u); maps R onto (lo, hi),
  // near-identity in the interior, exact 0 at u = 0 when lo = -hi.
  std::vector<double> o(a.v.size()), d(a.v.size());
  for (size_t i = 0; i < a.v.size(); ++i) {
    double u = a.v[i];
    o[i] = u - softplus_stable(u - hi, beta) + softplus_stable(lo - u, beta);
    d[i] = 1.0 - sigmoid_stable(beta * (u - hi)) - sigmoid_stable(beta * (lo - u));
  }
  return unary_op("smooth_clamp", a, std::move(o), std::move(d));
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

Tensor sum(const Tensor& a) {
  double s = 0;
  for (double x : a.v) s += x;
  Tensor out = Tensor::scalar(s);
  Tape* t = tape_of({&a}, "sum");
  if (!t) return out;
  int pa = a.node;
  size_t n = a.v.size();
  return t->record("sum", std::move(out), {pa}, [pa, n](const std::vector<double>& g, Gradients& gr) {
    if (pa < 0) return;
    auto& ga = gr.touch(pa, n);
    for (size_t i = 0; i < n; ++i) ga[i] += g[0];
  });
}

Tensor mean(const Tensor& a) {
  if (a.size() == 0) fail("mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

// ---------------------------------------------------------------------------
// matmul
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
  if (a.ndim() != 2 || b.ndim() != 2)
    fail("matmul: need 2-D operands, got " + shape_str(a.shape) + " and " + shape_str(b.shape));
  int m = trans_a ? a.dim(1) : a.dim(0);
  int k = trans_a ? a.dim(0) : a.dim(1);
  int kb = trans_b ? b.dim(1) : b.dim(0);
  int n = trans_b ? b.dim(0) : b.dim(1);
  if (k != kb)
    fail("matmul: inner extents differ, " + shape_str(a.shape) + (trans_a ? "^T" : "") + " x " +
         shape_str(b.shape) + (trans_b ? "^T" : ""));

  std::vector<double> am = trans_a ? transpose_raw(a.v, a.dim(0), a.dim(1)) : a.v;
  std::vector<double> bm = trans_b ? transpose_raw(b.v, b.dim(0), b.dim(1)) : b.v;
  Tensor out(Shape{m, n});
  matmul_raw(am.data(), bm.data(), out.v.data(), m, k, n);

  Tape* t = tape_of({&a, &b}, "matmul");
  if (!t) return out;
  int pa = a.node, pb = b.node;
  return t->record(
      "matmul", std::move(out), {pa, pb},
      [pa, pb, am = std::move(am), bm = std::move(bm), m, k, n, trans_a, trans_b](const std::vector<double>& g,
                                                                                  Gradients& gr) {
        if (pa >= 0) {
          // dA' = g . B'^T  -> [m,k]
          std::vector<double> bt = transpose_raw(bm, k, n);
          std::vector<double> da(static_cast<size_t>(m) * k, 0.0);
          matmul_raw(g.data(), bt.data(), da.data(), m, n, k);
          auto& ga = gr.touch(pa, da.size());
          if (trans_a) {
            std::vector<double> dat = transpose_raw(da, m, k);
            axpy(ga, dat);
          } else {
            axpy(ga, da);
          }
        }
        if (pb >= 0) {
          // dB' = A'^T . g  -> [k,n]
          std::vector<double> at = transpose_raw(am, m, k);
          std::vector<double> db(static_cast<size_t>(k) * n, 0.0);
          matmul_raw(at.data(), g.data(), db.data(), k, m, n);
          auto& gb = gr.touch(pb, db.size());
          if (trans_b) {
            std::vector<double> dbt = transpose_raw(db, k, n);
            axpy(gb, dbt);
          } else {
            axpy(gb, db);
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Shape plumbing
// ---------------------------------------------------------------------------

Tensor reshape(const Tensor& a, Shape s) {
  if (shape_numel(s) != a.size())
    fail("reshape: cannot view " + shape_str(a.shape) + " as " + shape_str(s));
  Tensor out(std::move(s), a.v);
  Tape* t = tape_of({&a}, "reshape");
  if (!t) return out;
  int pa = a.node;
  size_t n = a.v.size();
  return t->record("reshape", std::move(out), {pa}, [pa, n](const std::vector<double>& g, Gradients& gr) {
    if (pa >= 0) axpy(gr.touch(pa, n), g);
  });
}

namespace {
// Rows/cols view: 1-D [R] is treated as [R,1]; 2-D as-is.
void rows_cols(const Tensor& a, const char* op, int* rows, int* cols) {
  if (a.ndim() == 1) {
    *rows = a.dim(0);
    *cols = 1;
  } else if (a.ndim() == 2) {
    *rows = a.dim(0);
    *cols = a.dim(1);
  } else {
    fail(std::string(op) + ": need 1-D or 2-D tensor, got " + shape_str(a.shape));
  }
}
Shape like_rows(const Tensor& a, int new_rows) {
  if (a.ndim() == 1) return Shape{new_rows};
  return Shape{new_rows, a.dim(1)};
}
}  // namespace

Tensor slice_rows(const Tensor& a, int r0, int r1) {
  int R, C;
  rows_cols(a, "slice_rows", &R, &C);
  if (r0 < 0 || r1 > R || r0 > r1) fail("slice_rows: bad range [" + std::to_string(r0) + "," + std::to_string(r1) + ") for " + shape_str(a.shape));
  Tensor out(like_rows(a, r1 - r0));
  std::copy(a.v.begin() + static_cast<int64_t>(r0) * C, a.v.begin() + static_cast<int64_t>(r1) * C, out.v.begin());
  Tape* t = tape_of({&a}, "slice_rows");
  if (!t) return out;
  int pa = a.node;
  size_t total = a.v.size();
  return t->record("slice_rows", std::move(out), {pa},
                   [pa, r0, C, total](const std::vector<double>& g, Gradients& gr) {
                     if (pa < 0) return;
                     auto& ga = gr.touch(pa, total);
                     for (size_t i = 0; i < g.size(); ++i) ga[static_cast<size_t>(r0) * C + i] += g[i];
                   });
}

Tensor slice_cols(const Tensor& a, int c0, int c1) {
  if (a.ndim() != 2) fail("slice_cols: need 2-D tensor, got " + shape_str(a.shape));
  int R = a.dim(0), C = a.dim(1);
  if (c0 < 0 || c1 > C || c0 > c1) fail("slice_cols: bad range for " + shape_str(a.shape));
  int W = c1 - c0;
  Tensor out(Shape{R, W});
  for (int r = 0; r < R; ++r)
    for (int c = 0; c < W; ++c) out.v[static_cast<size_t>(r) * W + c] = a.v[static_cast<size_t>(r) * C + c0 + c];
  Tape* t = tape_of({&a}, "slice_cols");
  if (!t) return out;
  int pa = a.node;
  size_t total = a.v.size();
  return t->record("slice_cols", std::move(out), {pa},
                   [pa, c0, C, W, R, total](const std::vector<double>& g, Gradients& gr) {
                     if (pa < 0) return;
                     auto& ga = gr.touch(pa, total);
                     for (int r = 0; r < R; ++r)
                       for (int c = 0; c < W; ++c)
                         ga[static_cast<size_t>(r) * C + c0 + c] += g[static_cast<size_t>(r) * W + c];
                   });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(0) != b.dim(0))
    fail("concat_cols: incompatible shapes " + shape_str(a.shape) + " and " + shape_str(b.shape));
  int R = a.dim(0), Ca = a.dim(1), Cb = b.dim(1);
  Tensor out(Shape{R, Ca + Cb});
  for (int r = 0; r < R; ++r) {
    std::copy(a.v.begin() + static_cast<int64_t>(r) * Ca, a.v.begin() + static_cast<int64_t>(r + 1) * Ca,
              out.v.begin() + static_cast<int64_t>(r) * (Ca + Cb));
    std::copy(b.v.begin() + static_cast<int64_t>(r) * Cb, b.v.begin() + static_cast<int64_t>(r + 1) * Cb,
              out.v.begin() + static_cast<int64_t>(r) * (Ca + Cb) + Ca);
  }
  Tape* t = tape_of({&a, &b}, "concat_cols");
  if (!t) return out;
  int pa = a.node, pb = b.node;
  size_t na = a.v.size(), nb = b.v.size();
  return t->record("concat_cols", std::move(out), {pa, pb},
                   [pa, pb, R, Ca, Cb, na, nb](const std::vector<double>& g, Gradients& gr) {
                     int W = Ca + Cb;
                     if (pa >= 0) {
                       auto& ga = gr.touch(pa, na);
                       for (int r = 0; r < R; ++r)
                         for (int c = 0; c < Ca; ++c)
                           ga[static_cast<size_t>(r) * Ca + c] += g[static_cast<size_t>(r) * W + c];
                     }
                     if (pb >= 0) {
                       auto& gb = gr.touch(pb, nb);
                       for (int r = 0; r < R; ++r)
                         for (int c = 0; c < Cb; ++c)
                           gb[static_cast<size_t>(r) * Cb + c] += g[static_cast<size_t>(r) * W + Ca + c];
                     }
                   });
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  int Ra, Ca, Rb, Cb;
  rows_cols(a, "concat_rows", &Ra, &Ca);
  rows_cols(b, "concat_rows", &Rb, &Cb);
  if (Ca != Cb) fail("concat_rows: column mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
  Tensor out(like_rows(a, Ra + Rb));
  std::copy(a.v.begin(), a.v.end(), out.v.begin());
  std::copy(b.v.begin(), b.v.end(), out.v.begin() + static_cast<int64_t>(a.v.size()));
  Tape* t = tape_of({&a, &b}, "concat_rows");
  if (!t) return out;
  int pa = a.node, pb = b.node;
  size_t na = a.v.size(), nb = b.v.size();
  return t->record("concat_rows", std::move(out), {pa, pb},
                   [pa, pb, na, nb](const std::vector<double>& g, Gradients& gr) {
                     if (pa >= 0) {
                       auto& ga = gr.touch(pa, na);
                       for (size_t i = 0; i < na; ++i) ga[i] += g[i];
                     }
                     if (pb >= 0) {
                       auto& gb = gr.touch(pb, nb);
                       for (size_t i = 0; i < nb; ++i) gb[i] += g[na + i];
                     }
                   });
}

Tensor gather_rows(const Tensor& a, const std::vector<int>& idx) {
  int R, C;
  rows_cols(a, "gather_rows", &R, &C);
  Tensor out(like_rows(a, static_cast<int>(idx.size())));
  for (size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0 || idx[r] >= R) fail("gather_rows: index " + std::to_string(idx[r]) + " out of range [0," + std::to_string(R) + ")");
    std::copy(a.v.begin() + static_cast<int64_t>(idx[r]) * C, a.v.begin() + static_cast<int64_t>(idx[r] + 1) * C,
              out.v.begin() + static_cast<int64_t>(r) * C);
  }
  Tape* t = tape_of({&a}, "gather_rows");
  if (!t) return out;
  int pa = a.node;
  size_t total = a.v.size();
  return t->record("gather_rows", std::move(out), {pa},
                   [pa, idx, C, total](const std::vector<double>& g, Gradients& gr) {
                     if (pa < 0) return;
                     auto& ga = gr.touch(pa, total);
                     for (size_t r = 0; r < idx.size(); ++r)
                       for (int c = 0; c < C; ++c)
                         ga[static_cast<size_t>(idx[r]) * C + c] += g[r * static_cast<size_t>(C) + c];
                   });
}

Tensor scatter_add_rows(const Tensor& a, const std::vector<int>& idx, int out_rows) {
  int R, C;
  rows_cols(a, "scatter_add_rows", &R, &C);
  if (static_cast<size_t>(R) != idx.size()) fail("scatter_add_rows: index count mismatch");
  Tensor out(like_rows(a, out_rows));
  for (size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0 || idx[r] >= out_rows) fail("scatter_add_rows: index out of range");
    for (int c = 0; c < C; ++c)
      out.v[static_cast<size_t>(idx[r]) * C + c] += a.v[r * static_cast<size_t>(C) + c];
  }
  Tape* t = tape_of({&a}, "scatter_add_rows");
  if (!t) return out;
  int pa = a.node;
  size_t total = a.v.size();
  return t->record("scatter_add_rows", std::move(out), {pa},
                   [pa, idx, C, total](const std::vector<double>& g, Gradients& gr) {
                     if (pa < 0) return;
                     auto& ga = gr.touch(pa, total);
                     for (size_t r = 0; r < idx.size(); ++r)
                       for (int c = 0; c < C; ++c)
                         ga[r * static_cast<size_t>(C) + c] += g[static_cast<size_t>(idx[r]) * C + c];
                   });
}

Tensor tile_rows(const Tensor& a, int times) {
  int C;
  if (a.ndim() == 1) {
    C = a.dim(0);
  } else if (a.ndim() == 2 && a.dim(0) == 1) {
    C = a.dim(1);
  } else {
    fail("tile_rows: need [C] or [1,C], got " + shape_str(a.shape));
  }
  Tensor out(Shape{times, C});
  for (int r = 0; r < times; ++r) std::copy(a.v.begin(), a.v.end(), out.v.begin() + static_cast<int64_t>(r) * C);
  Tape* t = tape_of({&a}, "tile_rows");
  if (!t) return out;
  int pa = a.node;
  return t->record("tile_rows", std::move(out), {pa}, [pa, times, C](const std::vector<double>& g, Gradients& gr) {
    if (pa < 0) return;
    auto& ga = gr.touch(pa, static_cast<size_t>(C));
    for (int r = 0; r < times; ++r)
      for (int c = 0; c < C; ++c) ga[static_cast<size_t>(c)] += g[static_cast<size_t>(r) * C + c];
  });
}

Tensor add_rowvec(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 1 || a.dim(1) != b.dim(0))
    fail("add_rowvec: incompatible shapes " + shape_str(a.shape) + " and " + shape_str(b.shape));
  int R = a.dim(0), C = a.dim(1);
  Tensor out(a.shape);
  for (int r = 0; r < R; ++r)
    for (int c = 0; c < C; ++c) out.v[static_cast<size_t>(r) * C + c] = a.v[static_cast<size_t>(r) * C + c] + b.v[static_cast<size_t>(c)];
  Tape* t = tape_of({&a, &b}, "add_rowvec");
  if (!t) return out;
  int pa = a.node, pb = b.node;
  size_t na = a.v.size();
  return t->record("add_rowvec", std::move(out), {pa, pb},
                   [pa, pb, R, C, na](const std::vector<double>& g, Gradients& gr) {
                     if (pa >= 0) axpy(gr.touch(pa, na), g);
                     if (pb >= 0) {
                       auto& gb = gr.touch(pb, static_cast<size_t>(C));
                       for (int r = 0; r < R; ++r)
                         for (int c = 0; c < C; ++c) gb[static_cast<size_t>(c)] += g[static_cast<size_t>(r) * C + c];
                     }
                   });
}

Tensor mul_colvec(const Tensor& a, const Tensor& b) {
  int R, C;
  rows_cols(a, "mul_colvec", &R, &C);
  if (b.ndim() != 1 || b.dim(0) != R)
    fail("mul_colvec: incompatible shapes " + shape_str(a.shape) + " and " + shape_str(b.shape));
  Tensor out(a.shape);
  for (int r = 0; r < R; ++r)
    for (int c = 0; c < C; ++c)
      out.v[static_cast<size_t>(r) * C + c] = a.v[static_cast<size_t>(r) * C + c] * b.v[static_cast<size_t>(r)];
  Tape* t = tape_of({&a, &b}, "mul_colvec");
  if (!t) return out;
  int pa = a.node, pb = b.node;
  return t->record("mul_colvec", std::move(out), {pa, pb},
                   [pa, pb, R, C, av = a.v, bv = b.v](const std::vector<double>& g, Gradients& gr) {
                     if (pa >= 0) {
                       auto& ga = gr.touch(pa, av.size());
                       for (int r = 0; r < R; ++r)
                         for (int c = 0; c < C; ++c)
                           ga[static_cast<size_t>(r) * C + c] += g[static_cast<size_t>(r) * C + c] * bv[static_cast<size_t>(r)];
                     }
                     if (pb >= 0) {
                       auto& gb = gr.touch(pb, static_cast<size_t>(R));
                       for (int r = 0; r < R; ++r) {
                         double s = 0;
                         for (int c = 0; c < C; ++c)
                           s += g[static_cast<size_t>(r) * C + c] * av[static_cast<size_t>(r) * C + c];
                         gb[static_cast<size_t>(r)] += s;
                       }
                     }
                   });
}

Tensor sum_cols(const Tensor& a) {
  if (a.ndim() != 2) fail("sum_cols: need 2-D tensor, got " + shape_str(a.shape));
  int R = a.dim(0), C = a.dim(1);
  Tensor out(Shape{R});
  for (int r = 0; r < R; ++r) {
    double s = 0;
    for (int c = 0; c < C; ++c) s += a.v[static_cast<size_t>(r) * C + c];
    out.v[static_cast<size_t>(r)] = s;
  }
  Tape* t = tape_of({&a}, "sum_cols");
  if (!t) return out;
  int pa = a.node;
  size_t na = a.v.size();
  return t->record("sum_cols", std::move(out), {pa}, [pa, R, C, na](const std::vector<double>& g, Gradients& gr) {
    if (pa < 0) return;
    auto& ga = gr.touch(pa, na);
    for (int r = 0; r < R; ++r)
      for (int c = 0; c < C; ++c) ga[static_cast<size_t>(r) * C + c] += g[static_cast<size_t>(r)];
  });
}

Tensor sum_rows(const Tensor& a) {
  if (a.ndim() != 2) fail("sum_rows: need 2-D tensor, got " + shape_str(a.shape));
  int R = a.dim(0), C = a.dim(1);
  Tensor out(Shape{C});
  for (int r = 0; r < R; ++r)
    for (int c = 0; c < C; ++c) out.v[static_cast<size_t>(c)] += a.v[static_cast<size_t>(r) * C + c];
  Tape* t = tape_of({&a}, "sum_rows");
  if (!t) return out;
  int pa = a.node;
  size_t na = a.v.size();
  return t->record("sum_rows", std::move(out), {pa}, [pa, R, C, na](const std::vector<double>& g, Gradients& gr) {
    if (pa < 0) return;
    auto& ga = gr.touch(pa, na);
    for (int r = 0; r < R; ++r)
      for (int c = 0; c < C; ++c) ga[static_cast<size_t>(r) * C + c] += g[static_cast<size_t>(c)];
  });
}

// ---------------------------------------------------------------------------
// Convolutions (im2col + GEMM)
// ---------------------------------------------------------------------------

namespace {

struct ConvDims {
  int B, Cin, H, W, Cout, kh, kw, Ho, Wo;
};

// cols layout: [B*Ho*Wo, Cin*kh*kw]
void im2col(const double* x, const ConvDims& d, int stride, int pad, double* cols) {
  int K = d.Cin * d.kh * d.kw;
  for (int b = 0; b < d.B; ++b) {
    for (int ho = 0; ho < d.Ho; ++ho) {
      for (int wo = 0; wo < d.Wo; ++wo) {
        double* row = cols + (static_cast<int64_t>(b) * d.Ho * d.Wo + static_cast<int64_t>(ho) * d.Wo + wo) * K;
        int idx = 0;
        for (int ci = 0; ci < d.Cin; ++ci) {
          const double* xc = x + (static_cast<int64_t>(b) * d.Cin + ci) * d.H * d.W;
          for (int r = 0; r < d.kh; ++r) {
            int ih = ho * stride - pad + r;
            for (int c = 0; c < d.kw; ++c, ++idx) {
              int iw = wo * stride - pad + c;
              row[idx] = (ih >= 0 && ih < d.H && iw >= 0 && iw < d.W) ? xc[static_cast<int64_t>(ih) * d.W + iw] : 0.0;
            }
          }
        }
      }
    }
  }
}

void col2im_add(const double* cols, const ConvDims& d, int stride, int pad, double* x) {
  int K = d.Cin * d.kh * d.kw;
  for (int b = 0; b < d.B; ++b) {
    for (int ho = 0; ho < d.Ho; ++ho) {
      for (int wo = 0; wo < d.Wo; ++wo) {
        const double* row = cols + (static_cast<int64_t>(b) * d.Ho * d.Wo + static_cast<int64_t>(ho) * d.Wo + wo) * K;
        int idx = 0;
        for (int ci = 0; ci < d.Cin; ++ci) {
          double* xc = x + (static_cast<int64_t>(b) * d.Cin + ci) * d.H * d.W;
          for (int r = 0; r < d.kh; ++r) {
            int ih = ho * stride - pad + r;
            for (int c = 0; c < d.kw; ++c, ++idx) {
              int iw = wo * stride - pad + c;
              if (ih >= 0 && ih < d.H && iw >= 0 && iw < d.W) xc[static_cast<int64_t>(ih) * d.W + iw] += row[idx];
            }
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad) {
  if (x.ndim() != 4 || w.ndim() != 4) fail("conv2d: need 4-D input and weight");
  ConvDims d;
  d.B = x.dim(0);
  d.Cin = x.dim(1);
  d.H = x.dim(2);
  d.W = x.dim(3);
  d.Cout = w.dim(0);
  d.kh = w.dim(2);
  d.kw = w.dim(3);
  if (w.dim(1) != d.Cin)
    fail("conv2d: channel mismatch, input " + shape_str(x.shape) + " weight " + shape_str(w.shape));
  if (bias.size() != d.Cout) fail("conv2d: bias size mismatch");
  d.Ho = (d.H + 2 * pad - d.kh) / stride + 1;
  d.Wo = (d.W + 2 * pad - d.kw) / stride + 1;

  int K = d.Cin * d.kh * d.kw;
  int64_t P = static_cast<int64_t>(d.B) * d.Ho * d.Wo;
  std::vector<double> cols(static_cast<size_t>(P) * K);
  im2col(x.v.data(), d, stride, pad, cols.data());

  // out_mat [P, Cout] = cols [P,K] . w^T [K,Cout]
  std::vector<double> wt = transpose_raw(w.v, d.Cout, K);
  std::vector<double> out_mat(static_cast<size_t>(P) * d.Cout, 0.0);
  matmul_raw(cols.data(), wt.data(), out_mat.data(), static_cast<int>(P), K, d.Cout);

  Tensor out(Shape{d.B, d.Cout, d.Ho, d.Wo});
  for (int b = 0; b < d.B; ++b)
    for (int co = 0; co < d.Cout; ++co)
      for (int i = 0; i < d.Ho * d.Wo; ++i)
        out.v[((static_cast<int64_t>(b) * d.Cout + co) * d.Ho * d.Wo) + i] =
            out_mat[(static_cast<int64_t>(b) * d.Ho * d.Wo + i) * d.Cout + co] + bias.v[static_cast<size_t>(co)];

  Tape* t = tape_of({&x, &w, &bias}, "conv2d");
  if (!t) return out;
  int px = x.node, pw = w.node, pb = bias.node;
  return t->record(
      "conv2d", std::move(out), {px, pw, pb},
      [px, pw, pb, d, stride, pad, K, P, xv = x.v, wv = w.v](const std::vector<double>& g, Gradients& gr) {
        // g viewed as [B,Cout,Ho,Wo]; g_mat [P, Cout]
        std::vector<double> g_mat(static_cast<size_t>(P) * d.Cout);
        for (int b = 0; b < d.B; ++b)
          for (int co = 0; co < d.Cout; ++co)
            for (int i = 0; i < d.Ho * d.Wo; ++i)
              g_mat[(static_cast<int64_t>(b) * d.Ho * d.Wo + i) * d.Cout + co] =
                  g[((static_cast<int64_t>(b) * d.Cout + co) * d.Ho * d.Wo) + i];

        if (pb >= 0) {
          auto& gb = gr.touch(pb, static_cast<size_t>(d.Cout));
          for (int64_t i = 0; i < P; ++i)
            for (int co = 0; co < d.Cout; ++co) gb[static_cast<size_t>(co)] += g_mat[i * d.Cout + co];
        }
        if (pw >= 0 || px >= 0) {
          std::vector<double> cols(static_cast<size_t>(P) * K);
          im2col(xv.data(), d, stride, pad, cols.data());
          if (pw >= 0) {
            // gw [Cout, K] = g_mat^T . cols
            std::vector<double> gmt = transpose_raw(g_mat, static_cast<int>(P), d.Cout);
            std::vector<double> gw(static_cast<size_t>(d.Cout) * K, 0.0);
            matmul_raw(gmt.data(), cols.data(), gw.data(), d.Cout, static_cast<int>(P), K);
            axpy(gr.touch(pw, gw.size()), gw);
          }
          if (px >= 0) {
            // gcols [P,K] = g_mat . w
            std::vector<double> gcols(static_cast<size_t>(P) * K, 0.0);
            matmul_raw(g_mat.data(), wv.data(), gcols.data(), static_cast<int>(P), d.Cout, K);
            auto& gx = gr.touch(px, xv.size());
            col2im_add(gcols.data(), d, stride, pad, gx.data());
          }
        }
      });
}

Tensor conv2d_transpose(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad) {
  if (x.ndim() != 4 || w.ndim() != 4) fail("conv2d_transpose: need 4-D input and weight");
  int B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (w.dim(0) != Cin)
    fail("conv2d_transpose: channel mismatch, input " + shape_str(x.shape) + " weight " + shape_str(w.shape));
  int Cout = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  if (bias.size() != Cout) fail("conv2d_transpose: bias size mismatch");
  int Ho = (H - 1) * stride - 2 * pad + kh;
  int Wo = (W - 1) * stride - 2 * pad + kw;
  if (Ho <= 0 || Wo <= 0) fail("conv2d_transpose: empty output");

  // Forward of convT(x) is the input-gradient of a conv with dims (Ho,Wo)->(H,W).
  ConvDims d;
  d.B = B;
  d.Cin = Cout;  // conv view: channels of the large image
  d.H = Ho;
  d.W = Wo;
  d.Cout = Cin;
  d.kh = kh;
  d.kw = kw;
  d.Ho = H;
  d.Wo = W;
  int K = Cout * kh * kw;
  int64_t P = static_cast<int64_t>(B) * H * W;

  // x_mat [P, Cin]
  std::vector<double> x_mat(static_cast<size_t>(P) * Cin);
  for (int b = 0; b < B; ++b)
    for (int ci = 0; ci < Cin; ++ci)
      for (int i = 0; i < H * W; ++i)
        x_mat[(static_cast<int64_t>(b) * H * W + i) * Cin + ci] = x.v[(static_cast<int64_t>(b) * Cin + ci) * H * W + i];

  // cols [P, K] = x_mat . w_mat  where w viewed [Cin, K]
  std::vector<double> cols(static_cast<size_t>(P) * K, 0.0);
  matmul_raw(x_mat.data(), w.v.data(), cols.data(), static_cast<int>(P), Cin, K);

  Tensor out(Shape{B, Cout, Ho, Wo});
  for (int co = 0; co < Cout; ++co)
    for (int b = 0; b < B; ++b)
      for (int i = 0; i < Ho * Wo; ++i) out.v[(static_cast<int64_t>(b) * Cout + co) * Ho * Wo + i] = bias.v[static_cast<size_t>(co)];
  col2im_add(cols.data(), d, stride, pad, out.v.data());

  Tape* t = tape_of({&x, &w, &bias}, "conv2d_transpose");
  if (!t) return out;
  int px = x.node, pw = w.node, pb = bias.node;
  return t->record(
      "conv2d_transpose", std::move(out), {px, pw, pb},
      [px, pw, pb, d, stride, pad, K, P, B, Cin, Cout, H, W, Ho, Wo, x_mat = std::move(x_mat),
       wv = w.v](const std::vector<double>& g, Gradients& gr) {
        if (pb >= 0) {
          auto& gb = gr.touch(pb, static_cast<size_t>(Cout));
          for (int b = 0; b < B; ++b)
            for (int co = 0; co < Cout; ++co)
              for (int i = 0; i < Ho * Wo; ++i) gb[static_cast<size_t>(co)] += g[(static_cast<int64_t>(b) * Cout + co) * Ho * Wo + i];
        }
        if (px >= 0 || pw >= 0) {
          // gcols [P,K] = im2col(g) over the large image
          std::vector<double> gcols(static_cast<size_t>(P) * K);
          im2col(g.data(), d, stride, pad, gcols.data());
          if (px >= 0) {
            // gx_mat [P,Cin] = gcols . w_mat^T
            std::vector<double> wt = transpose_raw(wv, Cin, K);
            std::vector<double> gx_mat(static_cast<size_t>(P) * Cin, 0.0);
            matmul_raw(gcols.data(), wt.data(), gx_mat.data(), static_cast<int>(P), K, Cin);
            auto& gx = gr.touch(px, static_cast<size_t>(B) * Cin * H * W);
            for (int b = 0; b < B; ++b)
              for (int ci = 0; ci < Cin; ++ci)
                for (int i = 0; i < H * W; ++i)
                  gx[(static_cast<int64_t>(b) * Cin + ci) * H * W + i] +=
                      gx_mat[(static_cast<int64_t>(b) * H * W + i) * Cin + ci];
          }
          if (pw >= 0) {
            // gw [Cin,K] = x_mat^T . gcols
            std::vector<double> xt = transpose_raw(x_mat, static_cast<int>(P), Cin);
            std::vector<double> gw(static_cast<size_t>(Cin) * K, 0.0);
            matmul_raw(xt.data(), gcols.data(), gw.data(), Cin, static_cast<int>(P), K);
            axpy(gr.touch(pw, gw.size()), gw);
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

void Adam::update(Tensor& param, const std::vector<double>& grad, const std::string& name) {
  if (param.v.size() != grad.size())
    fail("adam: gradient size mismatch for parameter '" + name + "'");
  for (double g : grad)
    if (!std::isfinite(g)) fail("adam: non-finite gradient for parameter '" + name + "'");

  Slot& s = slots_[name];
  if (s.m.empty()) {
    s.m.assign(param.v.size(), 0.0);
    s.v.assign(param.v.size(), 0.0);
  } else if (s.m.size() != param.v.size()) {
    fail("adam: state shape mismatch for parameter '" + name + "'");
  }

  double t = static_cast<double>(t_ + 1);
  double bc1 = 1.0 - std::pow(cfg_.beta1, t);
  double bc2 = 1.0 - std::pow(cfg_.beta2, t);
  for (size_t i = 0; i < param.v.size(); ++i) {
    double g = grad[i] + cfg_.weight_decay * param.v[i];
    s.m[i] = cfg_.beta1 * s.m[i] + (1.0 - cfg_.beta1) * g;
    s.v[i] = cfg_.beta2 * s.v[i] + (1.0 - cfg_.beta2) * g * g;
    double mhat = s.m[i] / bc1;
    double vhat = s.v[i] / bc2;
    param.v[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
  }
}

}  // namespace dough::ad
