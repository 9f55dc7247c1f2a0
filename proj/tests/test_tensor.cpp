#include <cmath>

#include "doctest.h"
#include "doughlab/tensor.hpp"
#include "oracles.hpp"

using namespace dough;
using namespace dough::ad;

namespace {

// Runs f on a leaf built from x, returns (value, grad) for FD comparison.
struct TapeFn {
  std::function<Tensor(Tape&, const Tensor&)> f;

  double value(const std::vector<double>& x) const {
    Tape tape;
    Tensor in = tape.leaf(Tensor::from(x));
    return f(tape, in).item();
  }
  std::vector<double> grad(const std::vector<double>& x) const {
    Tape tape;
    Tensor in = tape.leaf(Tensor::from(x));
    Tensor out = f(tape, in);
    Gradients g = tape.backward(out);
    return g.grad_of(in).v;
  }
  double max_rel_err(const std::vector<double>& x, double h = 1e-5) const {
    auto vf = [this](const std::vector<double>& q) { return value(q); };
    return oracles::max_grad_rel_err(vf, x, grad(x), h);
  }
};

std::vector<double> random_vec(Rng& rng, size_t n, double lo = -2.0, double hi = 2.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

}  // namespace

TEST_CASE("elementwise forward values") {
  Tensor x = Tensor::from({1, 2});
  Tensor y = Tensor::from({3, 4});
  Tensor s = add(x, y);
  CHECK(s.v[0] == 4.0);
  CHECK(s.v[1] == 6.0);

  Tensor e = vexp(Tensor::from({0.0}));
  CHECK(e.v[0] == doctest::Approx(1.0).epsilon(1e-15));

  Tensor id(Shape{3, 3}, 0.0);
  id.v[0] = id.v[4] = id.v[8] = 1.0;
  Tensor v3(Shape{3, 1}, {0.5, -1.0, 2.0});
  Tensor mv = matmul(id, v3);
  CHECK(mv.v[0] == 0.5);
  CHECK(mv.v[1] == -1.0);
  CHECK(mv.v[2] == 2.0);
}

TEST_CASE("shape mismatch errors name the op and shapes") {
  Tensor a = Tensor::from({1, 2});
  Tensor b = Tensor::from({1, 2, 3});
  try {
    add(a, b);
    FAIL("expected failure");
  } catch (const Error& e) {
    std::string msg = e.what();
    CHECK(msg.find("add") != std::string::npos);
    CHECK(msg.find("[2]") != std::string::npos);
    CHECK(msg.find("[3]") != std::string::npos);
  }
}

TEST_CASE("backward: sum of squares") {
  Tape tape;
  Tensor x = tape.leaf(Tensor::from({1, 2, 3}));
  Tensor loss = sum(mul(x, x));
  Gradients g = tape.backward(loss);
  auto gx = g.grad_of(x);
  CHECK(gx.v[0] == doctest::Approx(2.0));
  CHECK(gx.v[1] == doctest::Approx(4.0));
  CHECK(gx.v[2] == doctest::Approx(6.0));
}

TEST_CASE("backward: product rule") {
  Tape tape;
  Tensor x = tape.leaf(Tensor::scalar(2.0));
  Tensor y = tape.leaf(Tensor::scalar(3.0));
  Tensor loss = mul(x, y);
  Gradients g = tape.backward(loss);
  CHECK(g.grad_of(x).v[0] == doctest::Approx(3.0));
  CHECK(g.grad_of(y).v[0] == doctest::Approx(2.0));
}

TEST_CASE("backward: tanh at 0.5 matches frozen finite-difference value") {
  // central difference with h=1e-5 gives 0.786448 (= 1 - tanh(0.5)^2)
  Tape tape;
  Tensor x = tape.leaf(Tensor::scalar(0.5));
  Tensor out = vtanh(x);
  Gradients g = tape.backward(out);
  CHECK(g.grad_of(x).v[0] == doctest::Approx(0.786448).epsilon(1e-5));
}

TEST_CASE("backward rejects non-scalar root") {
  Tape tape;
  Tensor x = tape.leaf(Tensor::from({1, 2}));
  Tensor y = add(x, x);
  CHECK_THROWS_AS((void)tape.backward(y), Error);
}

TEST_CASE("leaves off the path to root get zero gradient") {
  Tape tape;
  Tensor x = tape.leaf(Tensor::from({1, 2}));
  Tensor unused = tape.leaf(Tensor::from({5, 6}));
  Tensor loss = sum(mul(x, x));
  Gradients g = tape.backward(loss);
  CHECK(g.grad_of(unused).v[0] == 0.0);
  CHECK(g.grad_of(unused).v[1] == 0.0);
  CHECK_FALSE(g.has(unused.node));
}

TEST_CASE("backward is deterministic bit-for-bit") {
  auto run = [] {
    Tape tape;
    Rng rng(77);
    Tensor x = tape.leaf(Tensor::from(random_vec(rng, 24)));
    Tensor h = vtanh(matmul(reshape(x, {4, 6}), reshape(x, {6, 4})));
    Tensor loss = sum(mul(h, h));
    Gradients g = tape.backward(loss);
    return g.grad_of(x).v;
  };
  auto a = run();
  auto b = run();
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("every differentiable primitive matches central finite differences") {
  Rng rng(123);
  struct Case {
    const char* name;
    TapeFn fn;
    size_t n;
    double lo, hi;
  };
  std::vector<Case> cases = {
      {"add", {[](Tape&, const Tensor& x) {
         Tensor a = slice_rows(x, 0, 3), b = slice_rows(x, 3, 6);
         return sum(mul(add(a, b), add(a, b)));
       }}, 6, -2, 2},
      {"sub_mul", {[](Tape&, const Tensor& x) {
         Tensor a = slice_rows(x, 0, 3), b = slice_rows(x, 3, 6);
         return sum(mul(sub(a, b), mul(a, b)));
       }}, 6, -2, 2},
      {"div", {[](Tape&, const Tensor& x) {
         Tensor a = slice_rows(x, 0, 3), b = slice_rows(x, 3, 6);
         return sum(vdiv(a, add_const(mul(b, b), 1.0)));
       }}, 6, -2, 2},
      {"exp", {[](Tape&, const Tensor& x) { return sum(vexp(x)); }}, 5, -2, 2},
      {"log", {[](Tape&, const Tensor& x) { return sum(vlog(add_const(mul(x, x), 0.5))); }}, 5, -2, 2},
      {"tanh", {[](Tape&, const Tensor& x) { return sum(vtanh(x)); }}, 5, -2, 2},
      {"sin_cos", {[](Tape&, const Tensor& x) { return sum(mul(vsin(x), vcos(x))); }}, 5, -2, 2},
      {"sqrt", {[](Tape&, const Tensor& x) { return sum(vsqrt(add_const(mul(x, x), 0.3))); }}, 5, -2, 2},
      {"relu", {[](Tape&, const Tensor& x) { return sum(mul(relu(x), relu(x))); }}, 8, -2, 2},
      {"sigmoid", {[](Tape&, const Tensor& x) { return sum(sigmoid(x)); }}, 5, -2, 2},
      {"softplus", {[](Tape&, const Tensor& x) { return sum(softplus(x, 3.0)); }}, 5, -2, 2},
      {"pow", {[](Tape&, const Tensor& x) { return sum(vpow(add_const(mul(x, x), 0.2), 1.7)); }}, 5, -2, 2},
      {"minmax", {[](Tape&, const Tensor& x) {
         Tensor a = slice_rows(x, 0, 4), b = slice_rows(x, 4, 8);
         return sum(add(mul(vmin(a, b), vmin(a, b)), vmax(a, b)));
       }}, 8, -2, 2},
      {"clamp", {[](Tape&, const Tensor& x) { return sum(mul(clamp(x, -1.0, 1.0), clamp(x, -1.0, 1.0))); }}, 8, -2, 2},
      {"smooth_clamp", {[](Tape&, const Tensor& x) { return sum(mul(smooth_clamp(x, -1, 1, 20.0), smooth_clamp(x, -1, 1, 20.0))); }}, 8, -2, 2},
      {"mean", {[](Tape&, const Tensor& x) { return mean(mul(x, x)); }}, 6, -2, 2},
      {"matmul", {[](Tape&, const Tensor& x) {
         Tensor a = reshape(slice_rows(x, 0, 6), {2, 3});
         Tensor b = reshape(slice_rows(x, 6, 12), {3, 2});
         Tensor c = matmul(a, b);
         return sum(mul(c, c));
       }}, 12, -2, 2},
      {"matmul_trans", {[](Tape&, const Tensor& x) {
         Tensor a = reshape(slice_rows(x, 0, 6), {3, 2});
         Tensor b = reshape(slice_rows(x, 6, 12), {2, 3});
         Tensor c = matmul(a, b, true, true);  // [2,3]x[3,2]
         return sum(mul(c, c));
       }}, 12, -2, 2},
      {"gather_scatter", {[](Tape&, const Tensor& x) {
         Tensor m = reshape(x, {5, 2});
         Tensor gth = gather_rows(m, {0, 2, 2, 4});
         Tensor sc = scatter_add_rows(gth, {1, 0, 1, 2}, 3);
         return sum(mul(sc, sc));
       }}, 10, -2, 2},
      {"slice_concat", {[](Tape&, const Tensor& x) {
         Tensor m = reshape(x, {3, 4});
         Tensor l = slice_cols(m, 0, 2), r = slice_cols(m, 2, 4);
         Tensor c = concat_cols(r, l);
         Tensor rr = concat_rows(slice_rows(c, 0, 1), slice_rows(c, 1, 3));
         return sum(mul(rr, c));
       }}, 12, -2, 2},
      {"rowvec_colvec", {[](Tape&, const Tensor& x) {
         Tensor m = reshape(slice_rows(x, 0, 6), {2, 3});
         Tensor b = slice_rows(x, 6, 9);
         Tensor cv = slice_rows(x, 9, 11);
         Tensor y = mul_colvec(add_rowvec(m, b), cv);
         return add(sum(mul(y, y)), sum(sum_cols(y)));
       }}, 11, -2, 2},
      {"scalar_broadcast", {[](Tape&, const Tensor& x) {
         Tensor s = slice_rows(x, 0, 1);
         Tensor body = slice_rows(x, 1, 7);
         Tensor y = add_scalar_t(mul_scalar_t(body, s), s);
         return sum(mul(y, y));
       }}, 7, -2, 2},
      {"sum_rows_tile", {[](Tape&, const Tensor& x) {
         Tensor m = reshape(slice_rows(x, 0, 6), {2, 3});
         Tensor t = tile_rows(slice_rows(x, 6, 9), 2);
         Tensor y = mul(m, t);
         Tensor sr = sum_rows(y);
         return sum(mul(sr, sr));
       }}, 9, -2, 2},
  };

  int total_points = 0;
  for (auto& c : cases) {
    for (int rep = 0; rep < 5; ++rep) {
      auto x = random_vec(rng, c.n, c.lo, c.hi);
      double err = c.fn.max_rel_err(x);
      INFO(c.name << " rep " << rep);
      CHECK(err < 1e-4);
      ++total_points;
    }
  }
  CHECK(total_points >= 100);  // 100+ random evaluation points across primitives
}

TEST_CASE("conv2d and conv2d_transpose match finite differences") {
  Rng rng(9);
  // pack x(1,2,5,5)=50, w(3,2,3,3)=54, bias(3)=3  -> 107 values
  TapeFn fn{[](Tape&, const Tensor& p) {
    Tensor x = reshape(slice_rows(p, 0, 50), {1, 2, 5, 5});
    Tensor w = reshape(slice_rows(p, 50, 104), {3, 2, 3, 3});
    Tensor b = slice_rows(p, 104, 107);
    Tensor y = conv2d(x, w, b, 2, 1);
    return sum(mul(y, y));
  }};
  auto x = random_vec(rng, 107, -1, 1);
  CHECK(fn.max_rel_err(x) < 1e-4);

  TapeFn fnT{[](Tape&, const Tensor& p) {
    Tensor x = reshape(slice_rows(p, 0, 18), {1, 2, 3, 3});
    Tensor w = reshape(slice_rows(p, 18, 18 + 2 * 3 * 4 * 4), {2, 3, 4, 4});
    Tensor b = slice_rows(p, 114, 117);
    Tensor y = conv2d_transpose(x, w, b, 2, 1);
    return sum(mul(y, y));
  }};
  auto xt = random_vec(rng, 117, -1, 1);
  CHECK(fnT.max_rel_err(xt) < 1e-4);
}

TEST_CASE("conv2d_transpose inverts conv2d geometry") {
  // stride-2 pad-1 k4: 8 -> 4 -> 8
  Tensor x(Shape{1, 1, 8, 8}, 0.5);
  Tensor w(Shape{2, 1, 4, 4}, 0.1);
  Tensor b(Shape{2}, 0.0);
  Tensor y = conv2d(x, w, b, 2, 1);
  CHECK(y.shape == Shape{1, 2, 4, 4});
  Tensor wt(Shape{2, 3, 4, 4}, 0.1);
  Tensor bt(Shape{3}, 0.0);
  Tensor z = conv2d_transpose(y, wt, bt, 2, 1);
  CHECK(z.shape == Shape{1, 3, 8, 8});
}

TEST_CASE("adam: first step moves by about lr") {
  Adam adam({.lr = 0.1});
  Tensor p = Tensor::scalar(0.0);
  adam.update(p, {1.0}, "p");
  adam.advance();
  CHECK(p.v[0] == doctest::Approx(-0.1).epsilon(1e-6));
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  Adam adam({.lr = 0.5});
  Tensor p = Tensor::from({1.0, -2.0, 3.0});
  auto before = p.v;
  for (int i = 0; i < 3; ++i) {
    adam.update(p, {0.0, 0.0, 0.0}, "p");
    adam.advance();
  }
  CHECK(p.v == before);
}

TEST_CASE("adam agrees with an independent reference implementation") {
  Adam adam({.lr = 0.05});
  oracles::RefAdam ref(4, 0.05);
  Tensor p = Tensor::from({0.3, -0.7, 1.1, 0.0});
  std::vector<double> rp = p.v;
  std::vector<double> g = {0.2, -0.1, 0.9, 0.4};
  for (int step = 0; step < 2; ++step) {
    adam.update(p, g, "p");
    adam.advance();
    ref.step(rp, g);
  }
  for (size_t i = 0; i < rp.size(); ++i) CHECK(std::fabs(p.v[i] - rp[i]) < 1e-12);
}

TEST_CASE("adam reports the offending parameter on non-finite gradients") {
  Adam adam;
  Tensor p = Tensor::scalar(0.0);
  try {
    adam.update(p, {std::nan("")}, "policy.w1");
    FAIL("expected failure");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("policy.w1") != std::string::npos);
  }
}
