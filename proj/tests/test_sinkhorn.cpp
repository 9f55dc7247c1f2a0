#include <cmath>

#include "doctest.h"
#include "doughlab/sinkhorn.hpp"
#include "oracles.hpp"

using namespace dough;
using namespace dough::ot;

namespace {

PointCloud random_cloud(Rng& rng, int m, double lo = 0.0, double hi = 1.0) {
  std::vector<double> pts(static_cast<size_t>(m) * 2);
  for (auto& x : pts) x = rng.uniform(lo, hi);
  return PointCloud::uniform(std::move(pts));
}

SinkhornConfig tight() {
  SinkhornConfig cfg;
  cfg.epsilon = 1e-3;
  cfg.max_iters = 5000;
  cfg.tol = 1e-12;
  return cfg;
}

}  // namespace

TEST_CASE("singleton self-transport costs zero") {
  PointCloud a;
  a.pts = {0.3, 0.7};
  a.w = {1.0};
  SinkhornConfig cfg;
  OtResult r = sinkhorn_divergence(a, a, cfg);
  CHECK(std::fabs(r.value) < 1e-12);
}

TEST_CASE("unit-weight singleton pair transports at squared distance") {
  PointCloud a, b;
  a.pts = {0.0, 0.0};
  a.w = {1.0};
  b.pts = {1.0, 0.0};
  b.w = {1.0};
  for (double eps : {1e-4, 1e-3, 1e-2, 0.1}) {
    SinkhornConfig cfg;
    cfg.epsilon = eps;
    OtResult r = entropic_ot(a, b, cfg);
    CHECK(r.value == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("matches brute-force exact transport on tiny clouds at small epsilon") {
  Rng rng(42);
  for (int rep = 0; rep < 6; ++rep) {
    int m = 3 + static_cast<int>(rng.uniform_int(2));  // 3 or 4 points
    PointCloud a = random_cloud(rng, m);
    PointCloud b = random_cloud(rng, m);
    SinkhornConfig cfg;
    cfg.epsilon = 1e-4;
    cfg.max_iters = 200000;
    cfg.tol = 1e-12;
    double exact = oracles::brute_force_emd2(a.pts, b.pts);
    OtResult ent = entropic_ot(a, b, cfg);
    CHECK(std::fabs(ent.value - exact) < 1e-3);
    OtResult div = sinkhorn_divergence(a, b, cfg);
    CHECK(std::fabs(div.value - exact) < 1e-3);
  }
}

TEST_CASE("divergence self-term vanishes") {
  Rng rng(7);
  PointCloud a = random_cloud(rng, 20);
  OtResult r = sinkhorn_divergence(a, a, tight());
  CHECK(std::fabs(r.value) < 1e-6);
}

TEST_CASE("divergence is symmetric") {
  Rng rng(8);
  PointCloud a = random_cloud(rng, 12);
  PointCloud b = random_cloud(rng, 15);
  OtResult ab = sinkhorn_divergence(a, b, tight());
  OtResult ba = sinkhorn_divergence(b, a, tight());
  CHECK(std::fabs(ab.value - ba.value) < 1e-9);
}

TEST_CASE("divergence is translation invariant") {
  Rng rng(9);
  PointCloud a = random_cloud(rng, 10);
  PointCloud b = random_cloud(rng, 10);
  OtResult base = sinkhorn_divergence(a, b, tight());
  PointCloud a2 = a, b2 = b;
  for (size_t i = 0; i < a2.pts.size(); i += 2) {
    a2.pts[i] += 0.25;
    a2.pts[i + 1] -= 0.125;
  }
  for (size_t i = 0; i < b2.pts.size(); i += 2) {
    b2.pts[i] += 0.25;
    b2.pts[i + 1] -= 0.125;
  }
  OtResult moved = sinkhorn_divergence(a2, b2, tight());
  CHECK(std::fabs(base.value - moved.value) < 1e-9);
}

TEST_CASE("divergence is nonnegative on random pairs") {
  Rng rng(11);
  SinkhornConfig cfg;
  cfg.max_iters = 2000;
  cfg.tol = 1e-9;
  for (int rep = 0; rep < 100; ++rep) {
    PointCloud a = random_cloud(rng, 5 + static_cast<int>(rng.uniform_int(10)));
    PointCloud b = random_cloud(rng, 5 + static_cast<int>(rng.uniform_int(10)));
    OtResult r = sinkhorn_divergence(a, b, cfg);
    CHECK(r.value > -1e-8);
  }
}

TEST_CASE("divergence grows as clouds move apart") {
  Rng rng(13);
  SinkhornConfig cfg;
  cfg.max_iters = 2000;
  cfg.tol = 1e-9;
  for (int rep = 0; rep < 20; ++rep) {
    PointCloud a = random_cloud(rng, 12, 0.0, 0.4);
    PointCloud b0 = random_cloud(rng, 12, 0.0, 0.4);
    double prev = -1.0;
    for (int k = 1; k <= 5; ++k) {
      PointCloud b = b0;
      for (size_t i = 0; i < b.pts.size(); i += 2) b.pts[i] += 0.1 * k;
      OtResult r = sinkhorn_divergence(a, b, cfg);
      CHECK(r.value > prev);
      prev = r.value;
    }
  }
}

TEST_CASE("non-convergence sets the warning flag instead of failing") {
  Rng rng(17);
  PointCloud a = random_cloud(rng, 10);
  PointCloud b = random_cloud(rng, 10);
  SinkhornConfig cfg;
  cfg.epsilon = 1e-5;
  cfg.max_iters = 2;
  cfg.tol = 1e-14;
  OtResult r = entropic_ot(a, b, cfg);
  CHECK_FALSE(r.converged);
  CHECK(std::isfinite(r.value));
}

TEST_CASE("envelope gradient matches finite differences") {
  // Compact clouds: the dough regime, where the fixed point converges tightly
  // and the envelope gradient is near-exact.
  Rng rng(19);
  int ma = 6, mb = 7;
  PointCloud b = random_cloud(rng, mb, 0.2, 0.5);
  std::vector<double> wa(static_cast<size_t>(ma), 1.0 / ma);

  SinkhornConfig cfg = tight();
  auto value_fn = [&](const std::vector<double>& apts) {
    PointCloud a;
    a.pts = apts;
    a.w = wa;
    return sinkhorn_divergence(a, b, cfg).value;
  };

  std::vector<double> apts(static_cast<size_t>(ma) * 2);
  for (auto& x : apts) x = rng.uniform(0.2, 0.5);

  ad::Tape tape;
  ad::Tensor xa = tape.leaf(ad::Tensor(ad::Shape{ma, 2}, apts));
  ad::Tensor xb(ad::Shape{mb, 2}, b.pts);
  ad::Tensor div = sinkhorn_divergence_op(xa, wa, xb, b.w, cfg);
  ad::Gradients g = tape.backward(div);
  auto analytic = g.grad_of(xa).v;

  CHECK(oracles::max_grad_rel_err(value_fn, apts, analytic, 1e-6) < 1e-3);
}

TEST_CASE("envelope gradient w.r.t. the second cloud matches finite differences") {
  Rng rng(23);
  int ma = 5, mb = 5;
  PointCloud a = random_cloud(rng, ma, 0.3, 0.6);
  std::vector<double> wb(static_cast<size_t>(mb), 1.0 / mb);

  SinkhornConfig cfg = tight();
  auto value_fn = [&](const std::vector<double>& bpts) {
    PointCloud b;
    b.pts = bpts;
    b.w = wb;
    return sinkhorn_divergence(a, b, cfg).value;
  };

  std::vector<double> bpts(static_cast<size_t>(mb) * 2);
  for (auto& x : bpts) x = rng.uniform(0.3, 0.6);

  ad::Tape tape;
  ad::Tensor xa(ad::Shape{ma, 2}, a.pts);
  ad::Tensor xb = tape.leaf(ad::Tensor(ad::Shape{mb, 2}, bpts));
  ad::Tensor div = sinkhorn_divergence_op(xa, a.w, xb, wb, cfg);
  ad::Gradients g = tape.backward(div);
  auto analytic = g.grad_of(xb).v;

  CHECK(oracles::max_grad_rel_err(value_fn, bpts, analytic, 1e-6) < 1e-3);
}

TEST_CASE("warm-started repeated evaluation is consistent with cold start") {
  Rng rng(29);
  PointCloud a = random_cloud(rng, 15, 0.2, 0.6);
  PointCloud b = random_cloud(rng, 15, 0.3, 0.7);
  SinkhornConfig cfg;
  cfg.max_iters = 3000;
  cfg.tol = 1e-10;

  DivergenceCache cache;
  ad::Tensor xa(ad::Shape{15, 2}, a.pts);
  ad::Tensor xb(ad::Shape{15, 2}, b.pts);
  OtResult s1, s2;
  sinkhorn_divergence_op(xa, a.w, xb, b.w, cfg, &cache, &s1);
  cache.b_static = true;
  for (auto& x : xa.v) x += 1e-4;
  sinkhorn_divergence_op(xa, a.w, xb, b.w, cfg, &cache, &s2);
  PointCloud a2;
  a2.pts = xa.v;
  a2.w = a.w;
  OtResult cold = sinkhorn_divergence(a2, b, cfg);
  // tol-limited agreement: warm and cold stop at different residuals
  CHECK(s2.value == doctest::Approx(cold.value).epsilon(2e-5));
  CHECK(s2.iters <= cold.iters);
}
