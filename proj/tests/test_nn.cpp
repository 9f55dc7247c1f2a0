#include <cmath>
#include <cstdio>

#include "doctest.h"
#include "doughlab/nn.hpp"
#include "oracles.hpp"

using namespace dough;
using namespace dough::nn;

TEST_CASE("linear layer trains a least-squares fit") {
  Rng rng(3);
  ParamSet ps;
  Linear lin;
  lin.build(ps, "fit", 3, 1, rng);
  ad::Adam adam({.lr = 0.05});

  // target y = 2x0 - x1 + 0.5x2
  auto target = [](const double* x) { return 2.0 * x[0] - x[1] + 0.5 * x[2]; };

  double last = 1e9;
  for (int step = 0; step < 400; ++step) {
    ad::Tape tape;
    ad::Tensor x(ad::Shape{16, 3});
    ad::Tensor y(ad::Shape{16, 1});
    Rng batch = rng.fork(step);
    for (int r = 0; r < 16; ++r) {
      for (int c = 0; c < 3; ++c) x.v[static_cast<size_t>(r) * 3 + c] = batch.uniform(-1, 1);
      y.v[static_cast<size_t>(r)] = target(&x.v[static_cast<size_t>(r) * 3]);
    }
    ad::Tensor pred = lin.forward(tape, x);
    ad::Tensor err = ad::sub(pred, y);
    ad::Tensor loss = ad::mean(ad::mul(err, err));
    last = loss.item();
    ad::Gradients g = tape.backward(loss);
    adam_step(adam, ps.all(), g);
  }
  CHECK(last < 1e-4);
}

TEST_CASE("network loss gradients match finite differences") {
  Rng rng(5);
  ParamSet ps;
  Linear l1, l2;
  l1.build(ps, "l1", 4, 6, rng);
  l2.build(ps, "l2", 6, 1, rng);

  ad::Tensor input(ad::Shape{3, 4});
  for (auto& v : input.v) v = rng.uniform(-1, 1);
  ad::Tensor target(ad::Shape{3, 1});
  for (auto& v : target.v) v = rng.uniform(-1, 1);

  auto loss_with = [&](Param* p, const std::vector<double>& vals) {
    auto saved = p->value.v;
    p->value.v = vals;
    ad::Tape tape;
    ad::Tensor h = ad::vtanh(l1.forward(tape, input));
    ad::Tensor out = l2.forward(tape, h);
    ad::Tensor err = ad::sub(out, target);
    double v = ad::sum(ad::mul(err, err)).item();
    p->value.v = saved;
    return v;
  };

  ad::Tape tape;
  ad::Tensor h = ad::vtanh(l1.forward(tape, input));
  ad::Tensor out = l2.forward(tape, h);
  ad::Tensor err = ad::sub(out, target);
  ad::Tensor loss = ad::sum(ad::mul(err, err));
  ad::Gradients g = tape.backward(loss);

  for (Param* p : ps.all()) {
    auto fn = [&](const std::vector<double>& vals) { return loss_with(p, vals); };
    std::vector<double> analytic = g.raw(p->node);
    REQUIRE(analytic.size() == p->value.v.size());
    CHECK(oracles::max_grad_rel_err(fn, p->value.v, analytic) < 1e-4);
  }
}

TEST_CASE("tensor archive round-trips names, shapes, meta and f32 payload") {
  Rng rng(11);
  TensorArchive ar;
  ar.meta.set("train.kind", "test");
  ar.meta.set_int("train.steps", 42);

  ad::Tensor a(ad::Shape{3, 2});
  for (auto& v : a.v) v = rng.uniform(-1, 1);
  ad::Tensor b(ad::Shape{4});
  for (auto& v : b.v) v = rng.uniform(-1, 1);
  ar.put("mod.a", a);
  ar.put("mod.b", b);

  std::string path = "archive_test.dskc";
  ar.save(path);
  TensorArchive back = TensorArchive::load(path);
  std::remove(path.c_str());

  CHECK(back.meta.get_str("train.kind", "") == "test");
  CHECK(back.meta.get_int("train.steps", 0) == 42);
  const NamedTensor* ta = back.get("mod.a");
  REQUIRE(ta != nullptr);
  CHECK(ta->shape == ad::Shape{3, 2});
  for (size_t i = 0; i < a.v.size(); ++i)
    CHECK(ta->values[i] == doctest::Approx(a.v[i]).epsilon(1e-6));  // f32 storage
  CHECK(back.get("missing") == nullptr);
}

TEST_CASE("archive save is byte-stable") {
  Rng rng(13);
  auto make = [&](uint64_t seed) {
    Rng r(seed);
    TensorArchive ar;
    ad::Tensor a(ad::Shape{8});
    for (auto& v : a.v) v = r.uniform(-1, 1);
    ar.put("x", a);
    return ar;
  };
  make(5).save("arch_a.dskc");
  make(5).save("arch_b.dskc");
  CHECK(hash_file("arch_a.dskc") == hash_file("arch_b.dskc"));
  std::remove("arch_a.dskc");
  std::remove("arch_b.dskc");
}
