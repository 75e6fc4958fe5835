#include <cmath>
#include <numeric>

#include "doctest.h"
#include "grad_cases.hpp"
#include "test_support.hpp"
#include "xmlc/errors.hpp"
#include "xmlc/grad_check.hpp"
#include "xmlc/ops.hpp"

using namespace xmlc;
using xmlc::testing::naive_conv1d;
using xmlc::testing::naive_matmul;
using xmlc::testing::random_tensor;

namespace {

Tensor eval(const std::function<Var(Tape&)>& f) {
  Tape tape(false);
  return f(tape).value();
}

GradCheckOptions linear_tol() {
  GradCheckOptions o;
  o.tolerance = 1e-6;
  return o;
}

}  // namespace

TEST_CASE("matmul values and shape errors") {
  Tensor out = eval([](Tape& t) {
    return ops::matmul(t.constant(Tensor::matrix({{1, 0}, {0, 1}})),
                       t.constant(Tensor::matrix({{3, 4}, {5, 6}})));
  });
  CHECK(out == Tensor::matrix({{3, 4}, {5, 6}}));

  out = eval([](Tape& t) {
    return ops::matmul(t.constant(Tensor::matrix({{1, 2}})), t.constant(Tensor::matrix({{3}, {4}})));
  });
  CHECK(out.item() == 11.0);

  Tape tape;
  Var a = tape.constant(Tensor({2, 3}));
  Var b = tape.constant(Tensor({2, 3}));
  try {
    ops::matmul(a, b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
  }
}

TEST_CASE("matmul gradient of sum equals ones · bᵀ") {
  Rng rng(7);
  Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4, 2}, rng);
  Tape tape;
  Var va = tape.input(a), vb = tape.input(b);
  tape.backward(ops::sum(ops::matmul(va, vb)));
  Tensor expect = naive_matmul(Tensor({3, 2}, 1.0), Tensor({2, 4}, [&] {
                                 std::vector<double> bt;
                                 for (std::size_t j = 0; j < 2; ++j)
                                   for (std::size_t i = 0; i < 4; ++i) bt.push_back(b.at(i, j));
                                 return bt;
                               }()));
  CHECK(max_abs_diff(*tape.grad(va), expect) < 1e-12);

  auto rep = grad_check(
      [](Tape&, const std::vector<Var>& v) { return ops::sum(ops::matmul(v[0], v[1])); },
      {a, b}, linear_tol());
  CHECK(rep.passed);
}

TEST_CASE("conv1d_dilated spec cases") {
  SUBCASE("delta kernel is identity") {
    Rng rng(1);
    Tensor x = random_tensor({6, 3}, rng);
    Tensor f({1, 3, 3});
    for (std::size_t c = 0; c < 3; ++c) f[c * 3 + c] = 1.0;
    Tensor out = eval([&](Tape& t) { return ops::conv1d_dilated(t.constant(x), t.constant(f), 1, 0); });
    CHECK(out == x);
  }
  SUBCASE("padding formula") {
    CHECK(ops::same_padding(9, 4) == 16);
    CHECK(ops::same_padding(9, 1) == 4);
    CHECK_THROWS_AS(ops::same_padding(8, 1), ConfigError);
    CHECK_THROWS_AS(ops::same_padding(3, 0), ArgumentError);
  }
  SUBCASE("hand case against sliding-window oracle") {
    Tensor x({4, 1}, {1, 2, 3, 4});
    Tensor f({3, 1, 1}, {1, 1, 1});
    Tensor oracle = naive_conv1d(x, f, 2, 2);
    // Taps at s-2, s, s+2 over zero padding.
    CHECK(oracle == Tensor({4, 1}, {4, 6, 4, 6}));
    Tensor out = eval([&](Tape& t) { return ops::conv1d_dilated(t.constant(x), t.constant(f), 2, 2); });
    CHECK(out == oracle);
  }
  SUBCASE("argument errors") {
    Tape t;
    Var x = t.constant(Tensor({4, 1}));
    Var f = t.constant(Tensor({3, 1, 1}));
    CHECK_THROWS_AS(ops::conv1d_dilated(x, f, 0, 0), ArgumentError);
    Var f2 = t.constant(Tensor({3, 2, 1}));
    CHECK_THROWS_AS(ops::conv1d_dilated(x, f2, 1, 1), DimensionError);
  }
}

TEST_CASE("conv1d_dilated matches the naive oracle on random inputs") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const int K = 1 + 2 * static_cast<int>(rng.below(5));
    const int r = 1 + static_cast<int>(rng.below(4));
    const std::size_t n = 1 + rng.below(30), din = 1 + rng.below(4), dout = 1 + rng.below(4);
    const int pad = ops::same_padding(K, r);
    Tensor x = random_tensor({n, din}, rng), f = random_tensor({std::size_t(K), din, dout}, rng);
    Tensor out = eval([&](Tape& t) { return ops::conv1d_dilated(t.constant(x), t.constant(f), r, pad); });
    REQUIRE(out.dim(0) == n);
    CHECK(max_abs_diff(out, naive_conv1d(x, f, r, pad)) < 1e-12);
  }
}

TEST_CASE("conv1d_causal reads only past positions") {
  Rng rng(5);
  Tensor x = random_tensor({10, 2}, rng), f = random_tensor({3, 2, 2}, rng);
  const int r = 2;
  Tensor out = eval([&](Tape& t) { return ops::conv1d_causal(t.constant(x), t.constant(f), r); });
  REQUIRE(out.dim(0) == 10);
  for (long s = 0; s < 10; ++s)
    for (long o = 0; o < 2; ++o) {
      double acc = 0.0;
      for (long j = 0; j < 3; ++j) {
        const long src = s - r * j;
        if (src < 0) continue;
        for (long c = 0; c < 2; ++c) acc += f[(j * 2 + c) * 2 + o] * x.at(src, c);
      }
      CHECK(out.at(s, o) == doctest::Approx(acc).epsilon(1e-12));
    }
  auto rep = grad_check(
      [r](Tape&, const std::vector<Var>& v) {
        return ops::sum(ops::mul(ops::conv1d_causal(v[0], v[1], r), ops::conv1d_causal(v[0], v[1], r)));
      },
      {x, f});
  CHECK(rep.passed);
}

TEST_CASE("softmax and sigmoid") {
  Tensor s = eval([](Tape& t) { return ops::softmax(t.constant(Tensor::vector({0, 0, 0})), 0); });
  for (double v : s.data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  Tensor big = eval([](Tape& t) { return ops::softmax(t.constant(Tensor::vector({1000, 1000})), 0); });
  CHECK(big[0] == 0.5);
  CHECK(big[1] == 0.5);
  Tensor sg = eval([](Tape& t) { return ops::sigmoid(t.constant(Tensor::scalar(0.0))); });
  CHECK(sg.item() == 0.5);

  Tape t;
  CHECK_THROWS_AS(ops::softmax(t.constant(Tensor({0})), 0), ArgumentError);
  CHECK_THROWS_AS(ops::softmax(t.constant(Tensor({2, 3})), 2), ArgumentError);
}

TEST_CASE("softmax rows sum to one and sigmoid stays inside (0,1)") {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    Tensor x = random_tensor({1 + rng.below(6), 1 + rng.below(9)}, rng, 50.0);
    for (std::size_t axis : {0u, 1u}) {
      Tensor y = eval([&](Tape& t) { return ops::softmax(t.constant(x), axis); });
      const std::size_t outer = x.dim(1 - axis), inner = x.dim(axis);
      for (std::size_t o = 0; o < outer; ++o) {
        double s = 0.0;
        for (std::size_t i = 0; i < inner; ++i) s += axis == 1 ? y.at(o, i) : y.at(i, o);
        CHECK(std::abs(s - 1.0) < 1e-9);
      }
    }
    Tensor sg = eval([&](Tape& t) { return ops::sigmoid(t.constant(x)); });
    for (double v : sg.data()) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
      CHECK(std::isfinite(v));
    }
  }
}

TEST_CASE("masked softmax excludes padded columns") {
  Tensor x = Tensor::matrix({{1, 2, 3, 4}, {0, 0, 0, 0}});
  std::vector<double> valid{1, 1, 0, 0};
  Tensor y = eval([&](Tape& t) { return ops::masked_softmax_rows(t.constant(x), valid); });
  CHECK(y.at(0, 2) == 0.0);
  CHECK(y.at(0, 3) == 0.0);
  CHECK(y.at(1, 0) == 0.5);
  CHECK(y.at(0, 0) + y.at(0, 1) == doctest::Approx(1.0).epsilon(1e-15));
  std::vector<double> none{0, 0, 0, 0};
  Tape t;
  CHECK_THROWS_AS(ops::masked_softmax_rows(t.constant(x), none), InputError);
}

TEST_CASE("gather_rows") {
  Tensor table = Tensor::matrix({{1, 2}, {3, 4}});
  std::vector<int> ids{1, 0, 1};
  Tensor out = eval([&](Tape& t) { return ops::gather_rows(t.constant(table), ids); });
  CHECK(out == Tensor::matrix({{3, 4}, {1, 2}, {3, 4}}));

  std::vector<int> none;
  Tensor empty = eval([&](Tape& t) { return ops::gather_rows(t.constant(table), none); });
  CHECK(empty.shape() == Shape{0, 2});

  std::vector<int> bad{0, 5};
  Tape t;
  try {
    ops::gather_rows(t.constant(table), bad);
    FAIL("expected IndexError");
  } catch (const IndexError& e) {
    CHECK(e.offending() == 5);
  }

  // Duplicate ids accumulate.
  Rng rng(2);
  Tensor tab = random_tensor({4, 3}, rng), w = random_tensor({5, 3}, rng);
  std::vector<int> dup{2, 2, 0, 2, 3};
  auto rep = grad_check(
      [&](Tape& tp, const std::vector<Var>& v) {
        return ops::sum(ops::mul(ops::gather_rows(v[0], dup), tp.constant(w)));
      },
      {tab}, linear_tol());
  CHECK(rep.passed);
  Tape tp;
  Var vt = tp.input(tab);
  tp.backward(ops::sum(ops::gather_rows(vt, dup)));
  CHECK(tp.grad(vt)->at(2, 0) == 3.0);
  CHECK(tp.grad(vt)->at(1, 0) == 0.0);
}

TEST_CASE("bce_loss") {
  auto bce = [](std::vector<double> p, std::vector<double> y) {
    Tape t(false);
    return ops::bce_loss(t.constant(Tensor::vector(p)), Tensor::vector(y)).value().item();
  };
  CHECK(bce({1 - 1e-12, 1 - 1e-12}, {1, 1}) < 1e-10);
  CHECK(bce({0.5}, {1}) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(bce({0.0, 1.0}, {0, 1}) >= 0.0);
  CHECK(std::isfinite(bce({0.0}, {1})));
  CHECK_THROWS_AS(bce({0.5}, {0.5}), ArgumentError);

  Rng rng(9);
  Tensor p({10}), y({10});
  for (std::size_t i = 0; i < 10; ++i) {
    p[i] = rng.uniform(0.05, 0.95);
    y[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
  }
  auto rep = grad_check(
      [&](Tape&, const std::vector<Var>& v) { return ops::bce_loss(v[0], y); }, {p}, linear_tol());
  CHECK(rep.passed);
}

TEST_CASE("bce_with_logits") {
  auto loss = [](std::vector<double> z, std::vector<double> y) {
    Tape t(false);
    return ops::bce_with_logits(t.constant(Tensor::vector(z)), Tensor::vector(y)).value().item();
  };
  // Reference straight from the definition at moderate logits.
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> z(5), y(5);
    double ref = 0.0;
    for (std::size_t i = 0; i < 5; ++i) {
      z[i] = rng.uniform(-8, 8);
      y[i] = rng.bernoulli(0.5);
      const double p = 1.0 / (1.0 + std::exp(-z[i]));
      ref += y[i] == 1.0 ? -std::log(p) : -std::log(1.0 - p);
    }
    CHECK(std::abs(loss(z, y) - ref) <= 1e-12 * std::max(1.0, ref));
  }
  // Saturated and wrong: the loss keeps growing linearly and the gradient stays -1/+1.
  CHECK(loss({200.0}, {0}) == doctest::Approx(200.0).epsilon(1e-15));
  CHECK(loss({-200.0}, {1}) == doctest::Approx(200.0).epsilon(1e-15));
  CHECK(loss({200.0}, {1}) == doctest::Approx(std::exp(-200.0)).epsilon(1e-12));
  Tape t;
  Var z = t.input(Tensor::vector({60.0, -60.0, 0.0}));
  t.backward(ops::bce_with_logits(z, Tensor::vector({0, 1, 1})));
  CHECK((*t.grad(z))[0] == doctest::Approx(1.0));
  CHECK((*t.grad(z))[1] == doctest::Approx(-1.0));
  CHECK((*t.grad(z))[2] == doctest::Approx(-0.5));
  CHECK_THROWS_AS(loss({0.0}, {2.0}), ArgumentError);
  CHECK_THROWS_AS(loss({0.0, 1.0}, {1.0}), DimensionError);
}

TEST_CASE("backward contracts") {
  Tape t;
  Var x = t.input(Tensor::vector({1, 2, 3}));
  t.backward(ops::sum(x));
  CHECK(*t.grad(x) == Tensor::vector({1, 1, 1}));
  CHECK_THROWS_AS(t.backward(ops::sum(x)), ArgumentError);

  Tape t2;
  Var s = t2.input(Tensor::scalar(3.0));
  t2.backward(ops::mul(s, s));
  CHECK(t2.grad(s)->item() == 6.0);

  Tape t3;
  Var v = t3.input(Tensor::vector({1, 2}));
  CHECK_THROWS_AS(t3.backward(ops::scale(v, 2.0)), ArgumentError);
}

TEST_CASE("a tensor feeding two consumers accumulates both contributions") {
  Rng rng(4);
  Tensor x = random_tensor({3, 3}, rng);
  auto f = [](Tape&, const std::vector<Var>& v) {
    Var a = ops::tanh(v[0]);
    Var b = ops::matmul(v[0], v[0]);
    return ops::sum(ops::add(ops::mul(a, b), ops::sigmoid(v[0])));
  };
  auto rep = grad_check(f, {x});
  CHECK(rep.passed);
  CHECK(rep.max_rel_error < 1e-6);
}

TEST_CASE("parameter leaves accumulate into Parameter::grad") {
  Parameter p("w", Tensor::vector({1, 2}));
  {
    Tape t;
    t.backward(ops::sum(ops::scale(t.param(p), 3.0)));
    t.accumulate_param_grads();
  }
  CHECK(p.grad == Tensor::vector({3, 3}));
  p.trainable = false;
  Tape t;
  Var leaf = t.param(p);
  CHECK_FALSE(t.requires_grad(leaf.id()));
}

// Every op, 100 random shapes/seeds. Linear ops at 1e-6, nonlinear at 1e-4.
TEST_CASE("finite-difference sweep over all ops") {
  for (const auto& c : testing::op_grad_cases()) {
    double worst = 0.0;
    const std::string failure = testing::run_op_case(c, 100, &worst);
    CHECK_MESSAGE(failure.empty(), failure);
    MESSAGE(std::string(c.name), " worst rel err ", worst);
  }
}

TEST_CASE("same padding preserves length for odd K, any rate and length") {
  Rng rng(8);
  for (int K : {1, 3, 5, 7, 9})
    for (int r : {1, 2, 3, 4, 5, 9})
      for (std::size_t n : {1u, 2u, 7u, 40u}) {
        Tensor x = random_tensor({n, 2}, rng), f = random_tensor({std::size_t(K), 2, 2}, rng);
        Tensor out = eval([&](Tape& t) {
          return ops::conv1d_dilated(t.constant(x), t.constant(f), r, ops::same_padding(K, r));
        });
        CHECK(out.dim(0) == n);
      }
}
