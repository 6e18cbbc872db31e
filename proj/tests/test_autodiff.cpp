// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "gsn/autodiff.hpp"
#include "gsn/error.hpp"
#include "gsn/rng.hpp"
#include "gsn/tensor.hpp"
#include "oracles.hpp"

using namespace gsn;
using gsn::ad::Tape;
using gsn::ad::Var;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed) {
  Stream s(seed);
  Tensor t(shape);
  for (double& v : t.values()) v = s.normal();
  return t;
}

}  // namespace

TEST_CASE("tensor construction and shape checks") {
  Tensor t({2, 3}, 1.5);
  CHECK(t.size() == 6);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
  CHECK_THROWS_AS(Tensor({0, 2}), ShapeError);
  Tape tape;
  CHECK_THROWS_AS(tape.leaf(Tensor({1}, std::vector<double>{std::nan("")})), NumericError);
}

TEST_CASE("matmul with identity returns the operand") {
  Tape tape;
  const Tensor a = random_tensor({3, 4}, 1);
  Var out = ad::matmul(tape.constant(Tensor::identity(3)), tape.constant(a));
  CHECK(out.value() == a);
}

TEST_CASE("primitive values") {
  Tape tape;
  CHECK(ad::softplus(tape.constant(0.0)).value().item() == doctest::Approx(0.6931472).epsilon(1e-7));
  CHECK(ad::sum(tape.constant(Tensor({2, 2}, 1.0))).value().item() == 4.0);
  CHECK(ad::mean(tape.constant(Tensor::vector({1, 2, 3, 6}))).value().item() == 3.0);
  const Tensor m = Tensor::matrix(2, 2, {1, 2, 3, 4});
  const Tensor r = ad::add_row(tape.constant(m), tape.constant(Tensor::vector({10, 20}))).value();
  CHECK(r == Tensor::matrix(2, 2, {11, 22, 13, 24}));
  CHECK(ad::relu(tape.constant(Tensor::vector({-1, 0, 2}))).value() == Tensor::vector({0, 0, 2}));
  CHECK(ad::abs(tape.constant(Tensor::vector({-1, 0, 2}))).value() == Tensor::vector({1, 0, 2}));
  CHECK(ad::sigmoid(tape.constant(0.0)).value().item() == 0.5);
}

TEST_CASE("shape mismatch names both shapes") {
  Tape tape;
  Var a = tape.constant(Tensor({2, 3}));
  Var b = tape.constant(Tensor({3, 2}));
  try {
    (void)ad::add(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("[3x2]") != std::string::npos);
  }
  CHECK_THROWS_AS(ad::matmul(a, a), ShapeError);
}

TEST_CASE("log rejects non-positive input") {
  Tape tape;
  CHECK_THROWS_AS(ad::log(tape.constant(Tensor::vector({1.0, 0.0}))), NumericError);
  CHECK_THROWS_AS(ad::log(tape.constant(Tensor::vector({-2.0}))), NumericError);
}

TEST_CASE("exp overflow is reported") {
  Tape tape;
  CHECK_THROWS_AS(ad::exp(tape.constant(1000.0)), NumericError);
}

TEST_CASE("backward of sum of squares") {
  Tape tape;
  Var x = tape.leaf(Tensor::vector({1, 2, 3}));
  auto g = tape.backward(ad::sum(ad::mul(x, x)));
  CHECK(g[x] == Tensor::vector({2, 4, 6}));
}

TEST_CASE("unrelated leaves get zero gradient") {
  Tape tape;
  Var x = tape.leaf(Tensor::vector({1, 2}));
  Var c = tape.constant(Tensor::vector({3, 4}));
  auto g = tape.backward(ad::sum(c));
  CHECK(g[x] == Tensor::vector({0, 0}));
}

TEST_CASE("backward rejects a non-scalar output") {
  Tape tape;
  Var x = tape.leaf(Tensor::vector({1, 2}));
  CHECK_THROWS_AS(tape.backward(ad::square(x)), ShapeError);
}

TEST_CASE("tape order puts inputs before nodes") {
  Tape tape;
  Var x = tape.leaf(Tensor::vector({1, 2}));
  Var y = ad::tanh(ad::square(x));
  (void)ad::sum(ad::add(y, x));
  for (std::size_t id = 0; id < tape.size(); ++id)
    for (std::size_t in : tape.inputs(id)) CHECK(in < id);
}

TEST_CASE("sum(tanh(Wx)) against an independent finite-difference oracle") {
  const Tensor w = random_tensor({4, 3}, 11);
  const Tensor x = random_tensor({3, 1}, 12);
  Tape tape;
  Var wv = tape.leaf(w);
  Var xv = tape.leaf(x);
  auto g = tape.backward(ad::sum(ad::tanh(ad::matmul(wv, xv))));

  auto f = [&](const std::vector<double>& wflat) {
    double s = 0;
    for (std::size_t r = 0; r < 4; ++r) {
      double acc = 0;
      for (std::size_t c = 0; c < 3; ++c) acc += wflat[r * 3 + c] * x[c];
      s += std::tanh(acc);
    }
    return s;
  };
  const auto fd = oracle::fd_gradient(f, w.storage(), 1e-5);
  double worst = 0;
  for (std::size_t i = 0; i < fd.size(); ++i) {
    const double a = g[wv][i], b = fd[i];
    worst = std::max(worst, std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8}));
  }
  CHECK(worst < 1e-4);

  const Tensor leaves[] = {w, x};
  const double err = ad::grad_check(
      [](Tape&, std::span<const Var> v) { return ad::sum(ad::tanh(ad::matmul(v[0], v[1]))); }, leaves, 1e-5);
  CHECK(err < 1e-4);
}

TEST_CASE("grad_check on half squared norm is exact") {
  const Tensor leaves[] = {random_tensor({5}, 3)};
  const double err =
      ad::grad_check([](Tape&, std::span<const Var> v) { return ad::scale(ad::sum(ad::square(v[0])), 0.5); },
                     leaves, 1e-5);
  CHECK(err < 1e-8);
}

TEST_CASE("every differentiable primitive passes grad_check") {
  const Tensor a = random_tensor({3, 2}, 21);
  const Tensor b = random_tensor({3, 2}, 22);
  Tensor pos = a;
  for (double& v : pos.values()) v = std::abs(v) + 0.5;
  const Tensor row = random_tensor({2}, 23);
  const Tensor sq = random_tensor({2, 3}, 24);

  using Fn = ad::ScalarFn;
  const std::vector<std::pair<const char*, Fn>> cases = {
      {"sub", [](Tape&, std::span<const Var> v) { return ad::sum(ad::mul(ad::sub(v[0], v[1]), v[0])); }},
      {"sigmoid", [](Tape&, std::span<const Var> v) { return ad::sum(ad::mul(ad::sigmoid(v[0]), v[1])); }},
      {"softplus", [](Tape&, std::span<const Var> v) { return ad::sum(ad::mul(ad::softplus(v[0]), v[1])); }},
      {"exp", [](Tape&, std::span<const Var> v) { return ad::mean(ad::exp(ad::mul(v[0], v[1]))); }},
      {"square", [](Tape&, std::span<const Var> v) { return ad::sum(ad::square(ad::add(v[0], v[1]))); }},
      {"row_sum", [](Tape&, std::span<const Var> v) { return ad::sum(ad::square(ad::row_sum(v[0]))); }},
      {"col_mean", [](Tape&, std::span<const Var> v) { return ad::sum(ad::square(ad::col_mean(v[1]))); }},
      {"transpose", [](Tape&, std::span<const Var> v) {
         return ad::sum(ad::tanh(ad::matmul(ad::transpose(v[0]), v[1])));
       }},
      {"slice", [](Tape&, std::span<const Var> v) { return ad::sum(ad::square(ad::slice_cols(v[0], 1, 1))); }},
      {"concat", [](Tape&, std::span<const Var> v) {
         const Var parts[] = {v[0], v[1]};
         return ad::sum(ad::tanh(ad::concat_rows(parts)));
       }},
      {"gather", [](Tape&, std::span<const Var> v) {
         const std::size_t rows[] = {2, 0, 2};
         return ad::sum(ad::square(ad::gather_rows(v[0], rows)));
       }},
  };
  const Tensor leaves[] = {a, b};
  for (const auto& [name, fn] : cases) {
    CAPTURE(name);
    CHECK(ad::grad_check(fn, leaves, 1e-5) < 1e-6);
  }

  const Tensor log_leaves[] = {pos, b};
  CHECK(ad::grad_check([](Tape&, std::span<const Var> v) { return ad::sum(ad::mul(ad::log(v[0]), v[1])); },
                       log_leaves, 1e-5) < 1e-6);
  const Tensor row_leaves[] = {a, row};
  CHECK(ad::grad_check([](Tape&, std::span<const Var> v) { return ad::sum(ad::tanh(ad::add_row(v[0], v[1]))); },
                       row_leaves, 1e-5) < 1e-6);
  const Tensor mm_leaves[] = {a, sq};
  CHECK(ad::grad_check([](Tape&, std::span<const Var> v) { return ad::sum(ad::tanh(ad::matmul(v[0], v[1]))); },
                       mm_leaves, 1e-5) < 1e-6);
}

TEST_CASE("relu and abs subgradient at zero is zero") {
  Tape tape;
  Var x = tape.leaf(Tensor::vector({-1, 0, 2}));
  auto gr = tape.backward(ad::sum(ad::relu(x)));
  CHECK(gr[x] == Tensor::vector({0, 0, 1}));
  auto ga = tape.backward(ad::sum(ad::abs(x)));
  CHECK(ga[x] == Tensor::vector({-1, 0, 1}));
}

TEST_CASE("softplus is stable over a huge range") {
  for (double t = -1e6; t <= 1e6; t += 1e6 / 64) {
    const double v = ad::softplus(t);
    REQUIRE(std::isfinite(v));
    CHECK(v >= 0);
  }
  for (double t = 30; t <= 1e6; t *= 1.7) CHECK(std::abs(ad::softplus(t) - t) < 1e-12);
  CHECK(ad::softplus(-1e6) == 0.0);
  Tape tape;
  Var big = tape.leaf(Tensor::vector({-1e6, 1e6}));
  auto g = tape.backward(ad::sum(ad::softplus(big)));
  CHECK(g[big] == Tensor::vector({0, 1}));
}

TEST_CASE("gradient linearity") {
  Stream s(9);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor x0 = random_tensor({4}, 100 + trial);
    const double a = s.normal(), b = s.normal();
    auto fg = [](Var x) { return ad::sum(ad::tanh(x)); };
    auto gg = [](Var x) { return ad::sum(ad::mul(ad::softplus(x), x)); };
    Tape t1;
    Var x1 = t1.leaf(x0);
    auto combined = t1.backward(ad::add(ad::scale(fg(x1), a), ad::scale(gg(x1), b)));
    Tape t2;
    Var x2 = t2.leaf(x0);
    auto gf = t2.backward(fg(x2));
    auto ggr = t2.backward(gg(x2));
    for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(combined[x1][i] - (a * gf[x2][i] + b * ggr[x2][i])) < 1e-12);
  }
}

TEST_CASE("forward values and gradients are bitwise deterministic") {
  const Tensor w = random_tensor({3, 3}, 5);
  auto run = [&] {
    Tape tape;
    Var wv = tape.leaf(w);
    Var out = ad::sum(ad::softplus(ad::matmul(wv, ad::tanh(wv))));
    auto g = tape.backward(out);
    return std::pair{out.value(), g[wv]};
  };
  CHECK(run() == run());
}
