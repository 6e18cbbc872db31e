// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <numbers>

#include "gsn/data.hpp"
#include "gsn/error.hpp"
#include "gsn/shaping.hpp"
#include "oracles.hpp"

using namespace gsn;
using gsn::ad::Tape;
using gsn::ad::Var;
using gsn::exact::Dist;

namespace {

const double kLn2 = std::numbers::ln2;

// f(x) = x0 * scale + offset, as a one-layer guide over 1-D inputs.
Guide linear_guide(double scale, double offset, std::size_t d = 1) {
  ParamStore p;
  p.add("w0", Tensor({d, 1}, scale));
  p.add("b0", Tensor::vector({offset}));
  return Guide(Mlp::from_params(p));
}

Tensor column(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor({n, 1}, std::move(v));
}

double minimize_by_bisection(double d, double g) {
  // d/df [d b(f) + g b(-f)] = -d sigmoid(-f) + g sigmoid(f), increasing in f.
  auto slope = [&](double f) { return -d / (1 + std::exp(f)) + g / (1 + std::exp(-f)); };
  double lo = -50, hi = 50;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (slope(mid) > 0 ? hi : lo) = mid;
  }
  return 0.5 * (lo + hi);
}

Dist perturbed(const Dist& d, std::uint64_t seed) {
  Stream s(seed);
  std::vector<double> v(d.size());
  double total = 0;
  for (std::size_t i = 0; i < v.size(); ++i) total += v[i] = d[i] * std::exp(0.5 * s.normal());
  for (auto& x : v) x /= total;
  return Dist(v);
}

double softmax_loss_g(std::vector<double> logits, const std::vector<double>& f) {
  double m = logits[0];
  for (double l : logits) m = std::max(m, l);
  double z = 0;
  for (double& l : logits) z += l = std::exp(l - m);
  double out = 0;
  for (std::size_t i = 0; i < f.size(); ++i) out += logits[i] / z * std::max(0.0, -f[i]);
  return out;
}

}  // namespace

TEST_CASE("binomial deviance") {
  CHECK(std::abs(binomial_deviance(0.0) - kLn2) < 1e-15);
  CHECK(binomial_deviance(50.0) < 1e-20);
  for (double f = -30; f <= 30; f += 0.125) CHECK(std::abs(binomial_deviance(-f) - binomial_deviance(f) - f) < 1e-12);
  CHECK(std::isfinite(binomial_deviance(1e6)));
  CHECK(std::isfinite(binomial_deviance(-1e6)));
  CHECK(std::abs(binomial_deviance(-1e6) - 1e6) < 1e-9);
  Tape tape;
  const Tensor v = binomial_deviance(tape.constant(Tensor::vector({0, 2}))).value();
  CHECK(v[0] == binomial_deviance(0.0));
  CHECK(v[1] == binomial_deviance(2.0));
}

TEST_CASE("guide loss at a zero guide is 2 ln 2") {
  const Guide guide(Mlp::zeros({2, 4, 1}));
  Stream s(0);
  Tape tape;
  auto bound = guide.net().bind(tape);
  const double l = loss_f(guide, bound, tape.constant(s.normal(5, 2)), tape.constant(s.normal(5, 2))).value().item();
  CHECK(std::abs(l - 2 * kLn2) < 1e-15);
}

TEST_CASE("guide loss vanishes under perfect separation") {
  const Guide guide = linear_guide(200.0, 0.0);
  Tape tape;
  auto bound = guide.net().bind(tape);
  const double l =
      loss_f(guide, bound, tape.constant(column({1, 2, 3})), tape.constant(column({-1, -2, -0.5}))).value().item();
  CHECK(l < 1e-20);
}

TEST_CASE("identical batches: guide loss is at least 2 ln 2") {
  Stream s(1);
  const Tensor x = s.normal(8, 2);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Guide guide = Guide::init(2, {6}, seed);
    Tape tape;
    auto bound = guide.net().bind(tape);
    const Var xv = tape.constant(x);
    CHECK(loss_f(guide, bound, xv, xv).value().item() > 2 * kLn2);
  }
  const Guide flat = linear_guide(0.0, 0.0, 2);
  Tape tape;
  auto bound = flat.net().bind(tape);
  CHECK(loss_f(flat, bound, tape.constant(x), tape.constant(x)).value().item() == doctest::Approx(2 * kLn2));
}

TEST_CASE("guide loss rejects mismatched batches and treats samples as constants") {
  const Guide guide = Guide::init(2, {4}, 2);
  Stream s(2);
  Tape tape;
  auto bound = guide.net().bind(tape);
  CHECK_THROWS_AS(loss_f(guide, bound, tape.constant(s.normal(3, 2)), tape.constant(s.normal(3, 3))), ShapeError);
  Var gen = tape.leaf(s.normal(3, 2));
  auto g = tape.backward(loss_f(guide, bound, tape.constant(s.normal(3, 2)), gen));
  for (double v : g[gen].values()) CHECK(v == 0.0);
}

TEST_CASE("guide loss gradient with respect to guide parameters") {
  const Guide guide = Guide::init(2, {5}, 3);
  Stream s(3);
  const Tensor data = s.normal(6, 2), gen = s.normal(6, 2);
  CHECK(ad::grad_check(
            [&](Tape& tape, std::span<const Var> v) {
              return loss_f(guide, guide.net().bound_from(v), tape.constant(data), tape.constant(gen));
            },
            guide.net().layer_tensors(), 1e-5) < 1e-4);
}

TEST_CASE("generator loss values") {
  const Guide id = linear_guide(1.0, 0.0);
  Tape tape;
  auto bound = id.net().bind(tape, false);
  CHECK(loss_g(id, bound, tape.constant(column({0, 2, 5}))).value().item() == 0.0);
  CHECK(std::abs(loss_g(id, bound, tape.constant(column({-1, 2, -3}))).value().item() - 4.0 / 3) < 1e-15);
}

TEST_CASE("generator loss leaves under-dense samples unmoved") {
  const Guide id = linear_guide(1.0, 0.0);
  Tape tape;
  auto bound = id.net().bind(tape, false);
  Var gen = tape.leaf(column({-1, 2, -3, 0.5}));
  auto g = tape.backward(loss_g(id, bound, gen));
  CHECK(g[gen] == column({-0.25, 0, -0.25, 0}));
}

TEST_CASE("generator loss gradient through the batch") {
  const Guide guide = Guide::init(2, {5}, 4);
  Stream s(4);
  const Tensor gen = s.normal(8, 2);
  for (double f : guide.scores(gen)) REQUIRE(std::abs(f) > 1e-3);
  const Tensor leaves[] = {gen};
  CHECK(ad::grad_check(
            [&](Tape& tape, std::span<const Var> v) {
              return loss_g(guide, guide.net().bind(tape, false), v[0]);
            },
            leaves, 1e-5) < 1e-4);
}

TEST_CASE("generator loss is non-negative and zero exactly when scores are") {
  Stream s(5);
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const Guide guide = Guide::init(2, {4}, seed);
    const Tensor gen = s.normal(10, 2);
    Tape tape;
    const double l = loss_g(guide, guide.net().bind(tape, false), tape.constant(gen)).value().item();
    bool any_negative = false;
    for (double f : guide.scores(gen)) any_negative = any_negative || f < 0;
    CHECK(l >= 0);
    CHECK((l == 0) == !any_negative);
  }
}

TEST_CASE("moment matching") {
  const Tensor batch = Tensor::matrix(4, 2, {1, 0, -1, 0, 0, 2, 0, -2});
  const Tensor mean = Tensor::vector({0, 0});
  const Tensor cov = Tensor::matrix(2, 2, {2.0 / 3, 0, 0, 8.0 / 3});
  Tape tape;
  CHECK(std::abs(moment_match_loss(tape.constant(batch), mean, cov).value().item()) < 1e-15);
  Tensor shifted = batch;
  for (std::size_t r = 0; r < 4; ++r) {
    shifted(r, 0) += 0.5;
    shifted(r, 1) -= 1.5;
  }
  CHECK(std::abs(moment_match_loss(tape.constant(shifted), mean, cov).value().item() - 2.5) < 1e-14);
  CHECK_THROWS_AS(moment_match_loss(tape.constant(Tensor({1, 2})), mean, cov), InvalidArgument);
  CHECK_THROWS_AS(moment_match_loss(tape.constant(batch), Tensor::vector({0}), cov), ShapeError);
}

TEST_CASE("moment matching against a two-pass oracle") {
  Stream s(6);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor x = s.normal(20, 3);
    const Tensor dm = s.normal(1, 3);
    Tensor dc = s.normal(3, 3);
    const Tensor mean({3}, dm.storage());
    // Two-pass mean then covariance.
    double want = 0;
    std::vector<double> mu(3, 0);
    for (std::size_t r = 0; r < 20; ++r)
      for (std::size_t j = 0; j < 3; ++j) mu[j] += x(r, j) / 20;
    for (std::size_t j = 0; j < 3; ++j) want += (mu[j] - mean[j]) * (mu[j] - mean[j]);
    for (std::size_t a = 0; a < 3; ++a)
      for (std::size_t b = 0; b < 3; ++b) {
        double c = 0;
        for (std::size_t r = 0; r < 20; ++r) c += (x(r, a) - mu[a]) * (x(r, b) - mu[b]);
        c /= 19;
        want += (c - dc(a, b)) * (c - dc(a, b));
      }
    Tape tape;
    CHECK(std::abs(moment_match_loss(tape.constant(x), mean, dc).value().item() - want) < 1e-10);

    const Tensor leaves[] = {x};
    CHECK(ad::grad_check([&](Tape&, std::span<const Var> v) { return moment_match_loss(v[0], mean, dc); }, leaves,
                         1e-5) < 1e-4);
  }
}

TEST_CASE("optimal guide closed forms") {
  for (double f : optimal_guide_discrete(Dist({0.2, 0.8}), Dist({0.2, 0.8}))) CHECK(f == 0.0);
  const auto f = optimal_guide_discrete(Dist({0.75, 0.25}), Dist({0.25, 0.75}));
  CHECK(std::abs(f[0] - std::log(3.0)) < 1e-15);
  CHECK(std::abs(f[1] + std::log(3.0)) < 1e-15);
  CHECK(f[0] == doctest::Approx(1.0986123).epsilon(1e-7));
  try {
    (void)optimal_guide_discrete(Dist({0.5, 0.5, 0.0}), Dist({0.5, 0.25, 0.25}));
    FAIL("expected a support mismatch");
  } catch (const InvalidArgument& e) {
    CHECK(std::string(e.what()).find("state 2") != std::string::npos);
  }
}

TEST_CASE("exact guide minimization recovers log D/G") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Dist d = random_discrete_target(8, 1.0, seed);
    const Dist g = random_discrete_target(8, 1.0, seed + 100);
    const auto f_star = optimal_guide_discrete(d, g);
    const auto f_min = minimize_loss_f_exact(d, g);
    for (std::size_t x = 0; x < 8; ++x) {
      CHECK(std::abs(f_min[x] - f_star[x]) < 1e-6);
      CHECK(std::abs(minimize_by_bisection(d[x], g[x]) - f_star[x]) < 1e-6);
    }
  }
}

TEST_CASE("exact losses") {
  const Dist d = random_discrete_target(6, 1.0, 1);
  const Dist g = perturbed(d, 2);
  const std::vector<double> zero(6, 0.0);
  CHECK(std::abs(loss_f_exact(zero, d, g) - 2 * kLn2) < 1e-15);
  CHECK(loss_g_exact(optimal_guide_discrete(d, g), g) > 0);
  CHECK(loss_g_exact(optimal_guide_discrete(d, d), d) == 0.0);
  CHECK_THROWS_AS(loss_g_exact(zero, Dist::uniform(5)), ShapeError);
  const std::vector<double> f{-1, 0.5, -2, 0, 3, 1};
  double want = 0;
  for (std::size_t x = 0; x < 6; ++x) want += g[x] * std::max(0.0, -f[x]);
  CHECK(std::abs(loss_g_exact(f, g) - want) < 1e-15);
}

TEST_CASE("guide loss is midpoint convex") {
  Stream s(7);
  const Dist d = random_discrete_target(5, 1.0, 3), g = random_discrete_target(5, 1.0, 4);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> a(5), b(5), mid(5);
    for (std::size_t i = 0; i < 5; ++i) {
      a[i] = 3 * s.normal();
      b[i] = 3 * s.normal();
      mid[i] = 0.5 * (a[i] + b[i]);
    }
    CHECK(loss_f_exact(mid, d, g) <= 0.5 * (loss_f_exact(a, d, g) + loss_f_exact(b, d, g)) + 1e-12);
  }
}

TEST_CASE("joint optimum: generator loss at f* is zero iff G = D") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Dist d = random_discrete_target(8, 1.0, seed);
    const Dist g = perturbed(d, seed + 7);
    double gap = 0;
    for (std::size_t x = 0; x < 8; ++x) gap = std::max(gap, std::abs(g[x] - d[x]));
    REQUIRE(gap >= 1e-12);
    CHECK(loss_g_exact(optimal_guide_discrete(d, g), g) > 0);
    CHECK(loss_g_exact(optimal_guide_discrete(d, d), d) == 0.0);
    for (double v : loss_g_logit_gradient(d, optimal_guide_discrete(d, d))) CHECK(v == 0.0);
  }
}

TEST_CASE("logit gradient matches finite differences") {
  Stream s(8);
  std::vector<double> logits(6), f(6);
  for (auto& l : logits) l = s.normal();
  for (auto& v : f) v = s.normal();
  GenDist gen{logits};
  const auto grad = loss_g_logit_gradient(gen.probs(), f);
  const auto fd = oracle::fd_gradient([&](const std::vector<double>& l) { return softmax_loss_g(l, f); }, logits, 1e-6);
  for (std::size_t i = 0; i < 6; ++i) CHECK(std::abs(grad[i] - fd[i]) < 1e-8);
}

TEST_CASE("collaborative descent from G = D stays put") {
  const Dist d = random_discrete_target(8, 1.0, 0);
  GenDist init;
  for (double p : d.values()) init.logits.push_back(std::log(p));
  const auto run = collaborative_descent(d, init, 100, 0.05);
  CHECK(run.fixed_point_gradient == 0.0);
  CHECK(run.initial_tv < 1e-15);
  for (double tv : run.tv) CHECK(tv == run.initial_tv);
}

TEST_CASE("collaborative descent converges on a random target") {
  const Dist d = random_discrete_target(8, 1.0, 0);
  const auto run = verify_theorem3(d, 5000, 0.05, 0);
  CHECK(run.initial_tv > 0.05);
  CHECK(run.final_tv < 0.05);
  CHECK(run.fixed_point_gradient == 0.0);
  CHECK(run.tv.size() == 5000);
}

TEST_CASE("total variation is non-increasing over windows for a small step") {
  const Dist d = random_discrete_target(8, 1.0, 0);
  const auto run = verify_theorem3(d, 4000, 0.01, 0);
  double prev = run.initial_tv;
  for (std::size_t end = 99; end < run.tv.size(); end += 100) {
    CAPTURE(end);
    CHECK(run.tv[end] <= prev + 1e-12);
    prev = run.tv[end];
  }
}

TEST_CASE("collaborative descent preconditions") {
  CHECK_THROWS_AS(verify_theorem3(Dist({0.5, 0.5, 0.0}), 10, 0.05, 0), InvalidArgument);
  CHECK_THROWS_AS(verify_theorem3(Dist::uniform(3), 10, 0.0, 0), InvalidArgument);
}
