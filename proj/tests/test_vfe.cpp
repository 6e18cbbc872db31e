// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "gsn/error.hpp"
#include "gsn/vfe.hpp"
#include "oracles.hpp"

using namespace gsn;
using namespace gsn::exact;
using gsn::ad::Tape;
using gsn::ad::Var;

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

GsnLayout layout(std::size_t d, std::size_t k) {
  GsnLayout l;
  l.data_dim = d;
  l.latent_dim = k;
  l.encoder_hidden = {5};
  l.decoder_hidden = {5};
  return l;
}

SimpleGsn random_gsn(std::uint64_t seed) {
  SimpleGsn g = SimpleGsn::init(layout(2, 2), seed);
  ParamStore p = g.parameters();
  Stream s(seed + 50);
  for (const auto& name : p.names())
    if (name.find(".b") != std::string::npos)
      for (double& v : p.values(name)) v = 0.2 * s.normal();
  g.set_parameters(p);
  return g;
}

struct Triple {
  CondTable q, p;
  Dist prior;
};

Triple random_triple(std::uint64_t seed, std::size_t nx = 5, std::size_t nz = 4) {
  Stream s(seed);
  CondTable q = CondTable::random(nz, nx, s);
  CondTable p = CondTable::random(nx, nz, s);
  std::vector<double> w(nz);
  double total = 0;
  for (auto& v : w) total += v = s.gamma(1.0) + 1e-3;
  for (auto& v : w) v /= total;
  return {q, p, Dist(w)};
}

// Derived posterior p(z | x; p*) as a Q table.
CondTable derived_posterior(const CondTable& p, const Dist& prior) {
  const std::size_t nx = p.outcomes(), nz = p.conditions();
  std::vector<double> v(nz * nx);
  for (std::size_t x = 0; x < nx; ++x) {
    double ev = 0;
    for (std::size_t z = 0; z < nz; ++z) ev += p(x, z) * prior[z];
    for (std::size_t z = 0; z < nz; ++z) v[z * nx + x] = p(x, z) * prior[z] / ev;
  }
  return CondTable(nz, nx, v);
}

}  // namespace

TEST_CASE("zero model free energy at the origin") {
  SimpleGsn g = SimpleGsn::zeros(layout(1, 1));
  ZeroNoise zn;
  const VfeBreakdown b = vfe_mc(g, Tensor({1, 1}), 1, zn);
  CHECK(std::abs(b.reconstruction - kHalfLog2Pi) < 1e-15);
  CHECK(b.kl == 0.0);
  CHECK(b.total == doctest::Approx(0.9189385).epsilon(1e-7));
}

TEST_CASE("total is reconstruction plus kl and kl ignores the sample count") {
  const SimpleGsn g = random_gsn(1);
  Stream s(2);
  const Tensor x = s.normal(6, 2);
  double kl = 0;
  for (std::size_t n : {1, 3, 20}) {
    GaussianNoise noise{Stream(n)};
    const VfeBreakdown b = vfe_mc(g, x, n, noise);
    CHECK(std::abs(b.total - (b.reconstruction + b.kl)) < 1e-12);
    CHECK(b.kl >= 0);
    if (n == 1) kl = b.kl;
    CHECK(b.kl == kl);
  }
  ZeroNoise zn;
  CHECK_THROWS_AS(vfe_mc(g, x, 0, zn), InvalidArgument);
}

TEST_CASE("Monte Carlo estimates agree within three standard errors") {
  const SimpleGsn g = random_gsn(3);
  const std::size_t rows = 10;
  Tensor x({rows, 2});
  for (std::size_t r = 0; r < rows; ++r) {
    x(r, 0) = 0.3;
    x(r, 1) = -0.6;
  }
  GaussianNoise n1(Stream(4)), n2(Stream(5));
  const double small = vfe_mc(g, x, 1000, n1).reconstruction;
  const double large = vfe_mc(g, x, 10000, n2).reconstruction;

  // Spread of a single-draw reconstruction term, from a by-hand evaluation.
  const Tensor x1 = Tensor::matrix(1, 2, {0.3, -0.6});
  const Tensor qraw = oracle::mlp(g.encoder(), x1);
  Stream o(6);
  const std::size_t draws = 20000;
  std::vector<double> nll(draws);
  for (std::size_t i = 0; i < draws; ++i) {
    Tensor z({1, 2});
    for (std::size_t j = 0; j < 2; ++j) z(0, j) = qraw(0, j) + std::exp(0.5 * oracle::clamp_logvar(qraw(0, 2 + j))) * o.normal();
    const Tensor praw = oracle::mlp(g.decoder(), z);
    double v = 0;
    for (std::size_t j = 0; j < 2; ++j) {
      const double lv = oracle::clamp_logvar(praw(0, 2 + j));
      const double diff = x1(0, j) - praw(0, j);
      v += kHalfLog2Pi + 0.5 * lv + diff * diff / (2 * std::exp(lv));
    }
    nll[i] = v;
  }
  double m = 0, m2 = 0;
  for (double v : nll) m += v;
  m /= draws;
  for (double v : nll) m2 += (v - m) * (v - m);
  const double sd = std::sqrt(m2 / (draws - 1));
  const double se = sd * std::sqrt(1.0 / (1000 * rows) + 1.0 / (10000 * rows));
  CHECK(std::abs(small - large) < 3 * se);
  CHECK(std::abs(large - m) < 3 * sd * std::sqrt(1.0 / (10000 * rows) + 1.0 / draws));
}

TEST_CASE("transcoder with y = x reduces to the auto-encoder") {
  const SimpleGsn g = random_gsn(7);
  Stream s(8);
  const Tensor x = s.normal(4, 2);
  std::vector<Tensor> noise{s.normal(4, 2), s.normal(4, 2)};
  Tape tape;
  auto bound = g.bind(tape);
  Var xv = tape.constant(x);
  ReplayNoise r1(noise), r2(noise);
  const auto a = vfe_mc(g, bound, xv, 2, r1).values();
  const auto b = vfe_transcode(as_transcoder(g, bound), xv, xv, 2, r2).values();
  CHECK(a.total == b.total);
  CHECK(a.kl == b.kl);
}

TEST_CASE("transcoder at the clamp approaches the Dirac limit") {
  SimpleGsn g = random_gsn(9);
  ParamStore p = g.parameters();
  // Push the log-variance half of the encoder output far below the clamp.
  Tensor b = p.get("enc.b1");
  for (std::size_t j = 2; j < 4; ++j) b[j] = -1e4;
  p.assign("enc.b1", b);
  g.set_parameters(p);
  Stream s(10);
  const Tensor x = s.normal(3, 2), y = s.normal(3, 2);
  Tape tape;
  auto bound = g.bind(tape);
  GaussianNoise noise(Stream(11));
  const auto terms = vfe_transcode(as_transcoder(g, bound), tape.constant(x), tape.constant(y), 1, noise);
  const Tensor mu = oracle::mlp(g.encoder(), y);
  double want = 0;
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t j = 0; j < 2; ++j) want += 0.5 * (mu(r, j) * mu(r, j) + std::exp(-8.0) + 8.0 - 1.0);
  want /= 3;
  CHECK(std::abs(terms.kl.value().item() - want) < 1e-12);
}

TEST_CASE("transcoder gradient matches finite differences with fixed noise") {
  const SimpleGsn g = random_gsn(12);
  Stream s(13);
  const Tensor x = s.normal(4, 2), y = s.normal(4, 2);
  const std::vector<Tensor> noise{s.normal(4, 2), s.normal(4, 2)};
  const double err = ad::grad_check(
      [&](Tape& tape, std::span<const Var> v) {
        auto bound = g.bound_from(v);
        ReplayNoise r(noise);
        return vfe_transcode(as_transcoder(g, bound), tape.constant(x), tape.constant(y), 2, r).total;
      },
      g.layer_tensors(), 1e-5);
  CHECK(err < 1e-4);
  CHECK_THROWS_AS(
      [&] {
        Tape tape;
        auto bound = g.bind(tape);
        ZeroNoise zn;
        (void)vfe_transcode(as_transcoder(g, bound), tape.constant(x), tape.constant(Tensor({3, 2})), 1, zn);
      }(),
      ShapeError);
}

TEST_CASE("discrete free energy closed forms") {
  // Deterministic encoder z = x, identity decoder, uniform prior.
  const auto tight = vfe_exact_discrete(0, CondTable::identity(2), CondTable::identity(2), Dist::uniform(2));
  CHECK(tight.reconstruction == 0.0);
  CHECK(std::abs(tight.kl - std::log(2.0)) < 1e-15);
  CHECK(std::abs(tight.total + std::log(marginal_exact(CondTable::identity(2), Dist::uniform(2))[0])) < 1e-15);

  const Dist prior({0.2, 0.5, 0.3});
  std::vector<double> qv;
  for (std::size_t z = 0; z < 3; ++z)
    for (std::size_t x = 0; x < 4; ++x) qv.push_back(prior[z]);
  const auto flat = vfe_exact_discrete(2, CondTable(3, 4, qv), CondTable::uniform(4, 3), prior);
  CHECK(std::abs(flat.reconstruction - std::log(4.0)) < 1e-15);
  CHECK(std::abs(flat.kl) < 1e-15);
}

TEST_CASE("discrete support violations are rejected") {
  const CondTable q = CondTable::uniform(2, 2);
  CHECK_THROWS_AS(vfe_exact_discrete(0, q, CondTable(2, 2, {1, 0, 0, 1}), Dist({0.5, 0.5})), InvalidArgument);
  CHECK_THROWS_AS(vfe_exact_discrete(0, q, CondTable::uniform(2, 2), Dist({1.0, 0.0})), InvalidArgument);
  CHECK_THROWS_AS(tightness_gap(0, q, CondTable(2, 2, {1, 0, 0, 1}), Dist({0.5, 0.5})), InvalidArgument);
  CHECK_THROWS_AS(vfe_exact_discrete(0, q, CondTable::uniform(3, 2), Dist({0.5, 0.5})), ShapeError);
}

TEST_CASE("zero-mass latents contribute nothing") {
  const CondTable q(2, 2, {1, 0, 0, 1});
  // P(x=0 | z=1) = 0, but q(z=1 | x=0) = 0 too.
  const CondTable p(2, 2, {0.6, 0, 0.4, 1});
  const auto b = vfe_exact_discrete(0, q, p, Dist::uniform(2));
  CHECK(std::abs(b.reconstruction + std::log(0.6)) < 1e-15);
  CHECK(std::abs(b.kl - std::log(2.0)) < 1e-15);
}

TEST_CASE("marginal") {
  const Dist prior({0.1, 0.6, 0.3});
  const Dist m = marginal_exact(CondTable::identity(3), prior);
  for (std::size_t i = 0; i < 3; ++i) CHECK(m[i] == prior[i]);
  const Dist u = marginal_exact(CondTable::uniform(5, 3), prior);
  for (std::size_t i = 0; i < 5; ++i) CHECK(std::abs(u[i] - 0.2) < 1e-15);
  const auto t = random_triple(1);
  const Dist r = marginal_exact(t.p, t.prior);
  for (std::size_t x = 0; x < 5; ++x) {
    double want = 0;
    for (std::size_t z = 0; z < 4; ++z) want += t.p(x, z) * t.prior[z];
    CHECK(std::abs(r[x] - want) < 1e-14);
  }
  CHECK_THROWS_AS(marginal_exact(CondTable::uniform(5, 2), prior), ShapeError);
}

TEST_CASE("bound, gap identity and tightness on random triples") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto t = random_triple(seed);
    const Dist m = marginal_exact(t.p, t.prior);
    const CondTable post = derived_posterior(t.p, t.prior);
    for (std::size_t x = 0; x < 5; ++x) {
      const double total = vfe_exact_discrete(x, t.q, t.p, t.prior).total;
      const double evidence = [&] {
        double e = 0;
        for (std::size_t z = 0; z < 4; ++z) e += t.p(x, z) * t.prior[z];
        return e;
      }();
      CHECK(total + std::log(evidence) >= -1e-12);
      const double gap = tightness_gap(x, t.q, t.p, t.prior);
      CHECK(gap >= 0);
      CHECK(std::abs(gap - (total + std::log(m[x]))) < 1e-12);
      CHECK(std::abs(tightness_gap(x, post, t.p, t.prior)) < 1e-12);
    }
  }
}

TEST_CASE("gap vanishes only at the derived posterior") {
  const auto t = random_triple(99);
  const CondTable post = derived_posterior(t.p, t.prior);
  Stream s(100);
  for (double eps : {1e-2, 1e-4}) {
    // Mix the posterior with a random column; the gap must become visible.
    const CondTable other = CondTable::random(4, 5, s);
    std::vector<double> v(20);
    for (std::size_t z = 0; z < 4; ++z)
      for (std::size_t x = 0; x < 5; ++x) v[z * 5 + x] = (1 - eps) * post(z, x) + eps * other(z, x);
    const CondTable mixed(4, 5, v);
    for (std::size_t x = 0; x < 5; ++x) {
      double diff = 0;
      for (std::size_t z = 0; z < 4; ++z) diff = std::max(diff, std::abs(mixed(z, x) - post(z, x)));
      if (diff > 1e-9) CHECK(tightness_gap(x, mixed, t.p, t.prior) > 1e-12);
    }
  }
}
