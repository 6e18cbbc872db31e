// SPDX-License-Identifier: Apache-2.0

#include "gsn/suites.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "gsn/data.hpp"
#include "gsn/dists.hpp"
#include "gsn/error.hpp"
#include "gsn/exact.hpp"
#include "gsn/sgsn.hpp"
#include "gsn/shaping.hpp"
#include "gsn/train.hpp"
#include "gsn/vfe.hpp"

namespace gsn {

bool SuiteReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.pass; });
}

const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names{"theorem1", "corollary2", "theorem3", "vfe-bound",
                                              "gradcheck", "deviance", "walkback"};
  return names;
}

namespace {

void below(SuiteReport& r, std::string check, double value, double tol) {
  r.checks.push_back({std::move(check), format_real(value), "< " + format_shortest(tol), value < tol});
}

void at_least(SuiteReport& r, std::string check, double value, double bound) {
  r.checks.push_back({std::move(check), format_real(value), ">= " + format_shortest(bound), value >= bound});
}

void expect(SuiteReport& r, std::string check, std::string value, std::string expected, bool pass) {
  r.checks.push_back({std::move(check), std::move(value), std::move(expected), pass});
}

std::uint64_t case_seed(std::uint64_t seed, std::string_view suite, std::uint64_t i) {
  return Stream(seed).split(suite).split(i).key();
}

// ---- theorem1 ---------------------------------------------------------------

SuiteReport theorem1(std::uint64_t seed) {
  SuiteReport r{"theorem1", {}};
  for (std::uint64_t i = 0; i < 20; ++i) {
    const std::uint64_t s = case_seed(seed, "theorem1", i);
    const exact::Dist d = random_discrete_target(5, 1.0, s);
    Stream rng = Stream(s).split("corruption");
    const exact::CondTable q = exact::CondTable::random(4, 5, rng);
    below(r, "pair " + std::to_string(i) + " stationary residual", exact::verify_theorem1(d, q), 1e-10);
  }
  return r;
}

// ---- corollary2 -------------------------------------------------------------

SuiteReport corollary2(std::uint64_t seed) {
  SuiteReport r{"corollary2", {}};
  auto verdict_row = [&](std::string check, const exact::TransitionMatrix& t, exact::ChainClass want,
                         std::string expected, std::size_t period = 1) {
    const auto v = exact::is_ergodic(t);
    const bool ok = v.kind == want && (want != exact::ChainClass::periodic || v.period == period) &&
                    (want != exact::ChainClass::reducible || v.from != v.to);
    expect(r, std::move(check), v.describe(), std::move(expected), ok);
  };
  verdict_row("identity 3x3", exact::TransitionMatrix(exact::CondTable::identity(3)), exact::ChainClass::reducible,
              "reducible");
  const exact::TransitionMatrix cycle(exact::CondTable(2, 2, {0.0, 1.0, 1.0, 0.0}));
  verdict_row("2-cycle", cycle, exact::ChainClass::periodic, "periodic, period 2", 2);
  Stream rng = Stream(seed).split("corollary2");
  const exact::TransitionMatrix full(exact::CondTable::random(5, 5, rng));
  verdict_row("full-support random 5x5", full, exact::ChainClass::ergodic, "ergodic");
  return r;
}

// ---- theorem3 ---------------------------------------------------------------

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double w = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) w = std::max(w, std::abs(a[i] - b[i]));
  return w;
}

SuiteReport theorem3(std::uint64_t seed) {
  SuiteReport r{"theorem3", {}};
  for (std::uint64_t i = 0; i < 10; ++i) {
    const std::uint64_t s = case_seed(seed, "theorem3", i);
    const exact::Dist d = random_discrete_target(8, 1.0, s);
    const exact::Dist g = random_discrete_target(8, 1.0, Stream(s).split("generator").key());
    const auto f_min = minimize_loss_f_exact(d, g);
    const auto f_star = optimal_guide_discrete(d, g);
    below(r, "pair " + std::to_string(i) + " argmin L_f vs log D/G", max_abs_diff(f_min, f_star), 1e-6);

    const double lg = loss_g_exact(f_star, g);
    const double gap = max_abs_diff(g.values(), d.values());
    expect(r, "pair " + std::to_string(i) + " L_g at f* with G != D", format_real(lg), "> 0",
           lg > 0.0 && gap >= 1e-12);
    const auto f_eq = optimal_guide_discrete(d, d);
    const double lg_eq = loss_g_exact(f_eq, d);
    expect(r, "pair " + std::to_string(i) + " L_g at f* with G = D", format_real(lg_eq), "== 0", lg_eq == 0.0);
    const auto grad = loss_g_logit_gradient(d, f_eq);
    double gmax = 0.0;
    for (double v : grad) gmax = std::max(gmax, std::abs(v));
    expect(r, "pair " + std::to_string(i) + " L_g gradient at G = D", format_real(gmax), "== 0", gmax == 0.0);
  }
  const exact::Dist d = random_discrete_target(8, 1.0, seed);
  const CollaborativeRun run = verify_theorem3(d, 5000, 0.05, seed);
  below(r, "collaborative descent final TV (5000 steps of 0.05)", run.final_tv, 0.05);
  return r;
}

// ---- vfe-bound --------------------------------------------------------------

SuiteReport vfe_bound(std::uint64_t seed) {
  SuiteReport r{"vfe-bound", {}};
  constexpr std::size_t kX = 5, kZ = 4;
  double worst_bound = std::numeric_limits<double>::infinity();
  double worst_tight = 0.0, worst_identity = 0.0;
  for (std::uint64_t i = 0; i < 50; ++i) {
    const std::uint64_t s = case_seed(seed, "vfe-bound", i);
    Stream rng(s);
    Stream rq = rng.split("q"), rp = rng.split("p");
    const exact::CondTable q = exact::CondTable::random(kZ, kX, rq);
    const exact::CondTable p = exact::CondTable::random(kX, kZ, rp);
    const exact::Dist prior = random_discrete_target(kZ, 1.0, rng.split("prior").key());
    const exact::Dist marginal = marginal_exact(p, prior);
    const exact::CondTable post = exact::exact_posterior(prior, p);
    for (std::size_t x = 0; x < kX; ++x) {
      const double log_px = std::log(marginal[x]);
      const double f = vfe_exact_discrete(x, q, p, prior).total;
      worst_bound = std::min(worst_bound, f + log_px);
      const double f_post = vfe_exact_discrete(x, post, p, prior).total;
      worst_tight = std::max(worst_tight, std::abs(f_post + log_px));
      worst_identity = std::max(worst_identity, std::abs(tightness_gap(x, q, p, prior) - (f + log_px)));
    }
  }
  at_least(r, "min over triples and x of F(x) + log p(x)", worst_bound, -1e-12);
  below(r, "max |F + log p| with Q = exact posterior", worst_tight, 1e-12);
  below(r, "max |KL(Q || posterior) - (F + log p)|", worst_identity, 1e-12);
  return r;
}

// ---- gradcheck --------------------------------------------------------------

constexpr double kFdStep = 1e-5;

SuiteReport gradcheck(std::uint64_t seed) {
  SuiteReport r{"gradcheck", {}};
  Stream root = Stream(seed).split("gradcheck");

  {
    const Mlp net = Mlp::init({3, 5, 2}, root.split("mlp").key());
    Stream rx = root.split("mlp-x");
    const Tensor x = rx.normal(4, 3);
    const ad::ScalarFn f = [&](ad::Tape& tape, std::span<const ad::Var> leaves) {
      const auto bound = net.bound_from(leaves);
      return ad::mean(ad::square(ad::tanh(net.forward(bound, tape.constant(x)))));
    };
    const auto leaves = net.layer_tensors();
    below(r, "mlp scalar loss", ad::grad_check(f, leaves, kFdStep), 1e-4);
  }

  {
    const GsnLayout layout{2, 2, {4}, {4}, DecoderFamily::gaussian};
    const SimpleGsn g = SimpleGsn::init(layout, root.split("chain-gsn").key());
    const Guide guide = Guide::init(2, {4}, root.split("chain-guide").key());
    TrainConfig cfg;
    cfg.unroll = 2;
    cfg.lambda_mm = 0.5;
    cfg.vfe_through_chain = true;
    Stream rx = root.split("chain-x");
    const Tensor x = rx.normal(4, 2);
    Stream rn = root.split("chain-noise");
    std::vector<Tensor> noise;
    for (std::size_t t = 0; t < cfg.unroll; ++t) {
      noise.push_back(rn.normal(4, 2));
      noise.push_back(rn.normal(4, 2));
    }
    const Dataset stats_src(rx.normal(16, 2));
    const DataStats stats{stats_src.mean(), stats_src.covariance()};
    const ad::ScalarFn f = [&](ad::Tape& tape, std::span<const ad::Var> leaves) {
      const auto bound = g.bound_from(leaves);
      const auto guide_vars = guide.net().bind(tape, false);
      ReplayNoise replay(noise);
      return generator_objective(g, bound, guide, guide_vars, tape.constant(x), stats, cfg, replay).total;
    };
    const auto leaves = g.layer_tensors();
    below(r, "T = 2 chain objective (BPTT)", ad::grad_check(f, leaves, kFdStep), 1e-4);
  }

  {
    const Guide guide = Guide::init(2, {5}, root.split("lf-guide").key());
    Stream rx = root.split("lf-x");
    const Tensor data = rx.normal(6, 2);
    const Tensor gen = rx.normal(6, 2);
    const ad::ScalarFn lf = [&](ad::Tape& tape, std::span<const ad::Var> leaves) {
      return loss_f(guide, guide.net().bound_from(leaves), tape.constant(data), tape.constant(gen));
    };
    below(r, "L_f wrt guide parameters", ad::grad_check(lf, guide.net().layer_tensors(), kFdStep), 1e-4);

    const ad::ScalarFn lg = [&](ad::Tape& tape, std::span<const ad::Var> leaves) {
      return loss_g(guide, guide.net().bind(tape, false), leaves[0]);
    };
    const std::vector<Tensor> gen_leaf{gen};
    below(r, "L_g wrt generated samples", ad::grad_check(lg, gen_leaf, kFdStep), 1e-4);
  }
  return r;
}

// ---- deviance ---------------------------------------------------------------

SuiteReport deviance(std::uint64_t) {
  SuiteReport r{"deviance", {}};
  const double b0 = binomial_deviance(0.0);
  r.checks.push_back({"b(0)", format_real(b0), "ln 2 within 1e-15", std::abs(b0 - std::numbers::ln2) <= 1e-15});
  double worst = 0.0;
  for (int i = 0; i <= 6000; ++i) {
    const double f = -30.0 + 0.01 * i;
    worst = std::max(worst, std::abs(binomial_deviance(-f) - binomial_deviance(f) - f));
  }
  below(r, "max |b(-f) - b(f) - f| on [-30, 30]", worst, 1e-12);
  const double big_pos = binomial_deviance(1e6), big_neg = binomial_deviance(-1e6);
  expect(r, "b(1e6) finite", format_real(big_pos), "finite, >= 0", std::isfinite(big_pos) && big_pos >= 0.0);
  expect(r, "b(-1e6) finite", format_real(big_neg), "1e6", std::isfinite(big_neg) && big_neg == 1e6);
  return r;
}

// ---- walkback ---------------------------------------------------------------

SuiteReport walkback(std::uint64_t seed) {
  SuiteReport r{"walkback", {}};
  const SimpleGsn g = SimpleGsn::init(GsnLayout{}, Stream(seed).split("walkback-model").key());
  Stream rx = Stream(seed).split("walkback-x");
  const Tensor x = rx.normal(8, 2);
  const Stream rng = Stream(seed).split("walkback-pairs");

  const auto none = walkback_pairs(g, x, 2, 0, rng);
  expect(r, "k_roll_out = 0 pair count", std::to_string(none.pairs.size()), "0", none.pairs.empty());

  const auto three = walkback_pairs(g, x, 2, 3, rng);
  const bool anchored =
      std::all_of(three.pairs.begin(), three.pairs.end(), [&](const auto& p) { return p.first == x; });
  expect(r, "k_roll_out = 3 pair count", std::to_string(three.pairs.size()), "3", three.pairs.size() == 3);
  expect(r, "k_roll_out = 3 pairs anchored to x", anchored ? "yes" : "no", "yes", anchored);

  bool identical = true;
  for (std::size_t burn : {0, 1, 5}) {
    const auto p = walkback_pairs(g, x, burn, 3, rng);
    for (std::size_t i = 0; i < p.pairs.size(); ++i) identical = identical && p.pairs[i] == three.pairs[i];
  }
  expect(r, "pairs identical for k_burn_in in {0, 1, 2, 5}", identical ? "yes" : "no", "yes", identical);

  constexpr std::size_t kDraws = 100000;
  Tensor point({kDraws, 2});
  for (std::size_t i = 0; i < kDraws; ++i) {
    point(i, 0) = x(0, 0);
    point(i, 1) = x(0, 1);
  }
  const auto one = walkback_pairs(g, point, 0, 1, rng);
  ad::Tape tape;
  const auto q = g.encode(g.bind(tape, false), tape.constant(Tensor({1, 2}, {x(0, 0), x(0, 1)})));
  double worst = 0.0;
  const Tensor& z = one.pairs.at(0).second;
  for (std::size_t k = 0; k < g.latent_dim(); ++k) {
    double m = 0.0, v = 0.0;
    for (std::size_t i = 0; i < kDraws; ++i) m += z(i, k);
    m /= kDraws;
    for (std::size_t i = 0; i < kDraws; ++i) v += (z(i, k) - m) * (z(i, k) - m);
    v /= kDraws - 1;
    worst = std::max(worst, std::abs(m - q.mean.value()(0, k)));
    worst = std::max(worst, std::abs(v - std::exp(q.logvar.value()(0, k))));
  }
  below(r, "k_roll_out = 1 latent mean/variance vs q(z|x), 1e5 draws", worst, 0.02);
  return r;
}

}  // namespace

SuiteReport run_suite(std::string_view name, std::uint64_t seed) {
  if (name == "theorem1") return theorem1(seed);
  if (name == "corollary2") return corollary2(seed);
  if (name == "theorem3") return theorem3(seed);
  if (name == "vfe-bound") return vfe_bound(seed);
  if (name == "gradcheck") return gradcheck(seed);
  if (name == "deviance") return deviance(seed);
  if (name == "walkback") return walkback(seed);
  throw InvalidArgument("unknown verification suite '" + std::string(name) + "'");
}

void write_report_csv(const std::filesystem::path& path, const SuiteReport& report) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  auto quote = [](const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
  };
  out << "check,value,tolerance,pass\n";
  for (const auto& c : report.checks) {
    out << quote(c.check) << ',' << quote(c.value) << ',' << quote(c.tolerance) << ',' << (c.pass ? "true" : "false")
        << '\n';
  }
  if (!out) throw IoError(path.string(), "write failed");
}

}  // namespace gsn
