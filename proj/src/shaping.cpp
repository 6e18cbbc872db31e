// SPDX-License-Identifier: Apache-2.0

#include "gsn/shaping.hpp"

#include <algorithm>
#include <cmath>

#include "gsn/error.hpp"
#include "gsn/rng.hpp"

namespace gsn {

// ---- Guide ------------------------------------------------------------------

Guide Guide::init(std::size_t data_dim, std::vector<std::size_t> hidden, std::uint64_t seed) {
  std::vector<std::size_t> widths{data_dim};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(1);
  return Guide(Mlp::init(std::move(widths), seed));
}

Guide::Guide(Mlp net) : net_(std::move(net)) {
  if (net_.out_width() != 1) throw ShapeError("guide network must output one value per row");
}

ad::Var Guide::scores(const Mlp::Bound& bound, ad::Var x) const { return net_.forward(bound, x); }

std::vector<double> Guide::scores(const Tensor& x) const {
  const Tensor f = net_.forward(x);
  return f.storage();
}

// ---- losses -----------------------------------------------------------------

ad::Var binomial_deviance(ad::Var f) { return ad::softplus(ad::neg(f)); }

double binomial_deviance(double f) { return ad::softplus(-f); }

ad::Var loss_f(const Guide& guide, const Mlp::Bound& guide_vars, ad::Var data_batch, ad::Var gen_batch) {
  if (data_batch.shape().size() != 2 || gen_batch.shape().size() != 2 ||
      data_batch.shape()[1] != gen_batch.shape()[1]) {
    throw ShapeError("loss_f: data batch " + to_string(data_batch.shape()) + " and generated batch " +
                     to_string(gen_batch.shape()) + " must share a width");
  }
  ad::Tape& tape = *data_batch.tape();
  const ad::Var gen = tape.constant(gen_batch.value());
  const ad::Var on_data = ad::mean(binomial_deviance(guide.scores(guide_vars, data_batch)));
  // b(-f) = softplus(f)
  const ad::Var on_gen = ad::mean(ad::softplus(guide.scores(guide_vars, gen)));
  return ad::add(on_data, on_gen);
}

ad::Var loss_g(const Guide& guide, const Mlp::Bound& guide_vars, ad::Var gen_batch) {
  return ad::mean(ad::relu(ad::neg(guide.scores(guide_vars, gen_batch))));
}

ad::Var moment_match_loss(ad::Var gen_batch, const Tensor& data_mean, const Tensor& data_cov) {
  if (gen_batch.shape().size() != 2) throw ShapeError("moment_match_loss: batch must be a matrix");
  const std::size_t n = gen_batch.shape()[0], d = gen_batch.shape()[1];
  if (n < 2) throw InvalidArgument("moment_match_loss: need at least two samples for a covariance");
  if (data_mean.shape() != Shape{d} || data_cov.shape() != Shape{d, d}) {
    throw ShapeError("moment_match_loss: statistics " + to_string(data_mean.shape()) + ", " +
                     to_string(data_cov.shape()) + " do not match width " + std::to_string(d));
  }
  ad::Tape& tape = *gen_batch.tape();
  const ad::Var mu = ad::col_mean(gen_batch);
  const ad::Var centered = ad::add_row(gen_batch, ad::neg(mu));
  const ad::Var cov =
      ad::scale(ad::matmul(ad::transpose(centered), centered), 1.0 / static_cast<double>(n - 1));
  const ad::Var mean_term = ad::sum(ad::square(ad::sub(mu, tape.constant(data_mean))));
  const ad::Var cov_term = ad::sum(ad::square(ad::sub(cov, tape.constant(data_cov))));
  return ad::add(mean_term, cov_term);
}

// ---- exact forms ------------------------------------------------------------

namespace {

void require_same_size(const char* op, std::size_t a, std::size_t b) {
  if (a != b) throw ShapeError(std::string(op) + ": dimension mismatch " + std::to_string(a) + " vs " + std::to_string(b));
}

exact::Dist softmax(std::span<const double> logits) {
  const double top = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp(logits[i] - top);
    s += p[i];
  }
  for (auto& v : p) v /= s;
  return exact::Dist(std::move(p));
}

}  // namespace

std::vector<double> optimal_guide_discrete(const exact::Dist& target, const exact::Dist& generator) {
  require_same_size("optimal_guide_discrete", target.size(), generator.size());
  std::vector<double> f(target.size(), 0.0);
  for (std::size_t x = 0; x < f.size(); ++x) {
    const bool in_d = target[x] > 0.0, in_g = generator[x] > 0.0;
    if (in_d != in_g) throw InvalidArgument("optimal_guide_discrete: supports differ at state " + std::to_string(x));
    if (in_d) f[x] = std::log(target[x] / generator[x]);
  }
  return f;
}

double loss_f_exact(std::span<const double> f, const exact::Dist& target, const exact::Dist& generator) {
  require_same_size("loss_f_exact", f.size(), target.size());
  require_same_size("loss_f_exact", f.size(), generator.size());
  double s = 0.0;
  for (std::size_t x = 0; x < f.size(); ++x) {
    s += target[x] * binomial_deviance(f[x]) + generator[x] * binomial_deviance(-f[x]);
  }
  return s;
}

double loss_g_exact(std::span<const double> f, const exact::Dist& generator) {
  require_same_size("loss_g_exact", f.size(), generator.size());
  double s = 0.0;
  for (std::size_t x = 0; x < f.size(); ++x) s += generator[x] * std::max(0.0, -f[x]);
  return s;
}

std::vector<double> minimize_loss_f_exact(const exact::Dist& target, const exact::Dist& generator, double tolerance) {
  require_same_size("minimize_loss_f_exact", target.size(), generator.size());
  std::vector<double> f(target.size(), 0.0);
  for (std::size_t x = 0; x < f.size(); ++x) {
    const double d = target[x], g = generator[x];
    if (d == 0.0 && g == 0.0) continue;
    if (d == 0.0 || g == 0.0) throw InvalidArgument("minimize_loss_f_exact: no finite minimizer at state " + std::to_string(x));
    double t = 0.0;
    for (int it = 0; it < 200; ++it) {
      // d/dt [d b(t) + g b(-t)] = -d sigmoid(-t) + g sigmoid(t)
      const double s = ad::sigmoid(t);
      const double grad = -d * (1.0 - s) + g * s;
      const double hess = (d + g) * s * (1.0 - s);
      double delta = grad / hess;
      delta = std::clamp(delta, -1.0, 1.0);
      t -= delta;
      if (std::abs(delta) < tolerance) break;
    }
    f[x] = t;
  }
  return f;
}

exact::Dist GenDist::probs() const {
  if (logits.empty()) throw InvalidArgument("GenDist: no states");
  return softmax(logits);
}

std::vector<double> loss_g_logit_gradient(const exact::Dist& generator, std::span<const double> f) {
  require_same_size("loss_g_logit_gradient", generator.size(), f.size());
  double mean_r = 0.0;
  std::vector<double> r(f.size());
  for (std::size_t x = 0; x < f.size(); ++x) {
    r[x] = f[x] < 0.0 ? -f[x] : 0.0;
    mean_r += generator[x] * r[x];
  }
  std::vector<double> grad(f.size());
  for (std::size_t j = 0; j < f.size(); ++j) grad[j] = generator[j] * (r[j] - mean_r);
  return grad;
}

CollaborativeRun collaborative_descent(const exact::Dist& target, GenDist init, std::size_t iterations, double step) {
  if (!(step > 0.0)) throw InvalidArgument("collaborative_descent: step must be positive");
  require_same_size("collaborative_descent", target.size(), init.logits.size());
  for (std::size_t x = 0; x < target.size(); ++x) {
    if (!(target[x] > 0.0)) throw InvalidArgument("collaborative_descent: target needs full support");
  }

  CollaborativeRun run;
  {
    const auto f_star = optimal_guide_discrete(target, target);
    const auto g = loss_g_logit_gradient(target, f_star);
    for (double v : g) run.fixed_point_gradient = std::max(run.fixed_point_gradient, std::abs(v));
  }

  GenDist gen = std::move(init);
  run.initial_tv = exact::total_variation(gen.probs(), target);
  run.tv.reserve(iterations);
  for (std::size_t it = 0; it < iterations; ++it) {
    const exact::Dist g = gen.probs();
    const auto f = optimal_guide_discrete(target, g);
    const auto grad = loss_g_logit_gradient(g, f);
    for (std::size_t j = 0; j < grad.size(); ++j) gen.logits[j] -= step * grad[j];
    run.tv.push_back(exact::total_variation(gen.probs(), target));
  }
  run.final_tv = run.tv.empty() ? run.initial_tv : run.tv.back();
  return run;
}

CollaborativeRun verify_theorem3(const exact::Dist& target, std::size_t iterations, double step, std::uint64_t seed) {
  Stream rng = Stream(seed).split("theorem3-logits");
  GenDist init;
  init.logits.resize(target.size());
  for (auto& l : init.logits) l = rng.normal();
  return collaborative_descent(target, std::move(init), iterations, step);
}

}  // namespace gsn
