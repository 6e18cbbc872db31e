// SPDX-License-Identifier: Apache-2.0
//
// Collaborative shaping. The guide f minimizes the equal-prior logistic loss
//   L_f = E_D[b(f(x))] + E_G[b(-f(x))],   b(f) = log(1 + e^-f),
// whose optimum is f = log D/G. The generator minimizes
//   L_g = E_G[max(0, -f(x))],
// which moves only mass sitting where f < 0 (over-dense regions). Both are
// jointly at their minimum exactly when G = D and f = 0.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "gsn/autodiff.hpp"
#include "gsn/exact.hpp"
#include "gsn/nets.hpp"

namespace gsn {

/// Scalar network f(x) over observations.
class Guide {
 public:
  static Guide init(std::size_t data_dim, std::vector<std::size_t> hidden, std::uint64_t seed);
  explicit Guide(Mlp net);

  const Mlp& net() const noexcept { return net_; }
  Mlp& net() noexcept { return net_; }

  /// n x 1 scores on the tape.
  ad::Var scores(const Mlp::Bound& bound, ad::Var x) const;
  /// Value-only scores, one per row.
  std::vector<double> scores(const Tensor& x) const;

  bool operator==(const Guide&) const = default;

 private:
  Mlp net_;
};

/// b(f) = softplus(-f), elementwise.
ad::Var binomial_deviance(ad::Var f);
double binomial_deviance(double f);

/// Guide objective on one data batch and one generated batch. The generated
/// batch enters as a constant; gradients reach only the guide.
ad::Var loss_f(const Guide& guide, const Mlp::Bound& guide_vars, ad::Var data_batch, ad::Var gen_batch);

/// Generator objective. Bind the guide frozen; gradients flow through the
/// generated samples into whatever produced them.
ad::Var loss_g(const Guide& guide, const Mlp::Bound& guide_vars, ad::Var gen_batch);

/// ||mean(gen) - mean||^2 + ||cov(gen) - cov||_F^2 with the unbiased
/// covariance; needs at least two rows.
ad::Var moment_match_loss(ad::Var gen_batch, const Tensor& data_mean, const Tensor& data_cov);

// ---- exact finite-space forms -----------------------------------------------

/// f*(x) = log(D(x) / G(x)); D and G must share support. Entries outside the
/// common support are 0.
std::vector<double> optimal_guide_discrete(const exact::Dist& target, const exact::Dist& generator);

double loss_f_exact(std::span<const double> f, const exact::Dist& target, const exact::Dist& generator);
double loss_g_exact(std::span<const double> f, const exact::Dist& generator);

/// Minimizes loss_f_exact over unconstrained f with a damped Newton solve
/// (the objective separates across states).
std::vector<double> minimize_loss_f_exact(const exact::Dist& target, const exact::Dist& generator,
                                          double tolerance = 1e-13);

/// Softmax-parameterized finite generator.
struct GenDist {
  std::vector<double> logits;
  exact::Dist probs() const;
};

/// d loss_g_exact / d logits with f held fixed, at generator probabilities g.
std::vector<double> loss_g_logit_gradient(const exact::Dist& generator, std::span<const double> f);

struct CollaborativeRun {
  std::vector<double> tv;  // TV(G, D) after each iteration
  double initial_tv = 0.0;
  double final_tv = 0.0;
  /// max |grad| of loss_g at G = D with f = f*(D, D); exactly 0.
  double fixed_point_gradient = 0.0;
};

/// Alternates: f <- f*(D, G) exactly, then one gradient step on loss_g with
/// respect to the logits. Starts from `init`.
CollaborativeRun collaborative_descent(const exact::Dist& target, GenDist init, std::size_t iterations, double step);

/// Same, from logits drawn N(0, 1) with `seed`.
CollaborativeRun verify_theorem3(const exact::Dist& target, std::size_t iterations, double step, std::uint64_t seed);

}  // namespace gsn
