// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>

#include "gsn/autodiff.hpp"
#include "gsn/nets.hpp"

namespace gsn {

/// Diagonal Gaussian over n rows of k coordinates.
struct DiagGaussian {
  ad::Var mean;
  ad::Var logvar;
};

/// Independent Bernoulli coordinates parameterized by logits.
struct BernoulliVec {
  ad::Var logits;
};

/// Isotropic standard normal prior over a k-dimensional latent space.
struct StdPrior {
  std::size_t dim;
};

inline DiagGaussian to_diag_gaussian(const GaussianParams& p) { return {p.mean, p.logvar}; }

/// Per-row log density, shape [n].
ad::Var gauss_log_prob(ad::Var x, const DiagGaussian& d);
/// mean + exp(logvar / 2) * noise. Noise comes from the caller.
ad::Var gauss_sample_reparam(const DiagGaussian& d, ad::Var noise);
/// Closed-form KL(d || N(0, I)) per row, shape [n].
ad::Var kl_gauss_to_std(const DiagGaussian& d);
/// Per-row log mass of binary x, computed as sum(x * l - softplus(l)).
/// Rejects entries of x outside {0, 1}.
ad::Var bern_log_prob(ad::Var x, const BernoulliVec& d);
/// Per-row log density under N(0, I).
ad::Var std_prior_log_prob(ad::Var z, const StdPrior& prior);

}  // namespace gsn
