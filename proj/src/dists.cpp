// SPDX-License-Identifier: Apache-2.0

#include "gsn/dists.hpp"

#include <cmath>
#include <numbers>

#include "gsn/error.hpp"

namespace gsn {

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

void require_same(const char* op, ad::Var a, ad::Var b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
}

}  // namespace

ad::Var gauss_log_prob(ad::Var x, const DiagGaussian& d) {
  require_same("gauss_log_prob", x, d.mean);
  require_same("gauss_log_prob", d.mean, d.logvar);
  // -(x - mu)^2 / (2 var) - logvar / 2 - log(2 pi) / 2, summed per row.
  const ad::Var sq = ad::square(ad::sub(x, d.mean));
  const ad::Var quad = ad::mul(sq, ad::exp(ad::neg(d.logvar)));
  const ad::Var per = ad::add_scalar(ad::scale(ad::add(quad, d.logvar), -0.5), -kHalfLog2Pi);
  return ad::row_sum(per);
}

ad::Var gauss_sample_reparam(const DiagGaussian& d, ad::Var noise) {
  require_same("gauss_sample_reparam", d.mean, noise);
  require_same("gauss_sample_reparam", d.mean, d.logvar);
  return ad::add(d.mean, ad::mul(ad::exp(ad::scale(d.logvar, 0.5)), noise));
}

ad::Var kl_gauss_to_std(const DiagGaussian& d) {
  require_same("kl_gauss_to_std", d.mean, d.logvar);
  const ad::Var inner = ad::sub(ad::add(ad::square(d.mean), ad::exp(d.logvar)), ad::add_scalar(d.logvar, 1.0));
  return ad::scale(ad::row_sum(inner), 0.5);
}

ad::Var bern_log_prob(ad::Var x, const BernoulliVec& d) {
  require_same("bern_log_prob", x, d.logits);
  for (double v : x.value().values()) {
    if (v != 0.0 && v != 1.0) throw InvalidArgument("bern_log_prob: observation " + std::to_string(v) + " not in {0,1}");
  }
  return ad::row_sum(ad::sub(ad::mul(x, d.logits), ad::softplus(d.logits)));
}

ad::Var std_prior_log_prob(ad::Var z, const StdPrior& prior) {
  if (z.shape().size() != 2 || z.shape()[1] != prior.dim) {
    throw ShapeError("std_prior_log_prob: latent " + to_string(z.shape()) + " vs prior dim " +
                     std::to_string(prior.dim));
  }
  return ad::row_sum(ad::add_scalar(ad::scale(ad::square(z), -0.5), -kHalfLog2Pi));
}

}  // namespace gsn
