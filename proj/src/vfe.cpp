// SPDX-License-Identifier: Apache-2.0

#include "gsn/vfe.hpp"

#include <cmath>

#include "gsn/dists.hpp"
#include "gsn/error.hpp"

namespace gsn {

VfeBreakdown VfeTerms::values() const {
  return {reconstruction.value().item(), kl.value().item(), total.value().item()};
}

Transcoder as_transcoder(const SimpleGsn& g, const SimpleGsn::Bound& bound) {
  return {g.encoder(), bound.encoder, g.decoder(), bound.decoder, g.decoder_family()};
}

VfeTerms vfe_transcode(const Transcoder& model, ad::Var x, ad::Var y, std::size_t n_samples, NoiseSource& noise) {
  if (n_samples < 1) throw InvalidArgument("vfe: n_samples must be at least 1");
  if (x.shape().size() != 2 || y.shape().size() != 2 || x.shape()[0] != y.shape()[0]) {
    throw ShapeError("vfe_transcode: x " + to_string(x.shape()) + " and y " + to_string(y.shape()) +
                     " must be matrices with equal row counts");
  }
  const std::size_t want_x = model.family == DecoderFamily::gaussian ? model.decoder.out_width() / 2
                                                                      : model.decoder.out_width();
  if (x.shape()[1] != want_x) {
    throw ShapeError("vfe_transcode: target " + to_string(x.shape()) + " vs decoder over " +
                     std::to_string(want_x) + " coordinates");
  }
  ad::Tape& tape = *x.tape();
  const std::size_t n = y.shape()[0];

  const DiagGaussian q = to_diag_gaussian(gaussian_head(model.encoder, model.encoder_vars, y));
  const std::size_t k = q.mean.shape()[1];

  ad::Var recon;
  for (std::size_t s = 0; s < n_samples; ++s) {
    const ad::Var z = gauss_sample_reparam(q, tape.constant(noise.draw(n, k)));
    ObservationDist p{model.family, {}, {}};
    const ad::Var raw = model.decoder.forward(model.decoder_vars, z);
    if (model.family == DecoderFamily::gaussian) {
      p.gaussian = to_diag_gaussian(gaussian_head(raw));
    } else {
      p.bernoulli = {raw};
    }
    const ad::Var nll = ad::neg(ad::mean(observation_log_prob(x, p)));
    recon = s == 0 ? nll : ad::add(recon, nll);
  }
  if (n_samples > 1) recon = ad::scale(recon, 1.0 / static_cast<double>(n_samples));
  const ad::Var kl = ad::mean(kl_gauss_to_std(q));
  return {recon, kl, ad::add(recon, kl)};
}

VfeTerms vfe_mc(const SimpleGsn& g, const SimpleGsn::Bound& bound, ad::Var x, std::size_t n_samples,
                NoiseSource& noise) {
  return vfe_transcode(as_transcoder(g, bound), x, x, n_samples, noise);
}

VfeBreakdown vfe_mc(const SimpleGsn& g, const Tensor& x, std::size_t n_samples, NoiseSource& noise) {
  ad::Tape tape;
  const auto bound = g.bind(tape, false);
  return vfe_mc(g, bound, tape.constant(x), n_samples, noise).values();
}

// ---- exact discrete ---------------------------------------------------------

namespace {

void check_triple(std::size_t x, const exact::CondTable& q, const exact::CondTable& p, const exact::Dist& prior) {
  if (q.outcomes() != p.conditions() || q.conditions() != p.outcomes() || prior.size() != q.outcomes()) {
    throw ShapeError("discrete VFE: Q, P and prior dimensions disagree");
  }
  if (x >= q.conditions()) throw InvalidArgument("discrete VFE: state " + std::to_string(x) + " out of range");
  for (std::size_t z = 0; z < q.outcomes(); ++z) {
    if (q(z, x) > 0.0 && (p(x, z) <= 0.0 || prior[z] <= 0.0)) {
      throw InvalidArgument("discrete VFE: q(z=" + std::to_string(z) + "|x=" + std::to_string(x) +
                            ") > 0 outside the support of p(x|z) p*(z)");
    }
  }
}

}  // namespace

exact::Dist marginal_exact(const exact::CondTable& reconstruction, const exact::Dist& prior) {
  if (reconstruction.conditions() != prior.size()) {
    throw ShapeError("marginal_exact: P conditions on " + std::to_string(reconstruction.conditions()) +
                     " latents, prior has " + std::to_string(prior.size()));
  }
  std::vector<double> m(reconstruction.outcomes(), 0.0);
  for (std::size_t x = 0; x < m.size(); ++x)
    for (std::size_t z = 0; z < prior.size(); ++z) m[x] += reconstruction(x, z) * prior[z];
  return exact::Dist(std::move(m));
}

VfeBreakdown vfe_exact_discrete(std::size_t x, const exact::CondTable& corruption,
                                const exact::CondTable& reconstruction, const exact::Dist& prior) {
  check_triple(x, corruption, reconstruction, prior);
  VfeBreakdown out;
  for (std::size_t z = 0; z < corruption.outcomes(); ++z) {
    const double qz = corruption(z, x);
    if (qz == 0.0) continue;
    out.reconstruction -= qz * std::log(reconstruction(x, z));
    out.kl += qz * std::log(qz / prior[z]);
  }
  out.total = out.reconstruction + out.kl;
  return out;
}

double tightness_gap(std::size_t x, const exact::CondTable& corruption, const exact::CondTable& reconstruction,
                     const exact::Dist& prior) {
  check_triple(x, corruption, reconstruction, prior);
  const std::size_t nz = prior.size();
  std::vector<double> post(nz);
  double evidence = 0.0;
  for (std::size_t z = 0; z < nz; ++z) {
    post[z] = reconstruction(x, z) * prior[z];
    evidence += post[z];
  }
  double gap = 0.0;
  for (std::size_t z = 0; z < nz; ++z) {
    const double qz = corruption(z, x);
    if (qz == 0.0) continue;
    gap += qz * std::log(qz * evidence / post[z]);
  }
  return gap;
}

}  // namespace gsn
