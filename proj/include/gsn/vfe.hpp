// SPDX-License-Identifier: Apache-2.0
//
// Variational free energy
//   F(x) = -E_{q(z|y)} log p(x|z) + KL(q(z|y) || p*(z)),   F(x) >= -log p(x; p*)
// with y = x for an auto-encoder and y drawn from another space for a
// transcoder. The continuous estimators are reparameterized and stay on the
// tape; the discrete routines are exact sums over finite tables.

#pragma once

#include <cstddef>

#include "gsn/autodiff.hpp"
#include "gsn/exact.hpp"
#include "gsn/nets.hpp"
#include "gsn/rng.hpp"
#include "gsn/sgsn.hpp"

namespace gsn {

struct VfeBreakdown {
  double reconstruction = 0.0;
  double kl = 0.0;
  double total = 0.0;
};

/// Differentiable batch-mean terms; total = reconstruction + kl.
struct VfeTerms {
  ad::Var reconstruction;
  ad::Var kl;
  ad::Var total;

  VfeBreakdown values() const;
};

/// Inference network over Y and generative network over X, both bound to a tape.
struct Transcoder {
  const Mlp& encoder;
  const Mlp::Bound& encoder_vars;
  const Mlp& decoder;
  const Mlp::Bound& decoder_vars;
  DecoderFamily family;
};

Transcoder as_transcoder(const SimpleGsn& g, const SimpleGsn::Bound& bound);

/// q conditions on y, the reconstruction target is x. Noise is drawn as one
/// n x k block per sample.
VfeTerms vfe_transcode(const Transcoder& model, ad::Var x, ad::Var y, std::size_t n_samples, NoiseSource& noise);

/// Auto-encoding case, y = x.
VfeTerms vfe_mc(const SimpleGsn& g, const SimpleGsn::Bound& bound, ad::Var x, std::size_t n_samples,
                NoiseSource& noise);
VfeBreakdown vfe_mc(const SimpleGsn& g, const Tensor& x, std::size_t n_samples, NoiseSource& noise);

// ---- exact discrete forms ---------------------------------------------------
// Q is q(z | x) with z as outcome; P is p(x | z) with x as outcome.

/// p(x; p*) = sum_z P(x | z) prior(z).
exact::Dist marginal_exact(const exact::CondTable& reconstruction, const exact::Dist& prior);

/// Exact F(x) with the convention 0 log 0 = 0.
VfeBreakdown vfe_exact_discrete(std::size_t x, const exact::CondTable& corruption,
                                const exact::CondTable& reconstruction, const exact::Dist& prior);

/// KL(Q(. | x) || p(z | x; p*)), computed from the derived posterior directly.
double tightness_gap(std::size_t x, const exact::CondTable& corruption, const exact::CondTable& reconstruction,
                     const exact::Dist& prior);

}  // namespace gsn
