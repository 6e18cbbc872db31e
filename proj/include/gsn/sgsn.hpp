// SPDX-License-Identifier: Apache-2.0
//
// Simple GSN: corruption q(z|x) conditions on the current observation only,
// reconstruction p(x|z) maps latents back, p*(z) is a standard normal. One
// chain transition draws z ~ q(z|x_t) and then x_{t+1} ~ p(x|z), both through
// caller-supplied noise so every trajectory is reproducible and replayable.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "gsn/autodiff.hpp"
#include "gsn/dists.hpp"
#include "gsn/nets.hpp"
#include "gsn/rng.hpp"

namespace gsn {

enum class DecoderFamily { gaussian, bernoulli };

struct GsnLayout {
  std::size_t data_dim = 2;
  std::size_t latent_dim = 2;
  std::vector<std::size_t> encoder_hidden{32, 32};
  std::vector<std::size_t> decoder_hidden{32, 32};
  DecoderFamily decoder = DecoderFamily::gaussian;
};

/// Reconstruction distribution over X; exactly one member is meaningful.
struct ObservationDist {
  DecoderFamily family;
  DiagGaussian gaussian;
  BernoulliVec bernoulli;
};

/// Per-row log p(x | z).
ad::Var observation_log_prob(ad::Var x, const ObservationDist& d);

class SimpleGsn {
 public:
  static SimpleGsn init(const GsnLayout& layout, std::uint64_t seed);
  static SimpleGsn zeros(const GsnLayout& layout);
  /// Encoder maps X to 2k outputs; decoder maps k latents to 2d (Gaussian)
  /// or d (Bernoulli) outputs.
  SimpleGsn(Mlp encoder, Mlp decoder, DecoderFamily family);

  std::size_t data_dim() const { return encoder_.in_width(); }
  std::size_t latent_dim() const { return decoder_.in_width(); }
  DecoderFamily decoder_family() const { return family_; }
  StdPrior prior() const { return {latent_dim()}; }

  const Mlp& encoder() const { return encoder_; }
  const Mlp& decoder() const { return decoder_; }

  struct Bound {
    Mlp::Bound encoder;
    Mlp::Bound decoder;
  };
  Bound bind(ad::Tape& tape, bool trainable = true) const;
  /// Encoder layer tensors followed by decoder layer tensors.
  std::vector<Tensor> layer_tensors() const;
  Bound bound_from(std::span<const ad::Var> vars) const;

  /// q(z | x); depends on x alone.
  DiagGaussian encode(const Bound& bound, ad::Var x) const;
  /// p(x | z).
  ObservationDist decode(const Bound& bound, ad::Var z) const;

  /// Encoder parameters as "enc.*", decoder as "dec.*".
  ParamStore parameters() const;
  void set_parameters(const ParamStore& params);
  ParamStore gradients(const Bound& bound, const ad::Gradients& grads) const;

  bool operator==(const SimpleGsn&) const = default;

 private:
  Mlp encoder_;
  Mlp decoder_;
  DecoderFamily family_;
};

/// Draws x from p(x|z) with standard-normal noise. Gaussian decoders are
/// reparameterized; Bernoulli decoders threshold Phi(noise) against the mean
/// and the result carries no gradient.
ad::Var sample_observation(const ObservationDist& d, ad::Var noise);

struct Transition {
  DiagGaussian posterior;        // q(z | x_t)
  ad::Var z;                     // z_{t+1}
  ObservationDist reconstruction;  // p(x | z_{t+1})
  ad::Var x_next;
};

Transition transition_sample(const SimpleGsn& g, const SimpleGsn::Bound& bound, ad::Var x,
                             const Tensor& noise_z, const Tensor& noise_x);

/// x_0 .. x_T with z_1 .. z_T, all still on the tape for BPTT.
struct Trajectory {
  std::vector<ad::Var> states;
  std::vector<ad::Var> latents;
  std::vector<DiagGaussian> posteriors;
  std::vector<ObservationDist> reconstructions;
  std::vector<Tensor> noise_z;
  std::vector<Tensor> noise_x;

  std::size_t length() const { return latents.size(); }
};

/// Applies transition_sample T >= 1 times, drawing noise z then x per step.
Trajectory unroll_chain(const SimpleGsn& g, const SimpleGsn::Bound& bound, ad::Var x0, std::size_t steps,
                        NoiseSource& noise);

/// Value-only chain from frozen parameters: returns x_0 .. x_T.
std::vector<Tensor> sample_chain(const SimpleGsn& g, const Tensor& x0, std::size_t steps, NoiseSource& noise);

/// Training pairs (x, z_hat) collected by the walkback wrapper.
struct WalkbackPairs {
  std::vector<std::pair<Tensor, Tensor>> pairs;
};

/// Walkback as a loop over burn-in then roll-out. The burn-in and roll-out
/// draw from separate children of `rng`, and since q ignores z_hat the
/// roll-out pairs are identical for every k_burn_in. z_hat starts at zero.
WalkbackPairs walkback_pairs(const SimpleGsn& g, const Tensor& x, std::size_t k_burn_in, std::size_t k_roll_out,
                             const Stream& rng);

}  // namespace gsn
