// SPDX-License-Identifier: Apache-2.0

#include "gsn/sgsn.hpp"

#include <cmath>
#include <numbers>

#include "gsn/error.hpp"

namespace gsn {

namespace {

std::vector<std::size_t> chain_widths(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out) {
  std::vector<std::size_t> w{in};
  w.insert(w.end(), hidden.begin(), hidden.end());
  w.push_back(out);
  return w;
}

std::size_t decoder_out(const GsnLayout& layout) {
  return layout.decoder == DecoderFamily::gaussian ? 2 * layout.data_dim : layout.data_dim;
}

void require_width(const char* op, ad::Var v, std::size_t width) {
  if (v.shape().size() != 2 || v.shape()[1] != width) {
    throw ShapeError(std::string(op) + ": input " + to_string(v.shape()) + " needs " + std::to_string(width) +
                     " columns");
  }
}

}  // namespace

ad::Var observation_log_prob(ad::Var x, const ObservationDist& d) {
  return d.family == DecoderFamily::gaussian ? gauss_log_prob(x, d.gaussian) : bern_log_prob(x, d.bernoulli);
}

SimpleGsn SimpleGsn::init(const GsnLayout& layout, std::uint64_t seed) {
  const Stream root(seed);
  return SimpleGsn(
      Mlp::init(chain_widths(layout.data_dim, layout.encoder_hidden, 2 * layout.latent_dim), root.split("enc").next_u64()),
      Mlp::init(chain_widths(layout.latent_dim, layout.decoder_hidden, decoder_out(layout)),
                root.split("dec").next_u64()),
      layout.decoder);
}

SimpleGsn SimpleGsn::zeros(const GsnLayout& layout) {
  return SimpleGsn(Mlp::zeros(chain_widths(layout.data_dim, layout.encoder_hidden, 2 * layout.latent_dim)),
                   Mlp::zeros(chain_widths(layout.latent_dim, layout.decoder_hidden, decoder_out(layout))),
                   layout.decoder);
}

SimpleGsn::SimpleGsn(Mlp encoder, Mlp decoder, DecoderFamily family)
    : encoder_(std::move(encoder)), decoder_(std::move(decoder)), family_(family) {
  if (encoder_.out_width() % 2 != 0) throw ShapeError("encoder output width must be 2 * latent_dim");
  if (encoder_.out_width() / 2 != decoder_.in_width()) {
    throw ShapeError("decoder input width " + std::to_string(decoder_.in_width()) + " != latent dim " +
                     std::to_string(encoder_.out_width() / 2));
  }
  const std::size_t want = family_ == DecoderFamily::gaussian ? 2 * data_dim() : data_dim();
  if (decoder_.out_width() != want) {
    throw ShapeError("decoder output width " + std::to_string(decoder_.out_width()) + ", expected " +
                     std::to_string(want));
  }
}

SimpleGsn::Bound SimpleGsn::bind(ad::Tape& tape, bool trainable) const {
  return {encoder_.bind(tape, trainable), decoder_.bind(tape, trainable)};
}

std::vector<Tensor> SimpleGsn::layer_tensors() const {
  auto out = encoder_.layer_tensors();
  for (auto& t : decoder_.layer_tensors()) out.push_back(std::move(t));
  return out;
}

SimpleGsn::Bound SimpleGsn::bound_from(std::span<const ad::Var> vars) const {
  const std::size_t n_enc = 2 * encoder_.layers();
  if (vars.size() < n_enc) throw ShapeError("SimpleGsn::bound_from: too few variables");
  return {encoder_.bound_from(vars.first(n_enc)), decoder_.bound_from(vars.subspan(n_enc))};
}

DiagGaussian SimpleGsn::encode(const Bound& bound, ad::Var x) const {
  require_width("encode", x, data_dim());
  return to_diag_gaussian(gaussian_head(encoder_, bound.encoder, x));
}

ObservationDist SimpleGsn::decode(const Bound& bound, ad::Var z) const {
  require_width("decode", z, latent_dim());
  ObservationDist d{family_, {}, {}};
  if (family_ == DecoderFamily::gaussian) {
    d.gaussian = to_diag_gaussian(gaussian_head(decoder_, bound.decoder, z));
  } else {
    d.bernoulli = {decoder_.forward(bound.decoder, z)};
  }
  return d;
}

ParamStore SimpleGsn::parameters() const {
  ParamStore out;
  for (const auto& [name, t] : encoder_.params()) out.add("enc." + name, t);
  for (const auto& [name, t] : decoder_.params()) out.add("dec." + name, t);
  return out;
}

void SimpleGsn::set_parameters(const ParamStore& params) {
  if (params.size() != encoder_.params().size() + decoder_.params().size()) {
    throw InvalidArgument("set_parameters: parameter count mismatch");
  }
  for (const auto& name : encoder_.params().names()) encoder_.params().assign(name, params.get("enc." + name));
  for (const auto& name : decoder_.params().names()) decoder_.params().assign(name, params.get("dec." + name));
}

ParamStore SimpleGsn::gradients(const Bound& bound, const ad::Gradients& grads) const {
  ParamStore out;
  for (const auto& [name, t] : gradients_of(encoder_, bound.encoder, grads)) out.add("enc." + name, t);
  for (const auto& [name, t] : gradients_of(decoder_, bound.decoder, grads)) out.add("dec." + name, t);
  return out;
}

ad::Var sample_observation(const ObservationDist& d, ad::Var noise) {
  if (d.family == DecoderFamily::gaussian) return gauss_sample_reparam(d.gaussian, noise);
  const Tensor& logits = d.bernoulli.logits.value();
  if (logits.shape() != noise.shape()) {
    throw ShapeError("sample_observation: logits " + to_string(logits.shape()) + " vs noise " +
                     to_string(noise.shape()));
  }
  Tensor x(logits.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double u = 0.5 * std::erfc(-noise.value()[i] / std::numbers::sqrt2);
    x[i] = u < ad::sigmoid(logits[i]) ? 1.0 : 0.0;
  }
  return noise.tape()->constant(std::move(x));
}

Transition transition_sample(const SimpleGsn& g, const SimpleGsn::Bound& bound, ad::Var x, const Tensor& noise_z,
                             const Tensor& noise_x) {
  ad::Tape& tape = *x.tape();
  Transition step;
  step.posterior = g.encode(bound, x);
  step.z = gauss_sample_reparam(step.posterior, tape.constant(noise_z));
  step.reconstruction = g.decode(bound, step.z);
  step.x_next = sample_observation(step.reconstruction, tape.constant(noise_x));
  return step;
}

Trajectory unroll_chain(const SimpleGsn& g, const SimpleGsn::Bound& bound, ad::Var x0, std::size_t steps,
                        NoiseSource& noise) {
  if (steps < 1) throw InvalidArgument("unroll_chain: need at least one step");
  require_width("unroll_chain", x0, g.data_dim());
  const std::size_t n = x0.shape()[0];
  Trajectory traj;
  traj.states.push_back(x0);
  for (std::size_t t = 0; t < steps; ++t) {
    Tensor nz = noise.draw(n, g.latent_dim());
    Tensor nx = noise.draw(n, g.data_dim());
    Transition step = transition_sample(g, bound, traj.states.back(), nz, nx);
    traj.posteriors.push_back(step.posterior);
    traj.latents.push_back(step.z);
    traj.reconstructions.push_back(step.reconstruction);
    traj.states.push_back(step.x_next);
    traj.noise_z.push_back(std::move(nz));
    traj.noise_x.push_back(std::move(nx));
  }
  return traj;
}

std::vector<Tensor> sample_chain(const SimpleGsn& g, const Tensor& x0, std::size_t steps, NoiseSource& noise) {
  std::vector<Tensor> states{x0};
  const std::size_t n = x0.rows();
  for (std::size_t t = 0; t < steps; ++t) {
    // A fresh tape per step keeps memory flat over long chains.
    ad::Tape tape;
    const auto bound = g.bind(tape, false);
    Tensor nz = noise.draw(n, g.latent_dim());
    Tensor nx = noise.draw(n, g.data_dim());
    states.push_back(transition_sample(g, bound, tape.constant(states.back()), nz, nx).x_next.value());
  }
  return states;
}

WalkbackPairs walkback_pairs(const SimpleGsn& g, const Tensor& x, std::size_t k_burn_in, std::size_t k_roll_out,
                             const Stream& rng) {
  const std::size_t n = x.rows();
  GaussianNoise burn_noise(rng.split("burn-in"));
  GaussianNoise roll_noise(rng.split("roll-out"));

  ad::Tape tape;
  const auto bound = g.bind(tape, false);
  const ad::Var x_in = tape.constant(x);

  Tensor z_hat({n, g.latent_dim()});
  for (std::size_t i = 0; i < k_burn_in; ++i) {
    // q(z | x, z_hat) reduces to q(z | x) for a Simple GSN.
    const DiagGaussian q = g.encode(bound, x_in);
    z_hat = gauss_sample_reparam(q, tape.constant(burn_noise.draw(n, g.latent_dim()))).value();
  }

  WalkbackPairs out;
  ad::Var x_hat = x_in;
  for (std::size_t i = 0; i < k_roll_out; ++i) {
    const DiagGaussian q = g.encode(bound, x_hat);
    const ad::Var z_check = gauss_sample_reparam(q, tape.constant(roll_noise.draw(n, g.latent_dim())));
    z_hat = z_check.value();
    const ObservationDist p = g.decode(bound, z_check);
    x_hat = sample_observation(p, tape.constant(roll_noise.draw(n, g.data_dim())));
    out.pairs.emplace_back(x, z_hat);
  }
  return out;
}

}  // namespace gsn
