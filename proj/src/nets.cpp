// SPDX-License-Identifier: Apache-2.0

#include "gsn/nets.hpp"

#include <cmath>

#include "gsn/error.hpp"
#include "gsn/rng.hpp"

namespace gsn {

// ---- ParamStore -------------------------------------------------------------

void ParamStore::add(const std::string& name, Tensor value) {
  if (!params_.emplace(name, std::move(value)).second) {
    throw InvalidArgument("parameter '" + name + "' already registered");
  }
}

bool ParamStore::contains(std::string_view name) const { return params_.find(name) != params_.end(); }

const Tensor& ParamStore::get(std::string_view name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw InvalidArgument("unknown parameter '" + std::string(name) + "'");
  return it->second;
}

std::span<double> ParamStore::values(std::string_view name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw InvalidArgument("unknown parameter '" + std::string(name) + "'");
  return it->second.values();
}

void ParamStore::assign(std::string_view name, const Tensor& value) {
  auto it = params_.find(name);
  if (it == params_.end()) throw InvalidArgument("unknown parameter '" + std::string(name) + "'");
  if (it->second.shape() != value.shape()) {
    throw ShapeError("parameter '" + std::string(name) + "' has shape " + to_string(it->second.shape()) +
                     ", cannot assign " + to_string(value.shape()));
  }
  it->second = value;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& [name, _] : params_) out.push_back(name);
  return out;
}

// ---- Mlp --------------------------------------------------------------------

void Mlp::check_widths(const std::vector<std::size_t>& widths) {
  if (widths.size() < 2) throw InvalidArgument("an MLP needs at least an input and an output width");
  for (auto w : widths) {
    if (w == 0) throw InvalidArgument("MLP widths must be positive");
  }
}

Mlp Mlp::zeros(std::vector<std::size_t> widths) {
  check_widths(widths);
  ParamStore params;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    params.add("w" + std::to_string(l), Tensor({widths[l], widths[l + 1]}));
    params.add("b" + std::to_string(l), Tensor({widths[l + 1]}));
  }
  return Mlp(std::move(widths), std::move(params));
}

Mlp Mlp::init(std::vector<std::size_t> widths, std::uint64_t seed) {
  Mlp net = zeros(std::move(widths));
  const Stream root(seed);
  for (std::size_t l = 0; l < net.layers(); ++l) {
    const double fan = static_cast<double>(net.widths_[l] + net.widths_[l + 1]);
    const double s = std::sqrt(6.0 / fan);
    Stream stream = root.split(l);
    for (double& w : net.params_.values("w" + std::to_string(l))) w = (2.0 * stream.uniform() - 1.0) * s;
  }
  return net;
}

Mlp Mlp::from_params(ParamStore params) {
  std::vector<std::size_t> widths;
  for (std::size_t l = 0; params.contains("w" + std::to_string(l)); ++l) {
    const Tensor& w = params.get("w" + std::to_string(l));
    const std::string bname = "b" + std::to_string(l);
    if (w.rank() != 2) throw FormatError("w" + std::to_string(l), "weight must be a matrix");
    if (!params.contains(bname) || params.get(bname).shape() != Shape{w.shape()[1]}) {
      throw FormatError(bname, "missing or mis-shaped bias");
    }
    if (l == 0) widths.push_back(w.shape()[0]);
    if (widths.back() != w.shape()[0]) throw FormatError("w" + std::to_string(l), "inconsistent fan-in");
    widths.push_back(w.shape()[1]);
  }
  if (widths.size() < 2) throw FormatError("w0", "network has no layers");
  if (params.size() != 2 * (widths.size() - 1)) throw FormatError("mlp", "unexpected extra parameters");
  return Mlp(std::move(widths), std::move(params));
}

Mlp::Bound Mlp::bind(ad::Tape& tape, bool trainable) const {
  Bound b;
  for (std::size_t l = 0; l < layers(); ++l) {
    const Tensor& w = params_.get("w" + std::to_string(l));
    const Tensor& bias = params_.get("b" + std::to_string(l));
    b.weights.push_back(trainable ? tape.leaf(w) : tape.constant(w));
    b.biases.push_back(trainable ? tape.leaf(bias) : tape.constant(bias));
  }
  return b;
}

std::vector<Tensor> Mlp::layer_tensors() const {
  std::vector<Tensor> out;
  for (std::size_t l = 0; l < layers(); ++l) {
    out.push_back(params_.get("w" + std::to_string(l)));
    out.push_back(params_.get("b" + std::to_string(l)));
  }
  return out;
}

Mlp::Bound Mlp::bound_from(std::span<const ad::Var> vars) const {
  if (vars.size() != 2 * layers()) {
    throw ShapeError("Mlp::bound_from: expected " + std::to_string(2 * layers()) + " variables, got " +
                     std::to_string(vars.size()));
  }
  Bound b;
  for (std::size_t l = 0; l < layers(); ++l) {
    const ad::Var w = vars[2 * l], bias = vars[2 * l + 1];
    if (w.shape() != params_.get("w" + std::to_string(l)).shape() ||
        bias.shape() != params_.get("b" + std::to_string(l)).shape()) {
      throw ShapeError("Mlp::bound_from: layer " + std::to_string(l) + " shape mismatch");
    }
    b.weights.push_back(w);
    b.biases.push_back(bias);
  }
  return b;
}

ad::Var Mlp::forward(const Bound& bound, ad::Var batch) const {
  if (batch.shape().size() != 2 || batch.shape()[1] != in_width()) {
    throw ShapeError("mlp_forward: batch " + to_string(batch.shape()) + " does not match input width " +
                     std::to_string(in_width()));
  }
  ad::Var h = batch;
  for (std::size_t l = 0; l < layers(); ++l) {
    h = ad::add_row(ad::matmul(h, bound.weights[l]), bound.biases[l]);
    if (l + 1 < layers()) h = ad::tanh(h);
  }
  return h;
}

Tensor Mlp::forward(const Tensor& batch) const {
  ad::Tape tape;
  const Bound b = bind(tape, false);
  return forward(b, tape.constant(batch)).value();
}

// ---- heads ------------------------------------------------------------------

GaussianParams gaussian_head(ad::Var raw) {
  if (raw.shape().size() != 2 || raw.shape()[1] % 2 != 0) {
    throw ShapeError("gaussian_head: output width must be even, got " + to_string(raw.shape()));
  }
  const std::size_t k = raw.shape()[1] / 2;
  const ad::Var mean = ad::slice_cols(raw, 0, k);
  const ad::Var logvar =
      ad::scale(ad::tanh(ad::scale(ad::slice_cols(raw, k, k), 1.0 / kLogvarClamp)), kLogvarClamp);
  return {mean, logvar};
}

GaussianParams gaussian_head(const Mlp& net, const Mlp::Bound& bound, ad::Var batch) {
  return gaussian_head(net.forward(bound, batch));
}

ParamStore gradients_of(const Mlp& net, const Mlp::Bound& bound, const ad::Gradients& grads) {
  ParamStore out;
  for (std::size_t l = 0; l < net.layers(); ++l) {
    out.add("w" + std::to_string(l), grads[bound.weights[l]]);
    out.add("b" + std::to_string(l), grads[bound.biases[l]]);
  }
  return out;
}

}  // namespace gsn
