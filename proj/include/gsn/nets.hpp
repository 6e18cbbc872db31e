// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gsn/autodiff.hpp"
#include "gsn/tensor.hpp"

namespace gsn {

/// Named parameter tensors. Names are unique, iteration is sorted by name and
/// shapes are fixed once a parameter is added.
class ParamStore {
 public:
  void add(const std::string& name, Tensor value);
  bool contains(std::string_view name) const;
  const Tensor& get(std::string_view name) const;
  /// Mutable payload; the shape cannot change through this view.
  std::span<double> values(std::string_view name);
  /// Replaces the payload; `value` must have the registered shape.
  void assign(std::string_view name, const Tensor& value);

  std::vector<std::string> names() const;
  std::size_t size() const noexcept { return params_.size(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  bool operator==(const ParamStore&) const = default;

 private:
  std::map<std::string, Tensor, std::less<>> params_;
};

/// Fully connected network: affine-tanh hidden layers, affine output.
/// Layer i has weight "w<i>" (fan_in x fan_out) and bias "b<i>" (fan_out).
class Mlp {
 public:
  /// Weights uniform in [-s, s], s = sqrt(6 / (fan_in + fan_out)); zero biases.
  static Mlp init(std::vector<std::size_t> widths, std::uint64_t seed);
  static Mlp zeros(std::vector<std::size_t> widths);
  /// Rebuilds an Mlp from stored "w<i>"/"b<i>" tensors, inferring the widths.
  static Mlp from_params(ParamStore params);

  const std::vector<std::size_t>& widths() const noexcept { return widths_; }
  std::size_t in_width() const { return widths_.front(); }
  std::size_t out_width() const { return widths_.back(); }
  std::size_t layers() const { return widths_.size() - 1; }

  ParamStore& params() noexcept { return params_; }
  const ParamStore& params() const noexcept { return params_; }

  /// Parameters placed on a tape, trainable leaves or frozen constants.
  struct Bound {
    std::vector<ad::Var> weights;
    std::vector<ad::Var> biases;
  };
  Bound bind(ad::Tape& tape, bool trainable = true) const;

  /// w0, b0, w1, b1, ... in layer order.
  std::vector<Tensor> layer_tensors() const;
  /// Inverse of layer_tensors for variables already on a tape.
  Bound bound_from(std::span<const ad::Var> vars) const;

  ad::Var forward(const Bound& bound, ad::Var batch) const;
  /// Value-only evaluation on a scratch tape.
  Tensor forward(const Tensor& batch) const;

  bool operator==(const Mlp&) const = default;

 private:
  Mlp(std::vector<std::size_t> widths, ParamStore params) : widths_(std::move(widths)), params_(std::move(params)) {}
  static void check_widths(const std::vector<std::size_t>& widths);

  std::vector<std::size_t> widths_;
  ParamStore params_;
};

inline constexpr double kLogvarClamp = 8.0;

/// Mean and log-variance columns of a diagonal Gaussian head.
struct GaussianParams {
  ad::Var mean;
  ad::Var logvar;
};

/// Splits an n x 2k output: first k columns are the mean, the last k pass
/// through c * tanh(. / c) with c = kLogvarClamp to give the log-variance.
GaussianParams gaussian_head(ad::Var raw);
GaussianParams gaussian_head(const Mlp& net, const Mlp::Bound& bound, ad::Var batch);

/// Collects leaf gradients for a bound network into a store keyed like `net`.
ParamStore gradients_of(const Mlp& net, const Mlp::Bound& bound, const ad::Gradients& grads);

}  // namespace gsn
