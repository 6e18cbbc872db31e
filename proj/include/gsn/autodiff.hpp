// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode automatic differentiation over dense double tensors.
//
// A Tape records every primitive applied to its variables in execution order,
// so node inputs always precede the node. `Tape::backward` sweeps the record
// once in reverse and returns the gradient of a scalar output with respect to
// every leaf. Tapes are single-threaded during construction and backward; a
// finished Gradients object is an immutable value.

#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gsn/tensor.hpp"

namespace gsn::ad {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while its Tape lives.
class Var {
 public:
  Var() = default;

  std::size_t id() const noexcept { return id_; }
  Tape* tape() const noexcept { return tape_; }
  bool valid() const noexcept { return tape_ != nullptr; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Gradients of one backward sweep, indexed by leaf.
class Gradients {
 public:
  /// d(output)/d(leaf); zeros when the output does not depend on the leaf.
  const Tensor& operator[](Var leaf) const;
  const Tensor& at(std::size_t leaf_id) const;
  bool all_finite() const;

 private:
  friend class Tape;
  std::vector<std::optional<Tensor>> grads_;
};

/// Accumulates upstream contributions into a node's inputs during backward.
class GradSink {
 public:
  void add(std::size_t input, const Tensor& contribution);
  void add(std::size_t input, Tensor&& contribution);
  /// False when the input cannot reach any leaf; callers may skip work.
  bool wants(std::size_t input) const;

 private:
  friend class Tape;
  GradSink(const Tape& tape, std::vector<std::optional<Tensor>>& grads) : tape_(tape), grads_(grads) {}
  const Tape& tape_;
  std::vector<std::optional<Tensor>>& grads_;
};

/// `backward(tape, self, upstream, sink)` pushes d(out)/d(input) for each input.
using BackwardFn = std::function<void(const Tape&, std::size_t, const Tensor&, GradSink&)>;

enum class NodeKind { leaf, constant, op };

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// A differentiable input.
  Var leaf(Tensor value);
  /// A non-differentiable input; gradients never flow into it.
  Var constant(Tensor value);
  Var constant(double value) { return constant(Tensor::scalar(value)); }

  /// Appends an operation node. Throws NumericError if `value` is not finite.
  Var record(std::string_view op, Tensor value, std::vector<Var> inputs, BackwardFn backward);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  const Tensor& value(Var v) const { return nodes_[v.id()].value; }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_[id].inputs; }
  const std::string& op(std::size_t id) const { return nodes_[id].op; }
  NodeKind kind(std::size_t id) const { return nodes_[id].kind; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Exact reverse-mode gradients of a one-element output.
  Gradients backward(Var output) const;

 private:
  struct Node {
    std::string op;
    NodeKind kind;
    std::vector<std::size_t> inputs;
    Tensor value;
    BackwardFn backward;
    bool requires_grad;
  };

  void check_owned(Var v) const;

  std::vector<Node> nodes_;
};

// ---- primitives -------------------------------------------------------------
// Elementwise binaries require identical shapes; broadcasting is explicit.

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var matmul(Var a, Var b);
/// Adds a length-k vector to every row of an n x k matrix.
Var add_row(Var matrix, Var row);
Var scale(Var a, double factor);
Var add_scalar(Var a, double offset);
Var neg(Var a);
Var square(Var a);
Var tanh(Var a);
Var sigmoid(Var a);
/// log(1 + e^a), overflow-free for any finite a.
Var softplus(Var a);
Var exp(Var a);
/// Rejects non-positive inputs with NumericError.
Var log(Var a);
/// Subgradient at 0 is 0.
Var abs(Var a);
/// max(0, a); subgradient at 0 is 0.
Var relu(Var a);
/// Sum of all elements, shape [1].
Var sum(Var a);
/// Mean of all elements, shape [1].
Var mean(Var a);
/// Per-row sum of an n x k matrix, shape [n].
Var row_sum(Var a);
/// Per-column mean of an n x k matrix, shape [k].
Var col_mean(Var a);
Var transpose(Var a);
/// Columns [begin, begin + count) of an n x k matrix.
Var slice_cols(Var a, std::size_t begin, std::size_t count);
/// Stacks n_i x k matrices into a (sum n_i) x k matrix.
Var concat_rows(std::span<const Var> parts);
/// Rows of `a` at `rows`, in that order (repeats allowed).
Var gather_rows(Var a, std::span<const std::size_t> rows);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(double c, Var a) { return scale(a, c); }
inline Var operator-(Var a) { return neg(a); }

/// Scalar-valued function of leaf variables, used by grad_check.
using ScalarFn = std::function<Var(Tape&, std::span<const Var>)>;

/// Max elementwise relative error between backward() and central finite
/// differences, relative error = |a - b| / max(|a|, |b|, 1e-8).
double grad_check(const ScalarFn& f, std::span<const Tensor> leaves, double step);

/// Softplus of a plain double, same formula the primitive uses.
double softplus(double t);
double sigmoid(double t);

}  // namespace gsn::ad
