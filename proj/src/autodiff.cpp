// SPDX-License-Identifier: Apache-2.0

#include "gsn/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "gsn/error.hpp"

namespace gsn::ad {

double softplus(double t) { return std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t))); }

double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

const Tensor& Var::value() const {
  if (!tape_) throw InvalidArgument("use of an unbound Var");
  return tape_->value(id_);
}

// ---- Gradients / GradSink ---------------------------------------------------

const Tensor& Gradients::operator[](Var leaf) const { return at(leaf.id()); }

const Tensor& Gradients::at(std::size_t leaf_id) const {
  if (leaf_id >= grads_.size() || !grads_[leaf_id]) {
    throw InvalidArgument("no gradient recorded for node " + std::to_string(leaf_id) + " (not a leaf)");
  }
  return *grads_[leaf_id];
}

bool Gradients::all_finite() const {
  return std::all_of(grads_.begin(), grads_.end(), [](const auto& g) { return !g || g->all_finite(); });
}

bool GradSink::wants(std::size_t input) const { return tape_.requires_grad(input); }

void GradSink::add(std::size_t input, Tensor&& contribution) {
  if (!wants(input)) return;
  auto& slot = grads_[input];
  if (!slot) {
    if (contribution.shape() != tape_.value(input).shape()) {
      throw ShapeError("backward: contribution " + to_string(contribution.shape()) + " for node of shape " +
                       to_string(tape_.value(input).shape()));
    }
    slot = std::move(contribution);
    return;
  }
  auto dst = slot->values();
  auto src = contribution.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

void GradSink::add(std::size_t input, const Tensor& contribution) { add(input, Tensor(contribution)); }

// ---- Tape -------------------------------------------------------------------

Var Tape::leaf(Tensor value) {
  if (!value.all_finite()) throw NumericError("leaf: non-finite value");
  nodes_.push_back({"leaf", NodeKind::leaf, {}, std::move(value), {}, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  if (!value.all_finite()) throw NumericError("constant: non-finite value");
  nodes_.push_back({"constant", NodeKind::constant, {}, std::move(value), {}, false});
  return Var(this, nodes_.size() - 1);
}

void Tape::check_owned(Var v) const {
  if (v.tape() != this) throw InvalidArgument("Var belongs to a different tape");
}

Var Tape::record(std::string_view op, Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  if (!value.all_finite()) throw NumericError(std::string(op) + ": produced a non-finite value");
  std::vector<std::size_t> ids;
  ids.reserve(inputs.size());
  bool grad = false;
  for (Var v : inputs) {
    check_owned(v);
    ids.push_back(v.id());
    grad = grad || nodes_[v.id()].requires_grad;
  }
  nodes_.push_back({std::string(op), NodeKind::op, std::move(ids), std::move(value),
                    grad ? std::move(backward) : BackwardFn{}, grad});
  return Var(this, nodes_.size() - 1);
}

Gradients Tape::backward(Var output) const {
  check_owned(output);
  if (value(output).size() != 1) {
    throw ShapeError("backward: output must be scalar, got " + to_string(value(output).shape()));
  }
  std::vector<std::optional<Tensor>> grads(nodes_.size());
  GradSink sink(*this, grads);
  if (nodes_[output.id()].requires_grad) grads[output.id()] = Tensor(value(output).shape(), 1.0);

  for (std::size_t i = output.id() + 1; i-- > 0;) {
    const Node& node = nodes_[i];
    if (node.kind != NodeKind::op || !grads[i] || !node.requires_grad) continue;
    node.backward(*this, i, *grads[i], sink);
    grads[i].reset();
  }

  Gradients out;
  out.grads_.resize(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].kind != NodeKind::leaf) continue;
    out.grads_[i] = grads[i] ? std::move(*grads[i]) : Tensor(nodes_[i].value.shape(), 0.0);
  }
  return out;
}

// ---- primitives -------------------------------------------------------------

namespace {

Tape& tape_of(Var a) {
  if (!a.valid()) throw InvalidArgument("use of an unbound Var");
  return *a.tape();
}

Tape& common_tape(Var a, Var b) {
  Tape& t = tape_of(a);
  if (b.tape() != &t) throw InvalidArgument("operands live on different tapes");
  return t;
}

void require_same_shape(std::string_view op, Var a, Var b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
}

void require_matrix(std::string_view op, Var a) {
  if (a.shape().size() != 2) {
    throw ShapeError(std::string(op) + ": expected a matrix, got " + to_string(a.shape()));
  }
}

template <class F>
Tensor map(const Tensor& x, F&& f) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return out;
}

// Elementwise unary op; `deriv(x, y)` is dy/dx.
template <class F, class D>
Var unary(std::string_view op, Var a, F&& f, D deriv) {
  Tape& t = tape_of(a);
  return t.record(op, map(a.value(), f), {a},
                  [deriv](const Tape& tape, std::size_t self, const Tensor& g, GradSink& sink) {
                    const std::size_t in = tape.inputs(self)[0];
                    const Tensor& x = tape.value(in);
                    const Tensor& y = tape.value(self);
                    Tensor d(x.shape());
                    for (std::size_t i = 0; i < x.size(); ++i) d[i] = g[i] * deriv(x[i], y[i]);
                    sink.add(in, std::move(d));
                  });
}

}  // namespace

Var add(Var a, Var b) {
  Tape& t = common_tape(a, b);
  require_same_shape("add", a, b);
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return t.record("add", std::move(out), {a, b},
                  [](const Tape& tape, std::size_t self, const Tensor& g, GradSink& sink) {
                    sink.add(tape.inputs(self)[0], g);
                    sink.add(tape.inputs(self)[1], g);
                  });
}

Var sub(Var a, Var b) {
  Tape& t = common_tape(a, b);
  require_same_shape("sub", a, b);
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return t.record("sub", std::move(out), {a, b},
                  [](const Tape& tape, std::size_t self, const Tensor& g, GradSink& sink) {
                    sink.add(tape.inputs(self)[0], g);
                    sink.add(tape.inputs(self)[1], map(g, [](double v) { return -v; }));
                  });
}

Var mul(Var a, Var b) {
  Tape& t = common_tape(a, b);
  require_same_shape("mul", a, b);
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return t.record("mul", std::move(out), {a, b},
                  [](const Tape& tape, std::size_t self, const Tensor& g, GradSink& sink) {
                    const auto ia = tape.inputs(self)[0], ib = tape.inputs(self)[1];
                    const Tensor& va = tape.value(ia);
                    const Tensor& vb = tape.value(ib);
                    if (sink.wants(ia)) {
                      Tensor d = g;
                      for (std::size_t i = 0; i < d.size(); ++i) d[i] *= vb[i];
                      sink.add(ia, std::move(d));
                    }
                    if (sink.wants(ib)) {
                      Tensor d = g;
                      for (std::size_t i = 0; i < d.size(); ++i) d[i] *= va[i];
                      sink.add(ib, std::move(d));
                    }
                  });
}

Var matmul(Var a, Var b) {
  Tape& t = common_tape(a, b);
  require_matrix("matmul", a);
  require_matrix("matmul", b);
  if (a.shape()[1] != b.shape()[0]) {
    throw ShapeError("matmul: cannot multiply " + to_string(a.shape()) + " by " + to_string(b.shape()));
  }
  return t.record("matmul", gsn::matmul(a.value(), b.value()), {a, b},
                  [](const Tape& tape, std::size_t self, const Tensor& g, GradSink& sink) {
                    const auto ia = tape.inputs(self)[0], ib = tape.inputs(self)[1];
                    if (sink.wants(ia)) sink.add(ia, gsn::matmul(g, gsn::transpose(tape.value(ib))));
                    if (sink.wants(ib)) sink.add(ib, gsn::matmul(gsn::transpose(tape.value(ia)), g));
                  });
}

Var add_row(Var matrix, Var row) {
  Tape& t = common_tape(matrix, row);
  require_matrix("add_row", matrix);
  const auto& rs = row.shape();
  const std::size_t n = matrix.shape()[0], k = matrix.shape()[1];
  const bool conforms = (rs.size() == 1 && rs[0] == k) || (rs.size() == 2 && rs[0] == 1 && rs[1] == k);
  if (!conforms) {
    throw ShapeError("add_row: row " + to_string(rs) + " does not broadcast over " + to_string(matrix.shape()));
  }
  Tensor out = matrix.value();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) out(i, j) += row.value()[j];
  return t.record("add_row", std::move(out), {matrix, row},
                  [](const Tape& tape, std::size_t self, const Tensor& g, GradSink& sink) {
                    const auto im = tape.inputs(self)[0], ir = tape.inputs(self)[1];
                    sink.add(im, g);
                    if (sink.wants(ir)) {
                      Tensor d(tape.value(ir).shape());
                      const std::size_t rows = g.shape()[0], cols = g.shape()[1];
                      for (std::size_t i = 0; i < rows; ++i)
                        for (std::size_t j = 0; j < cols; ++j) d[j] += g(i, j);
                      sink.add(ir, std::move(d));
                    }
                  });
}

Var scale(Var a, double factor) {
  Tape& t = tape_of(a);
  return t.record("scale", map(a.value(), [factor](double v) { return v * factor; }), {a},
                  [factor](const Tape& tape, std::size_t self, const Tensor& g, GradSink& sink) {
                    sink.add(tape.inputs(self)[0], map(g, [factor](double v) { return v * factor; }));
                  });
}

Var add_scalar(Var a, double offset) {
  Tape& t = tape_of(a);
  return t.record("add_scalar", map(a.value(), [offset](double v) { return v + offset; }), {a},
                  [](const Tape& tape, std::size_t self, const Tensor& g, GradSink& sink) {
                    sink.add(tape.inputs(self)[0], g);
                  });
}

Var neg(Var a) { return scale(a, -1.0); }

Var square(Var a) {
  return unary("square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var tanh(Var a) {
  return unary("tanh", a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
  return unary("sigmoid", a, [](double x) { return sigmoid(x); },
               [](double, double y) { return y * (1.0 - y); });
}

Var softplus(Var a) {
  return unary("softplus", a, [](double x) { return softplus(x); }, [](double x, double) { return sigmoid(x); });
}

Var exp(Var a) {
  return unary("exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  for (double v : a.value().values()) {
    if (!(v > 0.0)) throw NumericError("log: non-positive input " + std::to_string(v));
  }
  return unary("log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var abs(Var a) {
  return unary("abs", a, [](double x) { return std::abs(x); },
               [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var relu(Var a) {
  return unary("relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var sum(Var a) {
  Tape& t = tape_of(a);
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return t.record("sum", Tensor::scalar(s), {a},
                  [](const Tape& tape, std::size_t self, const Tensor& g, GradSink& sink) {
                    const auto in = tape.inputs(self)[0];
                    sink.add(in, Tensor(tape.value(in).shape(), g.item()));
                  });
}

Var mean(Var a) {
  Tape& t = tape_of(a);
  const double n = static_cast<double>(a.value().size());
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return t.record("mean", Tensor::scalar(s / n), {a},
                  [n](const Tape& tape, std::size_t self, const Tensor& g, GradSink& sink) {
                    const auto in = tape.inputs(self)[0];
                    sink.add(in, Tensor(tape.value(in).shape(), g.item() / n));
                  });
}

Var row_sum(Var a) {
  Tape& t = tape_of(a);
  require_matrix("row_sum", a);
  const std::size_t n = a.shape()[0], k = a.shape()[1];
  Tensor out({n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) out[i] += a.value()(i, j);
  return t.record("row_sum", std::move(out), {a},
                  [n, k](const Tape& tape, std::size_t self, const Tensor& g, GradSink& sink) {
                    Tensor d({n, k});
                    for (std::size_t i = 0; i < n; ++i)
                      for (std::size_t j = 0; j < k; ++j) d(i, j) = g[i];
                    sink.add(tape.inputs(self)[0], std::move(d));
                  });
}

Var col_mean(Var a) {
  Tape& t = tape_of(a);
  require_matrix("col_mean", a);
  const std::size_t n = a.shape()[0], k = a.shape()[1];
  Tensor out({k});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) out[j] += a.value()(i, j);
  for (std::size_t j = 0; j < k; ++j) out[j] /= static_cast<double>(n);
  return t.record("col_mean", std::move(out), {a},
                  [n, k](const Tape& tape, std::size_t self, const Tensor& g, GradSink& sink) {
                    Tensor d({n, k});
                    for (std::size_t i = 0; i < n; ++i)
                      for (std::size_t j = 0; j < k; ++j) d(i, j) = g[j] / static_cast<double>(n);
                    sink.add(tape.inputs(self)[0], std::move(d));
                  });
}

Var transpose(Var a) {
  Tape& t = tape_of(a);
  require_matrix("transpose", a);
  return t.record("transpose", gsn::transpose(a.value()), {a},
                  [](const Tape& tape, std::size_t self, const Tensor& g, GradSink& sink) {
                    sink.add(tape.inputs(self)[0], gsn::transpose(g));
                  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t count) {
  Tape& t = tape_of(a);
  require_matrix("slice_cols", a);
  const std::size_t n = a.shape()[0], k = a.shape()[1];
  if (count == 0 || begin + count > k) {
    throw ShapeError("slice_cols: columns [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") out of range for " + to_string(a.shape()));
  }
  Tensor out({n, count});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < count; ++j) out(i, j) = a.value()(i, begin + j);
  return t.record("slice_cols", std::move(out), {a},
                  [n, k, begin, count](const Tape& tape, std::size_t self, const Tensor& g, GradSink& sink) {
                    Tensor d({n, k});
                    for (std::size_t i = 0; i < n; ++i)
                      for (std::size_t j = 0; j < count; ++j) d(i, begin + j) = g(i, j);
                    sink.add(tape.inputs(self)[0], std::move(d));
                  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no parts");
  Tape& t = tape_of(parts[0]);
  require_matrix("concat_rows", parts[0]);
  const std::size_t k = parts[0].shape()[1];
  std::size_t n = 0;
  std::vector<std::size_t> offsets;
  for (Var p : parts) {
    require_matrix("concat_rows", p);
    if (p.shape()[1] != k) {
      throw ShapeError("concat_rows: shape mismatch " + to_string(parts[0].shape()) + " vs " +
                       to_string(p.shape()));
    }
    offsets.push_back(n);
    n += p.shape()[0];
  }
  Tensor out({n, k});
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Tensor& v = parts[p].value();
    std::copy(v.values().begin(), v.values().end(), out.values().begin() + offsets[p] * k);
  }
  return t.record("concat_rows", std::move(out), std::vector<Var>(parts.begin(), parts.end()),
                  [offsets, k](const Tape& tape, std::size_t self, const Tensor& g, GradSink& sink) {
                    const auto& ins = tape.inputs(self);
                    for (std::size_t p = 0; p < ins.size(); ++p) {
                      if (!sink.wants(ins[p])) continue;
                      Tensor d(tape.value(ins[p]).shape());
                      auto src = g.values().begin() + offsets[p] * k;
                      std::copy(src, src + d.size(), d.values().begin());
                      sink.add(ins[p], std::move(d));
                    }
                  });
}

Var gather_rows(Var a, std::span<const std::size_t> rows) {
  Tape& t = tape_of(a);
  require_matrix("gather_rows", a);
  if (rows.empty()) throw ShapeError("gather_rows: empty row selection");
  const std::size_t n = a.shape()[0], k = a.shape()[1];
  Tensor out({rows.size(), k});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= n) {
      throw ShapeError("gather_rows: row " + std::to_string(rows[r]) + " out of range for " + to_string(a.shape()));
    }
    for (std::size_t j = 0; j < k; ++j) out(r, j) = a.value()(rows[r], j);
  }
  std::vector<std::size_t> index(rows.begin(), rows.end());
  return t.record("gather_rows", std::move(out), {a},
                  [index, n, k](const Tape& tape, std::size_t self, const Tensor& g, GradSink& sink) {
                    Tensor d({n, k});
                    for (std::size_t r = 0; r < index.size(); ++r)
                      for (std::size_t j = 0; j < k; ++j) d(index[r], j) += g(r, j);
                    sink.add(tape.inputs(self)[0], std::move(d));
                  });
}

// ---- gradient check ---------------------------------------------------------

double grad_check(const ScalarFn& f, std::span<const Tensor> leaves, double step) {
  if (!(step > 0.0)) throw InvalidArgument("grad_check: step must be positive");

  auto evaluate = [&](const std::vector<Tensor>& values) {
    Tape tape;
    std::vector<Var> vars;
    for (const auto& v : values) vars.push_back(tape.leaf(v));
    return f(tape, vars).value().item();
  };

  Tape tape;
  std::vector<Var> vars;
  for (const auto& v : leaves) vars.push_back(tape.leaf(v));
  const Gradients grads = tape.backward(f(tape, vars));

  std::vector<Tensor> probe(leaves.begin(), leaves.end());
  double worst = 0.0;
  for (std::size_t l = 0; l < probe.size(); ++l) {
    const Tensor& analytic = grads[vars[l]];
    for (std::size_t i = 0; i < probe[l].size(); ++i) {
      const double saved = probe[l][i];
      probe[l][i] = saved + step;
      const double up = evaluate(probe);
      probe[l][i] = saved - step;
      const double down = evaluate(probe);
      probe[l][i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace gsn::ad
