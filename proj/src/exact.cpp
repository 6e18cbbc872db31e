// SPDX-License-Identifier: Apache-2.0

#include "gsn/exact.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>

#include "gsn/error.hpp"

namespace gsn::exact {

namespace {

void check_column_sum(double sum, const std::string& what) {
  if (std::abs(sum - 1.0) > kSumTolerance) {
    throw InvalidArgument(what + " sums to " + std::to_string(sum) + ", not 1");
  }
}

void check_entries(std::span<const double> v, const std::string& what) {
  for (double p : v) {
    if (!std::isfinite(p) || p < 0.0) throw InvalidArgument(what + " has an invalid entry " + std::to_string(p));
  }
}

std::vector<double> dirichlet_draw(std::size_t m, double concentration, Stream& rng) {
  std::vector<double> g(m);
  double total = 0.0;
  for (auto& v : g) {
    v = rng.gamma(concentration);
    total += v;
  }
  for (auto& v : g) v /= total;
  return g;
}

}  // namespace

// ---- Dist -------------------------------------------------------------------

Dist::Dist(std::vector<double> probs) : p_(std::move(probs)) {
  if (p_.empty()) throw InvalidArgument("distribution over zero states");
  check_entries(p_, "distribution");
  check_column_sum(std::accumulate(p_.begin(), p_.end(), 0.0), "distribution");
}

Dist Dist::uniform(std::size_t m) {
  if (m == 0) throw InvalidArgument("distribution over zero states");
  return Dist(std::vector<double>(m, 1.0 / static_cast<double>(m)));
}

double total_variation(const Dist& a, const Dist& b) {
  if (a.size() != b.size()) throw ShapeError("total_variation: sizes differ");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return 0.5 * s;
}

// ---- tables -----------------------------------------------------------------

Table::Table(std::size_t rows, std::size_t cols, double fill) : rows_(rows), cols_(cols), v_(rows * cols, fill) {
  if (rows == 0 || cols == 0) throw ShapeError("table extents must be positive");
}

Table::Table(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), v_(std::move(values)) {
  if (rows == 0 || cols == 0) throw ShapeError("table extents must be positive");
  if (v_.size() != rows * cols) {
    throw ShapeError("table " + std::to_string(rows) + "x" + std::to_string(cols) + " given " +
                     std::to_string(v_.size()) + " values");
  }
}

CondTable::CondTable(Table table) : t_(std::move(table)) {
  check_entries(t_.values(), "conditional table");
  for (std::size_t c = 0; c < t_.cols(); ++c) {
    double s = 0.0;
    for (std::size_t r = 0; r < t_.rows(); ++r) s += t_(r, c);
    check_column_sum(s, "conditional table column " + std::to_string(c));
  }
}

CondTable::CondTable(std::size_t outcomes, std::size_t conditions, std::vector<double> values)
    : CondTable(Table(outcomes, conditions, std::move(values))) {}

CondTable CondTable::identity(std::size_t n) {
  Table t(n, n);
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return CondTable(std::move(t));
}

CondTable CondTable::uniform(std::size_t outcomes, std::size_t conditions) {
  return CondTable(Table(outcomes, conditions, 1.0 / static_cast<double>(outcomes)));
}

CondTable CondTable::random(std::size_t outcomes, std::size_t conditions, Stream& rng, double concentration) {
  Table t(outcomes, conditions);
  for (std::size_t c = 0; c < conditions; ++c) {
    const auto col = dirichlet_draw(outcomes, concentration, rng);
    for (std::size_t r = 0; r < outcomes; ++r) t(r, c) = col[r];
  }
  return CondTable(std::move(t));
}

Dist CondTable::column(std::size_t condition) const {
  std::vector<double> p(outcomes());
  for (std::size_t r = 0; r < outcomes(); ++r) p[r] = t_(r, condition);
  return Dist(std::move(p));
}

TransitionMatrix::TransitionMatrix(CondTable t) : t_(std::move(t)) {
  if (t_.outcomes() != t_.conditions()) throw ShapeError("transition matrix must be square");
}

TransitionMatrix transition_matrix(const CondTable& reconstruction, const CondTable& corruption) {
  if (reconstruction.conditions() != corruption.outcomes() || reconstruction.outcomes() != corruption.conditions()) {
    throw ShapeError("transition_matrix: P is " + std::to_string(reconstruction.outcomes()) + "x" +
                     std::to_string(reconstruction.conditions()) + ", Q is " + std::to_string(corruption.outcomes()) +
                     "x" + std::to_string(corruption.conditions()));
  }
  const std::size_t m = reconstruction.outcomes(), n = corruption.outcomes();
  Table t(m, m);
  for (std::size_t to = 0; to < m; ++to)
    for (std::size_t from = 0; from < m; ++from) {
      double s = 0.0;
      for (std::size_t z = 0; z < n; ++z) s += reconstruction(to, z) * corruption(z, from);
      t(to, from) = s;
    }
  // Renormalize away accumulated rounding before the stochasticity check.
  for (std::size_t from = 0; from < m; ++from) {
    double s = 0.0;
    for (std::size_t to = 0; to < m; ++to) s += t(to, from);
    if (std::abs(s - 1.0) < 1e-9)
      for (std::size_t to = 0; to < m; ++to) t(to, from) /= s;
  }
  return TransitionMatrix(CondTable(std::move(t)));
}

// ---- ergodicity -------------------------------------------------------------

std::string ErgodicityVerdict::describe() const {
  switch (kind) {
    case ChainClass::ergodic:
      return "ergodic";
    case ChainClass::reducible:
      return "reducible, state " + std::to_string(from) + " cannot reach state " + std::to_string(to);
    case ChainClass::periodic:
      return "periodic, period " + std::to_string(period);
  }
  return "unknown";
}

ErgodicityVerdict is_ergodic(const TransitionMatrix& t) {
  const std::size_t m = t.size();
  auto edge = [&](std::size_t from, std::size_t to) { return t(to, from) > kStructuralZero; };

  // Forward BFS from state 0 with levels.
  std::vector<long> level(m, -1);
  std::queue<std::size_t> q;
  level[0] = 0;
  q.push(0);
  while (!q.empty()) {
    const std::size_t u = q.front();
    q.pop();
    for (std::size_t v = 0; v < m; ++v) {
      if (edge(u, v) && level[v] < 0) {
        level[v] = level[u] + 1;
        q.push(v);
      }
    }
  }
  ErgodicityVerdict verdict;
  for (std::size_t v = 0; v < m; ++v) {
    if (level[v] < 0) {
      verdict.kind = ChainClass::reducible;
      verdict.from = 0;
      verdict.to = v;
      return verdict;
    }
  }
  // Backward BFS: every state must reach 0.
  std::vector<bool> reaches(m, false);
  reaches[0] = true;
  q.push(0);
  while (!q.empty()) {
    const std::size_t v = q.front();
    q.pop();
    for (std::size_t u = 0; u < m; ++u) {
      if (edge(u, v) && !reaches[u]) {
        reaches[u] = true;
        q.push(u);
      }
    }
  }
  for (std::size_t u = 0; u < m; ++u) {
    if (!reaches[u]) {
      verdict.kind = ChainClass::reducible;
      verdict.from = u;
      verdict.to = 0;
      return verdict;
    }
  }
  // Period of an irreducible chain: gcd of level[u] + 1 - level[v] over edges.
  long g = 0;
  for (std::size_t u = 0; u < m; ++u)
    for (std::size_t v = 0; v < m; ++v)
      if (edge(u, v)) g = std::gcd(g, std::abs(level[u] + 1 - level[v]));
  verdict.period = static_cast<std::size_t>(g);
  verdict.kind = g == 1 ? ChainClass::ergodic : ChainClass::periodic;
  return verdict;
}

// ---- stationary distribution ------------------------------------------------

namespace {

std::vector<double> step_chain(const TransitionMatrix& t, const std::vector<double>& p) {
  const std::size_t m = t.size();
  std::vector<double> out(m, 0.0);
  for (std::size_t to = 0; to < m; ++to)
    for (std::size_t from = 0; from < m; ++from) out[to] += t(to, from) * p[from];
  return out;
}

double residual(const TransitionMatrix& t, const std::vector<double>& p) {
  const auto tp = step_chain(t, p);
  double r = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) r = std::max(r, std::abs(tp[i] - p[i]));
  return r;
}

std::vector<double> null_space_solve(const TransitionMatrix& t) {
  const auto m = static_cast<Eigen::Index>(t.size());
  Eigen::MatrixXd a(m, m);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < m; ++j) a(i, j) = t(i, j) - (i == j ? 1.0 : 0.0);
  a.row(m - 1).setOnes();
  Eigen::VectorXd b = Eigen::VectorXd::Zero(m);
  b(m - 1) = 1.0;
  const Eigen::VectorXd x = a.fullPivLu().solve(b);
  return {x.data(), x.data() + m};
}

}  // namespace

Dist stationary(const TransitionMatrix& t) {
  const auto verdict = is_ergodic(t);
  if (verdict.kind != ChainClass::ergodic) throw InvalidArgument("stationary: chain is " + verdict.describe());

  const std::size_t m = t.size();
  std::vector<double> p(m, 1.0 / static_cast<double>(m));
  constexpr std::size_t kMaxIterations = 2'000'000;
  double r = residual(t, p);
  for (std::size_t it = 0; it < kMaxIterations && r > 1e-15; ++it) {
    p = step_chain(t, p);
    const double s = std::accumulate(p.begin(), p.end(), 0.0);
    for (auto& v : p) v /= s;
    // Residual checks every step would double the cost.
    if (it % 64 == 63) r = residual(t, p);
  }
  r = residual(t, p);
  if (r >= 1e-12) throw NumericError("stationary: power iteration stalled at residual " + std::to_string(r));

  const auto direct = null_space_solve(t);
  for (std::size_t i = 0; i < m; ++i) {
    if (std::abs(direct[i] - p[i]) > 1e-9) {
      throw NumericError("stationary: power iteration and direct solve disagree at state " + std::to_string(i));
    }
  }
  for (auto& v : p) v = std::max(v, 0.0);
  const double s = std::accumulate(p.begin(), p.end(), 0.0);
  for (auto& v : p) v /= s;
  return Dist(std::move(p));
}

// ---- Gibbs joint and posterior ----------------------------------------------

Table gibbs_joint(const Dist& target, const CondTable& corruption) {
  if (corruption.conditions() != target.size()) {
    throw ShapeError("gibbs_joint: D has " + std::to_string(target.size()) + " states, Q conditions on " +
                     std::to_string(corruption.conditions()));
  }
  Table j(target.size(), corruption.outcomes());
  for (std::size_t x = 0; x < target.size(); ++x)
    for (std::size_t z = 0; z < corruption.outcomes(); ++z) j(x, z) = target[x] * corruption(z, x);
  return j;
}

CondTable exact_posterior(const Dist& target, const CondTable& corruption) {
  const Table j = gibbs_joint(target, corruption);
  Table post(j.rows(), j.cols());
  for (std::size_t z = 0; z < j.cols(); ++z) {
    double marginal = 0.0;
    for (std::size_t x = 0; x < j.rows(); ++x) marginal += j(x, z);
    if (!(marginal > 0.0)) throw InvalidArgument("exact_posterior: latent " + std::to_string(z) + " has zero marginal");
    for (std::size_t x = 0; x < j.rows(); ++x) post(x, z) = j(x, z) / marginal;
  }
  return CondTable(std::move(post));
}

double verify_theorem1(const Dist& target, const CondTable& corruption) {
  const CondTable posterior = exact_posterior(target, corruption);
  const TransitionMatrix full = transition_matrix(posterior, corruption);

  std::vector<std::size_t> support;
  for (std::size_t x = 0; x < target.size(); ++x)
    if (target[x] > 0.0) support.push_back(x);

  // States outside supp(D) receive no mass from P*, so the restriction to the
  // support is itself column-stochastic.
  const std::size_t s = support.size();
  Table sub(s, s);
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t j = 0; j < s; ++j) sub(i, j) = full(support[i], support[j]);
  const TransitionMatrix restricted{CondTable(std::move(sub))};

  const auto verdict = is_ergodic(restricted);
  if (verdict.kind != ChainClass::ergodic) {
    throw InvalidArgument("verify_theorem1: corruption yields a chain that is " + verdict.describe());
  }
  const Dist pi = stationary(restricted);
  double worst = 0.0;
  for (std::size_t i = 0; i < s; ++i) worst = std::max(worst, std::abs(pi[i] - target[support[i]]));
  return worst;
}

}  // namespace gsn::exact
