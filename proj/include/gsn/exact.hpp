// SPDX-License-Identifier: Apache-2.0
//
// Exact finite-space machinery: probability vectors, column-stochastic
// conditional tables, transition operators, ergodicity classification and
// stationary distributions. Everything is brute-force linear algebra meant
// for state spaces of a few dozen points.

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "gsn/rng.hpp"

namespace gsn::exact {

inline constexpr double kSumTolerance = 1e-12;
/// Probabilities at or below this are structural zeros in support graphs.
inline constexpr double kStructuralZero = 1e-300;

/// Probability vector over m states.
class Dist {
 public:
  explicit Dist(std::vector<double> probs);
  static Dist uniform(std::size_t m);

  std::size_t size() const noexcept { return p_.size(); }
  double operator[](std::size_t i) const { return p_[i]; }
  std::span<const double> values() const noexcept { return p_; }

 private:
  std::vector<double> p_;
};

double total_variation(const Dist& a, const Dist& b);

/// Dense row-major real matrix.
class Table {
 public:
  Table(std::size_t rows, std::size_t cols, double fill = 0.0);
  Table(std::size_t rows, std::size_t cols, std::vector<double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  double operator()(std::size_t r, std::size_t c) const { return v_[r * cols_ + c]; }
  double& operator()(std::size_t r, std::size_t c) { return v_[r * cols_ + c]; }
  std::span<const double> values() const noexcept { return v_; }

 private:
  std::size_t rows_, cols_;
  std::vector<double> v_;
};

/// Conditional table: entry (outcome, condition); every column sums to 1.
class CondTable {
 public:
  explicit CondTable(Table table);
  CondTable(std::size_t outcomes, std::size_t conditions, std::vector<double> values);
  static CondTable identity(std::size_t n);
  static CondTable uniform(std::size_t outcomes, std::size_t conditions);
  /// Random full-support table, columns drawn from a symmetric Dirichlet.
  static CondTable random(std::size_t outcomes, std::size_t conditions, Stream& rng, double concentration = 1.0);

  std::size_t outcomes() const noexcept { return t_.rows(); }
  std::size_t conditions() const noexcept { return t_.cols(); }
  double operator()(std::size_t outcome, std::size_t condition) const { return t_(outcome, condition); }
  Dist column(std::size_t condition) const;
  const Table& table() const noexcept { return t_; }

 private:
  Table t_;
};

/// Square conditional table T(x' | x).
class TransitionMatrix {
 public:
  explicit TransitionMatrix(CondTable t);
  std::size_t size() const noexcept { return t_.outcomes(); }
  double operator()(std::size_t to, std::size_t from) const { return t_(to, from); }
  const CondTable& cond() const noexcept { return t_; }

 private:
  CondTable t_;
};

/// T(x' | x) = sum_z P(x' | z) Q(z | x).
TransitionMatrix transition_matrix(const CondTable& reconstruction, const CondTable& corruption);

enum class ChainClass { ergodic, reducible, periodic };

struct ErgodicityVerdict {
  ChainClass kind = ChainClass::ergodic;
  /// For reducible chains: `to` is unreachable from `from`.
  std::size_t from = 0;
  std::size_t to = 0;
  /// Period of the (irreducible) chain; 1 when aperiodic.
  std::size_t period = 1;

  std::string describe() const;
};

/// Irreducibility by strong connectivity of the support digraph, aperiodicity
/// by the gcd of cycle lengths. Finite chains are positive recurrent.
ErgodicityVerdict is_ergodic(const TransitionMatrix& t);

/// Power iteration from uniform to ||T pi - pi||_inf < 1e-12, cross-checked
/// against a direct solve of (T - I) pi = 0, sum(pi) = 1.
Dist stationary(const TransitionMatrix& t);

/// J[x, z] = D[x] Q(z | x), rows indexed by x.
Table gibbs_joint(const Dist& target, const CondTable& corruption);

/// P*(x | z) = J[x, z] / sum_x J[x, z]; rejects z with zero marginal.
CondTable exact_posterior(const Dist& target, const CondTable& corruption);

/// max_x |pi(x) - D(x)| for the chain P* . Q, over the support of D.
double verify_theorem1(const Dist& target, const CondTable& corruption);

}  // namespace gsn::exact
