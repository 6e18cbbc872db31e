// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gsn/exact.hpp"
#include "gsn/tensor.hpp"

namespace gsn {

/// Immutable n x d sample matrix (n >= 2) with cached mean and unbiased
/// covariance.
class Dataset {
 public:
  explicit Dataset(Tensor samples, std::vector<std::string> columns = {});

  const Tensor& samples() const noexcept { return samples_; }
  const Tensor& mean() const noexcept { return mean_; }
  const Tensor& covariance() const noexcept { return cov_; }
  const std::vector<std::string>& columns() const noexcept { return columns_; }
  std::size_t size() const { return samples_.shape()[0]; }
  std::size_t dim() const { return samples_.shape()[1]; }

  Tensor rows(std::span<const std::size_t> index) const;

 private:
  Tensor samples_;
  std::vector<std::string> columns_;
  Tensor mean_;
  Tensor cov_;
};

/// k isotropic components at angles 2 pi j / k on a circle of `radius`.
Dataset make_ring_of_gaussians(std::size_t k, double radius, double std, std::size_t n, std::uint64_t seed);
/// Uniform angle on one of two concentric circles, chosen with equal odds.
Dataset make_two_circles(std::size_t n, double inner_radius, double outer_radius, double std, std::uint64_t seed);
/// Archimedean spiral r = u, theta = 2 pi turns u with u ~ U(0, 1).
Dataset make_spiral(std::size_t n, double turns, double std, std::uint64_t seed);

/// Full-support draw from a symmetric Dirichlet(concentration).
exact::Dist random_discrete_target(std::size_t m, double concentration, std::uint64_t seed);

// ---- CSV --------------------------------------------------------------------
// Comma separated, one header row of names, LF line endings, '.' decimals,
// numbers written with 17 significant digits.

struct CsvMatrix {
  std::vector<std::string> header;
  Tensor values;
};

CsvMatrix read_csv(const std::filesystem::path& path);
void write_csv(const std::filesystem::path& path, std::span<const std::string> header, const Tensor& values);
std::string format_real(double v);
/// Shortest text that parses back to exactly `v`.
std::string format_shortest(double v);

Dataset load_csv(const std::filesystem::path& path);
void save_csv(const Dataset& data, const std::filesystem::path& path);
void save_csv(const Tensor& samples, const std::filesystem::path& path);

}  // namespace gsn
