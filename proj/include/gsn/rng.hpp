// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "gsn/tensor.hpp"

namespace gsn {

/// Counter-based random stream. A stream is (key, counter); each draw hashes
/// the pair, so results never depend on what other streams have consumed.
/// `split` derives an independent child keyed by a tag.
class Stream {
 public:
  explicit Stream(std::uint64_t seed);

  Stream split(std::uint64_t tag) const;
  Stream split(std::string_view tag) const;

  std::uint64_t next_u64();
  /// Uniform on the open interval (0, 1).
  double uniform();
  double normal();
  Tensor normal(std::size_t rows, std::size_t cols);
  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n);
  /// Gamma(shape, 1) draw, shape > 0.
  double gamma(double shape);

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

 private:
  Stream(std::uint64_t key, int) : key_(key) {}

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Supplier of standard-normal noise for reparameterized sampling.
class NoiseSource {
 public:
  virtual ~NoiseSource() = default;
  virtual Tensor draw(std::size_t rows, std::size_t cols) = 0;
};

class GaussianNoise final : public NoiseSource {
 public:
  explicit GaussianNoise(Stream stream) : stream_(stream) {}
  Tensor draw(std::size_t rows, std::size_t cols) override { return stream_.normal(rows, cols); }

 private:
  Stream stream_;
};

class ZeroNoise final : public NoiseSource {
 public:
  Tensor draw(std::size_t rows, std::size_t cols) override { return Tensor({rows, cols}); }
};

/// Hands back pre-recorded tensors in order; shapes must match the requests.
class ReplayNoise final : public NoiseSource {
 public:
  explicit ReplayNoise(std::vector<Tensor> tape) : tape_(std::move(tape)) {}
  Tensor draw(std::size_t rows, std::size_t cols) override;
  std::size_t remaining() const noexcept { return tape_.size() - next_; }

 private:
  std::vector<Tensor> tape_;
  std::size_t next_ = 0;
};

}  // namespace gsn
