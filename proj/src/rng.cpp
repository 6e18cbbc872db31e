// SPDX-License-Identifier: Apache-2.0

#include "gsn/rng.hpp"

#include <cmath>
#include <numbers>

#include "gsn/error.hpp"

namespace gsn {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// FNV-1a, only used to turn string tags into integers.
std::uint64_t hash_tag(std::string_view tag) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : tag) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace

Stream::Stream(std::uint64_t seed) : key_(mix64(seed + kGolden)) {}

Stream Stream::split(std::uint64_t tag) const { return Stream(mix64(key_ ^ mix64(tag * kGolden + 1)), 0); }

Stream Stream::split(std::string_view tag) const { return split(hash_tag(tag)); }

std::uint64_t Stream::next_u64() { return mix64(key_ + kGolden * ++counter_); }

double Stream::uniform() {
  // 53 random bits, then shift off zero.
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double Stream::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

Tensor Stream::normal(std::size_t rows, std::size_t cols) {
  Tensor out({rows, cols});
  for (auto& v : out.values()) v = normal();
  return out;
}

std::size_t Stream::below(std::size_t n) {
  if (n == 0) throw InvalidArgument("below(0)");
  // Rejection keeps the draw exactly uniform.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t r;
  do {
    r = next_u64();
  } while (r >= limit);
  return static_cast<std::size_t>(r % n);
}

double Stream::gamma(double shape) {
  if (!(shape > 0.0)) throw InvalidArgument("gamma shape must be positive");
  if (shape < 1.0) {
    // Boost to shape + 1, then rescale by U^(1/shape).
    const double u = uniform();
    return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
  }
  // Marsaglia & Tsang.
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

Tensor ReplayNoise::draw(std::size_t rows, std::size_t cols) {
  if (next_ >= tape_.size()) throw InvalidArgument("replay noise exhausted");
  const Tensor& t = tape_[next_];
  if (t.shape() != Shape{rows, cols}) {
    throw ShapeError("replay noise: recorded " + to_string(t.shape()) + " but requested " +
                     to_string(Shape{rows, cols}));
  }
  ++next_;
  return t;
}

}  // namespace gsn
