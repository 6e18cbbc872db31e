// SPDX-License-Identifier: Apache-2.0

#include "gsn/data.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "gsn/error.hpp"
#include "gsn/rng.hpp"

namespace gsn {

// ---- Dataset ----------------------------------------------------------------

Dataset::Dataset(Tensor samples, std::vector<std::string> columns)
    : samples_(std::move(samples)), columns_(std::move(columns)) {
  if (samples_.rank() != 2) throw ShapeError("dataset samples must be a matrix, got " + to_string(samples_.shape()));
  const std::size_t n = size(), d = dim();
  if (n < 2) throw InvalidArgument("dataset needs at least two samples");
  if (!samples_.all_finite()) throw NumericError("dataset contains non-finite values");
  if (columns_.empty()) {
    for (std::size_t j = 0; j < d; ++j) columns_.push_back("x" + std::to_string(j));
  }
  if (columns_.size() != d) throw ShapeError("dataset has " + std::to_string(d) + " columns but " +
                                             std::to_string(columns_.size()) + " names");

  // Welford update of mean and co-moment.
  mean_ = Tensor({d});
  Tensor comoment({d, d});
  std::vector<double> delta(d);
  for (std::size_t i = 0; i < n; ++i) {
    const double count = static_cast<double>(i + 1);
    for (std::size_t j = 0; j < d; ++j) {
      delta[j] = samples_(i, j) - mean_[j];
      mean_[j] += delta[j] / count;
    }
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b) comoment(a, b) += delta[a] * (samples_(i, b) - mean_[b]);
  }
  cov_ = Tensor({d, d});
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = 0; b < d; ++b) cov_(a, b) = 0.5 * (comoment(a, b) + comoment(b, a)) / static_cast<double>(n - 1);
}

Tensor Dataset::rows(std::span<const std::size_t> index) const {
  if (index.empty()) throw ShapeError("Dataset::rows: empty selection");
  Tensor out({index.size(), dim()});
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] >= size()) throw ShapeError("Dataset::rows: index " + std::to_string(index[r]) + " out of range");
    for (std::size_t j = 0; j < dim(); ++j) out(r, j) = samples_(index[r], j);
  }
  return out;
}

// ---- generators -------------------------------------------------------------

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw InvalidArgument(what);
}

}  // namespace

Dataset make_ring_of_gaussians(std::size_t k, double radius, double std, std::size_t n, std::uint64_t seed) {
  require(k >= 1, "ring: need at least one component");
  require(radius >= 0.0 && std::isfinite(radius), "ring: radius must be non-negative");
  require(std > 0.0 && std::isfinite(std), "ring: std must be positive");
  require(n >= 2, "ring: need at least two samples");
  Stream rng = Stream(seed).split("ring");
  Tensor x({n, 2});
  for (std::size_t i = 0; i < n; ++i) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(rng.below(k)) / static_cast<double>(k);
    x(i, 0) = radius * std::cos(angle) + std * rng.normal();
    x(i, 1) = radius * std::sin(angle) + std * rng.normal();
  }
  return Dataset(std::move(x));
}

Dataset make_two_circles(std::size_t n, double inner_radius, double outer_radius, double std, std::uint64_t seed) {
  require(n >= 2, "two_circles: need at least two samples");
  require(std > 0.0 && std::isfinite(std), "two_circles: std must be positive");
  require(inner_radius >= 0.0 && outer_radius >= 0.0, "two_circles: radii must be non-negative");
  Stream rng = Stream(seed).split("two-circles");
  Tensor x({n, 2});
  for (std::size_t i = 0; i < n; ++i) {
    const double r = rng.below(2) == 0 ? inner_radius : outer_radius;
    const double angle = 2.0 * std::numbers::pi * rng.uniform();
    x(i, 0) = r * std::cos(angle) + std * rng.normal();
    x(i, 1) = r * std::sin(angle) + std * rng.normal();
  }
  return Dataset(std::move(x));
}

Dataset make_spiral(std::size_t n, double turns, double std, std::uint64_t seed) {
  require(n >= 2, "spiral: need at least two samples");
  require(std > 0.0 && std::isfinite(std), "spiral: std must be positive");
  require(turns > 0.0 && std::isfinite(turns), "spiral: turns must be positive");
  Stream rng = Stream(seed).split("spiral");
  Tensor x({n, 2});
  for (std::size_t i = 0; i < n; ++i) {
    const double u = rng.uniform();
    const double theta = 2.0 * std::numbers::pi * turns * u;
    x(i, 0) = u * std::cos(theta) + std * rng.normal();
    x(i, 1) = u * std::sin(theta) + std * rng.normal();
  }
  return Dataset(std::move(x));
}

exact::Dist random_discrete_target(std::size_t m, double concentration, std::uint64_t seed) {
  require(m >= 2, "random_discrete_target: need at least two states");
  require(concentration > 0.0 && std::isfinite(concentration), "random_discrete_target: concentration must be positive");
  Stream rng = Stream(seed).split("dirichlet");
  for (int attempt = 0; attempt < 64; ++attempt) {
    std::vector<double> g(m);
    double total = 0.0;
    bool positive = true;
    for (auto& v : g) {
      v = rng.gamma(concentration);
      positive = positive && v > 0.0;
      total += v;
    }
    if (!positive) continue;
    for (auto& v : g) v /= total;
    return exact::Dist(std::move(g));
  }
  throw NumericError("random_discrete_target: gamma draws underflowed; concentration too small");
}

// ---- CSV --------------------------------------------------------------------

std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string format_shortest(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace

CsvMatrix read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string(), "cannot open for reading");
  const std::string source = path.string();

  std::string line;
  if (!std::getline(in, line)) throw ParseError(source, 1, "missing header row");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  CsvMatrix out;
  out.header = split_line(line);
  if (out.header.empty()) throw ParseError(source, 1, "empty header row");
  const std::size_t cols = out.header.size();

  std::vector<double> values;
  std::size_t rows = 0, lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_line(line);
    if (cells.size() != cols) {
      throw ParseError(source, lineno, "expected " + std::to_string(cols) + " cells, found " + std::to_string(cells.size()));
    }
    for (const auto& c : cells) {
      double v = 0.0;
      const char* first = c.data();
      const char* last = c.data() + c.size();
      while (first < last && *first == ' ') ++first;
      const auto [ptr, ec] = std::from_chars(first, last, v);
      if (ec != std::errc() || ptr != last) throw ParseError(source, lineno, "cannot parse '" + c + "' as a real");
      if (!std::isfinite(v)) throw ParseError(source, lineno, "non-finite value '" + c + "'");
      values.push_back(v);
    }
    ++rows;
  }
  if (rows == 0) throw ParseError(source, lineno, "no data rows");
  out.values = Tensor({rows, cols}, std::move(values));
  return out;
}

void write_csv(const std::filesystem::path& path, std::span<const std::string> header, const Tensor& values) {
  if (header.size() != values.cols()) throw ShapeError("write_csv: header width does not match values");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  for (std::size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << header[j];
  out << '\n';
  const std::size_t rows = values.rows(), cols = values.cols();
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) out << (j ? "," : "") << format_real(values[i * cols + j]);
    out << '\n';
  }
  if (!out) throw IoError(path.string(), "write failed");
}

Dataset load_csv(const std::filesystem::path& path) {
  CsvMatrix m = read_csv(path);
  if (m.values.shape()[0] < 2) throw ParseError(path.string(), 2, "dataset needs at least two rows");
  return Dataset(std::move(m.values), std::move(m.header));
}

void save_csv(const Dataset& data, const std::filesystem::path& path) {
  write_csv(path, data.columns(), data.samples());
}

void save_csv(const Tensor& samples, const std::filesystem::path& path) { save_csv(Dataset(samples), path); }

}  // namespace gsn
