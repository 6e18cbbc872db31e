// SPDX-License-Identifier: Apache-2.0

#include "gsn/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <string>

#include "gsn/error.hpp"

namespace gsn {

Image::Image(std::size_t w, std::size_t h, Rgb fill) : width(w), height(h), pixels(w * h, fill) {
  if (w == 0 || h == 0) throw InvalidArgument("Image: dimensions must be positive");
}

Image scatter(const std::vector<ScatterLayer>& layers, std::size_t size) {
  Image img(size, size);
  double lo_x = std::numeric_limits<double>::infinity(), hi_x = -lo_x, lo_y = lo_x, hi_y = -lo_x;
  for (const auto& l : layers) {
    if (l.points->rank() != 2 || l.points->cols() < 2) throw ShapeError("scatter: points must be n x 2 or wider");
    for (std::size_t i = 0; i < l.points->rows(); ++i) {
      lo_x = std::min(lo_x, (*l.points)(i, 0));
      hi_x = std::max(hi_x, (*l.points)(i, 0));
      lo_y = std::min(lo_y, (*l.points)(i, 1));
      hi_y = std::max(hi_y, (*l.points)(i, 1));
    }
  }
  if (!std::isfinite(lo_x)) return img;

  const double cx = 0.5 * (lo_x + hi_x), cy = 0.5 * (lo_y + hi_y);
  const double half = std::max({0.5 * (hi_x - lo_x), 0.5 * (hi_y - lo_y), 1e-9}) * 1.05;
  const double scale = static_cast<double>(size - 1) / (2.0 * half);
  auto to_px = [&](double x, double y) {
    const double px = (x - (cx - half)) * scale;
    const double py = ((cy + half) - y) * scale;
    return std::pair{static_cast<long>(std::lround(px)), static_cast<long>(std::lround(py))};
  };
  const long n = static_cast<long>(size);

  const auto [ox, oy] = to_px(0.0, 0.0);
  const Rgb axis{200, 200, 200};
  if (ox >= 0 && ox < n)
    for (long y = 0; y < n; ++y) img.at(ox, y) = axis;
  if (oy >= 0 && oy < n)
    for (long x = 0; x < n; ++x) img.at(x, oy) = axis;

  for (const auto& l : layers) {
    for (std::size_t i = 0; i < l.points->rows(); ++i) {
      const auto [px, py] = to_px((*l.points)(i, 0), (*l.points)(i, 1));
      for (long dy = -l.radius; dy <= l.radius; ++dy)
        for (long dx = -l.radius; dx <= l.radius; ++dx) {
          const long x = px + dx, y = py + dy;
          if (x >= 0 && x < n && y >= 0 && y < n) img.at(x, y) = l.color;
        }
    }
  }
  return img;
}

void write_ppm(const std::filesystem::path& path, const Image& image) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  for (const auto& p : image.pixels) {
    const char rgb[3] = {static_cast<char>(p.r), static_cast<char>(p.g), static_cast<char>(p.b)};
    out.write(rgb, 3);
  }
  if (!out) throw IoError(path.string(), "write failed");
}

}  // namespace gsn
