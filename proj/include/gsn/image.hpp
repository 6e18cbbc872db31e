// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "gsn/tensor.hpp"

namespace gsn {

struct Rgb {
  std::uint8_t r = 255, g = 255, b = 255;
};

/// 8-bit RGB raster, row-major from the top-left corner.
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<Rgb> pixels;

  Image(std::size_t w, std::size_t h, Rgb fill = {});
  Rgb& at(std::size_t x, std::size_t y) { return pixels[y * width + x]; }
};

inline constexpr std::size_t kGridSize = 512;

struct ScatterLayer {
  const Tensor* points;  // n x 2, first two columns used
  Rgb color;
  int radius = 1;
};

/// Square scatter plot over the joint bounding box of all layers plus a 5%
/// margin, with axes through the origin when it is in view. Later layers
/// paint over earlier ones.
Image scatter(const std::vector<ScatterLayer>& layers, std::size_t size = kGridSize);

/// Binary P6 with maxval 255: header "P6\n<w> <h>\n255\n" then RGB bytes.
void write_ppm(const std::filesystem::path& path, const Image& image);

}  // namespace gsn
