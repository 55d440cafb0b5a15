#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "rqen/tensor.hpp"

namespace rqen {

// 8-bit image, interleaved channels, row-major.
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 3;  // 3 (PPM) or 1 (PGM)
  std::vector<std::uint8_t> pixels;

  std::uint8_t& at(std::size_t y, std::size_t x, std::size_t c) {
    return pixels[(y * width + x) * channels + c];
  }
  std::uint8_t at(std::size_t y, std::size_t x, std::size_t c) const {
    return pixels[(y * width + x) * channels + c];
  }
  bool operator==(const Image&) const = default;
};

// Binary P6 / P5 with maxval 255; header comments are skipped.
Image read_pnm(const std::filesystem::path& path);
void write_pnm(const std::filesystem::path& path, const Image& image);

// [channels, height, width] with values scaled to [0,1].
Tensor image_to_tensor(const Image& image);

}  // namespace rqen
