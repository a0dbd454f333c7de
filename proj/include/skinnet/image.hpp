#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "skinnet/tensor.hpp"

namespace skinnet {

/// 8-bit interleaved RGB.
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> rgb;

  std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c) { return rgb[(y * width + x) * 3 + c]; }
  std::uint8_t at(std::size_t x, std::size_t y, std::size_t c) const { return rgb[(y * width + x) * 3 + c]; }
};

struct ImageInfo {
  std::size_t width = 0;
  std::size_t height = 0;
};

/// PNG or JPEG, chosen by magic bytes. Alpha is dropped and grayscale is
/// replicated to three channels. Throws kData on anything undecodable.
Image decode_image(const std::filesystem::path& path);
/// Reads only the header.
ImageInfo probe_image(const std::filesystem::path& path);

void write_png(const std::filesystem::path& path, const Image& image);
void write_jpeg(const std::filesystem::path& path, const Image& image, int quality = 95);

/// Bilinear resize (half-pixel centers, edges clamped) to a planar float
/// tensor [3, height, width] holding raw 0..255 values.
Tensor resize_bilinear(const Image& image, std::size_t width, std::size_t height);

}  // namespace skinnet
