#pragma once

// Test-only dataset fixtures written to a temporary directory.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "skinnet/image.hpp"
#include "skinnet/rng.hpp"

namespace skinnet::testing {

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag = "skinnet") {
    Rng rng(std::random_device{}());
    path = std::filesystem::temp_directory_path() / (tag + "_" + std::to_string(rng.next_u64()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

/// Class k gets a distinct dominant color plus seeded noise, so a classifier
/// can separate classes but images within a class differ.
inline Image class_image(std::size_t class_index, std::size_t size, Rng& rng) {
  static constexpr std::uint8_t kColors[][3] = {{200, 60, 60}, {60, 200, 60}, {60, 60, 200}, {200, 200, 60}};
  Image img{size, size, std::vector<std::uint8_t>(size * size * 3)};
  const auto& base = kColors[class_index % 4];
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = base[c] + rng.uniform(-40, 40) + ((x / 4 + y / 4 + class_index) % 2 ? 15 : -15);
        img.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
      }
  return img;
}

/// Writes `<root>/{train,test}/<class>/img_NNNN.png`.
inline void write_dataset(const std::filesystem::path& root, const std::vector<std::string>& classes,
                          std::size_t train_per_class, std::size_t test_per_class, std::size_t size,
                          std::uint64_t seed = 1) {
  Rng rng(seed);
  for (const char* split : {"train", "test"}) {
    const std::size_t n = std::string(split) == "train" ? train_per_class : test_per_class;
    for (std::size_t c = 0; c < classes.size(); ++c) {
      const auto dir = root / split / classes[c];
      std::filesystem::create_directories(dir);
      for (std::size_t i = 0; i < n; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "img_%04zu.png", i);
        write_png(dir / name, class_image(c, size, rng));
      }
    }
  }
}

}  // namespace skinnet::testing
