#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "skinnet/image.hpp"
#include "skinnet/rng.hpp"
#include "skinnet/tensor.hpp"

namespace skinnet {

enum class Normalization { kScale01, kImagenet };

const char* to_string(Normalization n);
/// Accepts "scale01" and "imagenet" (alias "imagenet_mean").
Normalization parse_normalization(std::string_view s);

inline constexpr float kImagenetMean[3] = {0.485f, 0.456f, 0.406f};
inline constexpr float kImagenetStd[3] = {0.229f, 0.224f, 0.225f};

enum class Split { kTrain, kTest };

const char* to_string(Split s);

/// `<root>/{train,test}/<ClassName>/*.{jpg,jpeg,png}`. Class index is the
/// rank of the directory name in byte-wise lexicographic order; files within
/// a class are sorted by path.
struct DatasetIndex {
  std::filesystem::path root;
  std::vector<std::string> class_names;
  std::vector<std::vector<std::filesystem::path>> train;  // per class
  std::vector<std::vector<std::filesystem::path>> test;

  std::size_t num_classes() const noexcept { return class_names.size(); }
  const std::vector<std::vector<std::filesystem::path>>& files(Split s) const { return s == Split::kTrain ? train : test; }
  std::size_t count(Split s) const;
  std::size_t count(Split s, std::size_t class_index) const { return files(s).at(class_index).size(); }

  struct Item {
    std::filesystem::path path;
    std::size_t label;
  };
  /// Class-major, path-sorted listing of a split.
  std::vector<Item> items(Split s) const;
};

/// Errors (kData): "no classes found", "missing split directory",
/// "class mismatch across splits", "empty class directory", undecodable file.
DatasetIndex scan_dataset(const std::filesystem::path& root);

struct Sample {
  Tensor pixels;  // [3, size, size]
  Tensor label;   // one-hot [num_classes]
  std::size_t class_index = 0;
  std::string source_path;
};

/// Decode, resize to size x size (bilinear) and normalize.
Tensor load_pixels(const std::filesystem::path& path, Normalization norm, std::size_t size = 150);
Sample load_sample(const std::filesystem::path& path, std::size_t class_index, std::size_t num_classes,
                   Normalization norm, std::size_t size = 150);
/// Raw 0..255 planar tensor -> normalized, in place.
void normalize(Tensor& pixels, Normalization norm);

struct AugmentConfig {
  double rotation_max_deg = 20.0;
  double shift_max_frac = 0.10;
  double zoom_max_frac = 0.10;
  bool enabled = true;

  void validate() const;
};

/// One concrete draw. Forward map about the image center c:
/// out = c + zoom * (R(rotation) (in - c) + shift), rotation counter-clockwise
/// on screen, shift in pixels.
struct AffineParams {
  double rotation_deg = 0.0;
  double shift_x = 0.0;
  double shift_y = 0.0;
  double zoom = 1.0;

  bool is_identity() const noexcept {
    return rotation_deg == 0.0 && shift_x == 0.0 && shift_y == 0.0 && zoom == 1.0;
  }
};

AffineParams draw_affine(const AugmentConfig& cfg, std::size_t width, std::size_t height, Rng& rng);
/// Inverse-mapped bilinear resampling of a planar [c, h, w] tensor with
/// edge-replicate fill. Output is clamped to each channel's input range.
Tensor apply_affine(const Tensor& pixels, const AffineParams& params);
Sample augment(const Sample& s, const AugmentConfig& cfg, Rng& rng);

struct Batch {
  Tensor images;  // [b, 3, size, size]
  Tensor labels;  // [b, num_classes]
  std::vector<std::size_t> class_indices;
  std::vector<std::string> source_paths;
};

struct LoaderOptions {
  std::size_t image_size = 150;
  Normalization normalization = Normalization::kScale01;
};

/// One pass over a split. Training order is a seeded permutation and each
/// sample's augmentation draw comes from its own child stream, so decoding
/// may run in parallel without changing the result. The test split is never
/// shuffled or augmented. The final partial batch is kept.
class BatchStream {
 public:
  BatchStream(const DatasetIndex& index, Split split, std::size_t batch_size, bool shuffle,
              const AugmentConfig& augment, const Rng& rng, LoaderOptions options = {});

  std::size_t num_batches() const noexcept { return (order_.size() + batch_size_ - 1) / batch_size_; }
  std::size_t num_samples() const noexcept { return order_.size(); }
  std::optional<Batch> next();

 private:
  std::vector<DatasetIndex::Item> order_;
  std::size_t num_classes_;
  std::size_t batch_size_;
  std::size_t cursor_ = 0;
  AugmentConfig augment_;
  bool augmenting_;
  Rng rng_;
  LoaderOptions options_;
};

}  // namespace skinnet
