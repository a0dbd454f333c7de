#include "skinnet/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <set>

namespace skinnet {

namespace fs = std::filesystem;

const char* to_string(Normalization n) { return n == Normalization::kScale01 ? "scale01" : "imagenet"; }

Normalization parse_normalization(std::string_view s) {
  if (s == "scale01") return Normalization::kScale01;
  if (s == "imagenet" || s == "imagenet_mean") return Normalization::kImagenet;
  fail(ErrorKind::kConfig, "unknown normalization mode '" + std::string(s) + "' (expected scale01 or imagenet)");
}

const char* to_string(Split s) { return s == Split::kTrain ? "train" : "test"; }

std::size_t DatasetIndex::count(Split s) const {
  std::size_t n = 0;
  for (const auto& c : files(s)) n += c.size();
  return n;
}

std::vector<DatasetIndex::Item> DatasetIndex::items(Split s) const {
  std::vector<Item> out;
  const auto& per_class = files(s);
  for (std::size_t c = 0; c < per_class.size(); ++c)
    for (const auto& p : per_class[c]) out.push_back({p, c});
  return out;
}

namespace {

[[noreturn]] void data_error(const std::string& what) { fail(ErrorKind::kData, what); }

bool is_image_file(const fs::directory_entry& e) {
  if (!e.is_regular_file()) return false;
  std::string ext = e.path().extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".jpg" || ext == ".jpeg" || ext == ".png";
}

std::set<std::string> class_dirs(const fs::path& split_dir) {
  std::set<std::string> names;
  if (!fs::is_directory(split_dir)) return names;
  for (const auto& e : fs::directory_iterator(split_dir))
    if (e.is_directory()) names.insert(e.path().filename().string());
  return names;
}

}  // namespace

DatasetIndex scan_dataset(const fs::path& root) {
  if (!fs::is_directory(root)) data_error("dataset root " + root.string() + " is not a directory");
  const fs::path train_dir = root / "train", test_dir = root / "test";
  const auto train_classes = class_dirs(train_dir);
  const auto test_classes = class_dirs(test_dir);
  if (train_classes.empty() && test_classes.empty()) data_error("no classes found under " + root.string());
  for (const auto& dir : {train_dir, test_dir})
    if (!fs::is_directory(dir)) data_error("missing split directory " + dir.string());
  if (train_classes != test_classes) {
    std::string odd;
    for (const auto& c : train_classes)
      if (!test_classes.count(c)) odd += " '" + c + "' (train only)";
    for (const auto& c : test_classes)
      if (!train_classes.count(c)) odd += " '" + c + "' (test only)";
    data_error("class mismatch across splits:" + odd);
  }

  DatasetIndex index;
  index.root = root;
  index.class_names.assign(train_classes.begin(), train_classes.end());  // std::set: lexicographic
  for (auto* split : {&index.train, &index.test}) {
    const fs::path& dir = split == &index.train ? train_dir : test_dir;
    for (const auto& name : index.class_names) {
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(dir / name))
        if (is_image_file(e)) files.push_back(e.path());
      if (files.empty()) data_error("empty class directory " + (dir / name).string());
      std::sort(files.begin(), files.end());
      for (const auto& f : files) probe_image(f);
      split->push_back(std::move(files));
    }
  }
  return index;
}

void normalize(Tensor& pixels, Normalization norm) {
  const std::size_t plane = pixels.size() / 3;
  for (std::size_t c = 0; c < 3; ++c) {
    float* p = pixels.ptr() + c * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      const float v = p[i] / 255.0f;
      p[i] = norm == Normalization::kScale01 ? v : (v - kImagenetMean[c]) / kImagenetStd[c];
    }
  }
}

Tensor load_pixels(const fs::path& path, Normalization norm, std::size_t size) {
  Tensor t = resize_bilinear(decode_image(path), size, size);
  normalize(t, norm);
  return t;
}

Sample load_sample(const fs::path& path, std::size_t class_index, std::size_t num_classes, Normalization norm,
                   std::size_t size) {
  if (class_index >= num_classes) fail(ErrorKind::kData, "class index out of range for " + path.string());
  Sample s;
  s.pixels = load_pixels(path, norm, size);
  s.label = Tensor(Shape{num_classes});
  s.label[class_index] = 1.0f;
  s.class_index = class_index;
  s.source_path = path.string();
  return s;
}

void AugmentConfig::validate() const {
  if (!(rotation_max_deg >= 0) || !(shift_max_frac >= 0) || !(zoom_max_frac >= 0))
    fail(ErrorKind::kConfig, "augmentation magnitudes must be nonnegative");
  if (!(shift_max_frac < 1) || !(zoom_max_frac < 1))
    fail(ErrorKind::kConfig, "shift and zoom fractions must be below 1");
}

AffineParams draw_affine(const AugmentConfig& cfg, std::size_t width, std::size_t height, Rng& rng) {
  AffineParams p;
  p.rotation_deg = rng.uniform(-cfg.rotation_max_deg, cfg.rotation_max_deg);
  p.shift_x = rng.uniform(-cfg.shift_max_frac, cfg.shift_max_frac) * static_cast<double>(width);
  p.shift_y = rng.uniform(-cfg.shift_max_frac, cfg.shift_max_frac) * static_cast<double>(height);
  p.zoom = rng.uniform(1.0 - cfg.zoom_max_frac, 1.0 + cfg.zoom_max_frac);
  return p;
}

Tensor apply_affine(const Tensor& pixels, const AffineParams& params) {
  if (pixels.rank() != 3) fail(ErrorKind::kShape, "apply_affine: expected [c,h,w], got " + shape_str(pixels.shape()));
  if (params.is_identity()) return pixels;
  if (!(params.zoom > 0)) fail(ErrorKind::kConfig, "apply_affine: zoom must be positive");
  const std::size_t channels = pixels.dim(0), h = pixels.dim(1), w = pixels.dim(2);
  const double cx = (static_cast<double>(w) - 1) / 2, cy = (static_cast<double>(h) - 1) / 2;
  const double theta = params.rotation_deg * std::numbers::pi / 180.0;
  const double cs = std::cos(theta), sn = std::sin(theta);
  const double max_x = static_cast<double>(w - 1), max_y = static_cast<double>(h - 1);

  Tensor out(pixels.shape());
  for (std::size_t c = 0; c < channels; ++c) {
    const float* src = pixels.ptr() + c * h * w;
    const auto [lo, hi] = std::minmax_element(src, src + h * w);
    float* dst = out.ptr() + c * h * w;
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        // inverse map: undo zoom, then shift, then rotation
        const double u = (static_cast<double>(x) - cx) / params.zoom - params.shift_x;
        const double v = (static_cast<double>(y) - cy) / params.zoom - params.shift_y;
        const double sx = std::clamp(cx + cs * u - sn * v, 0.0, max_x);
        const double sy = std::clamp(cy + sn * u + cs * v, 0.0, max_y);
        const auto x0 = static_cast<std::size_t>(sx), y0 = static_cast<std::size_t>(sy);
        const std::size_t x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
        const double wx = sx - static_cast<double>(x0), wy = sy - static_cast<double>(y0);
        const double top = (1 - wx) * src[y0 * w + x0] + wx * src[y0 * w + x1];
        const double bottom = (1 - wx) * src[y1 * w + x0] + wx * src[y1 * w + x1];
        dst[y * w + x] = std::clamp(static_cast<float>((1 - wy) * top + wy * bottom), *lo, *hi);
      }
  }
  return out;
}

Sample augment(const Sample& s, const AugmentConfig& cfg, Rng& rng) {
  cfg.validate();
  if (!cfg.enabled) return s;
  Sample out = s;
  out.pixels = apply_affine(s.pixels, draw_affine(cfg, s.pixels.dim(2), s.pixels.dim(1), rng));
  return out;
}

BatchStream::BatchStream(const DatasetIndex& index, Split split, std::size_t batch_size, bool shuffle,
                         const AugmentConfig& augment, const Rng& rng, LoaderOptions options)
    : order_(index.items(split)),
      num_classes_(index.num_classes()),
      batch_size_(batch_size),
      augment_(augment),
      augmenting_(split == Split::kTrain && augment.enabled),
      rng_(rng),
      options_(options) {
  if (batch_size == 0) fail(ErrorKind::kConfig, "batch size must be positive");
  if (order_.empty()) fail(ErrorKind::kData, std::string("split '") + to_string(split) + "' is empty");
  augment_.validate();
  if (split == Split::kTrain && shuffle) {
    Rng perm = rng_.fork("shuffle");
    perm.shuffle(std::span(order_));
  }
}

std::optional<Batch> BatchStream::next() {
  if (cursor_ >= order_.size()) return std::nullopt;
  const std::size_t start = cursor_;
  const std::size_t n = std::min(batch_size_, order_.size() - start);
  cursor_ += n;

  const std::size_t size = options_.image_size;
  const std::size_t per_image = 3 * size * size;
  Batch b{Tensor(Shape{n, 3, size, size}), Tensor(Shape{n, num_classes_}), std::vector<std::size_t>(n),
          std::vector<std::string>(n)};
  std::vector<std::string> errors(n);
  // Each sample is independent: its augmentation stream is keyed by its
  // position in the epoch, not by which thread decodes it.
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t si = 0; si < static_cast<std::ptrdiff_t>(n); ++si) {
    const auto i = static_cast<std::size_t>(si);
    const auto& item = order_[start + i];
    try {
      Tensor px = load_pixels(item.path, options_.normalization, size);
      if (augmenting_) {
        Rng draw = rng_.fork("augment", start + i);
        px = apply_affine(px, draw_affine(augment_, size, size, draw));
      }
      std::copy(px.values().begin(), px.values().end(), b.images.ptr() + i * per_image);
      b.labels.at(i, item.label) = 1.0f;
      b.class_indices[i] = item.label;
      b.source_paths[i] = item.path.string();
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }
  for (const auto& e : errors)
    if (!e.empty()) fail(ErrorKind::kData, e);
  return b;
}

}  // namespace skinnet
