#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "la3/augment.hpp"
#include "la3/common.hpp"

namespace la3 {

struct LabeledDataset {
  std::vector<ImageRaster> images;
  std::vector<int> labels;
  int num_classes = 0;

  std::size_t size() const { return images.size(); }
  bool empty() const { return images.empty(); }

  std::vector<std::size_t> class_counts() const {
    std::vector<std::size_t> counts(static_cast<std::size_t>(std::max(num_classes, 0)), 0);
    for (int y : labels) ++counts[static_cast<std::size_t>(y)];
    return counts;
  }

  LabeledDataset subset(const std::vector<std::size_t>& indices) const {
    LabeledDataset out;
    out.num_classes = num_classes;
    out.images.reserve(indices.size());
    out.labels.reserve(indices.size());
    for (auto i : indices) {
      out.images.push_back(images[i]);
      out.labels.push_back(labels[i]);
    }
    return out;
  }

  bool operator==(const LabeledDataset&) const = default;
};

/// Checks lengths, label range, and (when `require_all_classes`) that no class is empty.
inline void validate(const LabeledDataset& ds, bool require_all_classes = true) {
  if (ds.images.size() != ds.labels.size()) throw input_error("dataset: images/labels length mismatch");
  if (ds.num_classes <= 0) throw input_error("dataset: num_classes must be positive");
  for (int y : ds.labels)
    if (y < 0 || y >= ds.num_classes) throw input_error("dataset: label out of range");
  if (require_all_classes) {
    auto counts = ds.class_counts();
    for (std::size_t c = 0; c < counts.size(); ++c)
      if (counts[c] == 0) throw input_error("dataset: class " + std::to_string(c) + " has no samples");
  }
}

// ---------------------------------------------------------------------------
// CIFAR-10 binary records: 1 label byte + 1024 R + 1024 G + 1024 B (32x32).

inline constexpr std::size_t kCifarSide = 32;
inline constexpr std::size_t kCifarPlane = kCifarSide * kCifarSide;
inline constexpr std::size_t kCifarRecord = 1 + 3 * kCifarPlane;  // 3073

inline LabeledDataset load_cifar10_binary(const std::vector<std::filesystem::path>& paths) {
  LabeledDataset ds;
  ds.num_classes = 10;
  for (const auto& path : paths) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() % kCifarRecord != 0)
      throw format_error(path.string() + ": size " + std::to_string(bytes.size()) + " is not a multiple of 3073");
    const std::size_t n = bytes.size() / kCifarRecord;
    for (std::size_t r = 0; r < n; ++r) {
      const unsigned char* rec = bytes.data() + r * kCifarRecord;
      if (rec[0] > 9) throw format_error(path.string() + ": label byte " + std::to_string(rec[0]) + " > 9");
      ImageRaster img(32, 32, 3);
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < kCifarPlane; ++i) img.pixels[i * 3 + c] = rec[1 + c * kCifarPlane + i];
      ds.images.push_back(std::move(img));
      ds.labels.push_back(rec[0]);
    }
  }
  return ds;
}

inline void write_cifar10_binary(const std::filesystem::path& path, const LabeledDataset& ds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot write " + path.string());
  std::vector<unsigned char> rec(kCifarRecord);
  for (std::size_t k = 0; k < ds.size(); ++k) {
    const auto& img = ds.images[k];
    if (img.height != 32 || img.width != 32 || img.channels != 3)
      throw input_error("write_cifar10_binary: images must be 32x32x3");
    if (ds.labels[k] < 0 || ds.labels[k] > 9) throw input_error("write_cifar10_binary: label must be 0..9");
    rec[0] = static_cast<unsigned char>(ds.labels[k]);
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < kCifarPlane; ++i) rec[1 + c * kCifarPlane + i] = img.pixels[i * 3 + c];
    out.write(reinterpret_cast<const char*>(rec.data()), static_cast<std::streamsize>(rec.size()));
  }
  if (!out) throw io_error("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// Train/validation split.

enum class SplitMode { total_count, per_class_count };

struct SplitSpec {
  SplitMode mode = SplitMode::per_class_count;
  std::size_t val_size = 0;
  std::uint64_t seed = 0;
};

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};

/// Seeded partition of sample indices. Both index lists are returned sorted.
inline SplitIndices split_indices(const LabeledDataset& ds, const SplitSpec& spec) {
  validate(ds, false);
  SplitIndices out;
  Rng rng(spec.seed);
  std::vector<char> in_val(ds.size(), 0);
  if (spec.mode == SplitMode::total_count) {
    if (spec.val_size >= ds.size())
      throw config_error("split: val_size " + std::to_string(spec.val_size) + " must be < dataset size " +
                         std::to_string(ds.size()));
    std::vector<std::size_t> order(ds.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle(order, rng);
    for (std::size_t i = 0; i < spec.val_size; ++i) in_val[order[i]] = 1;
  } else {
    std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(ds.num_classes));
    for (std::size_t i = 0; i < ds.size(); ++i) by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);
    std::size_t total_val = 0;
    for (auto& members : by_class) {
      if (spec.val_size > members.size())
        throw config_error("split: per-class val_size " + std::to_string(spec.val_size) +
                           " exceeds a class with " + std::to_string(members.size()) + " samples");
      shuffle(members, rng);
      for (std::size_t i = 0; i < spec.val_size; ++i) in_val[members[i]] = 1;
      total_val += spec.val_size;
    }
    if (total_val >= ds.size()) throw config_error("split: validation would consume the whole dataset");
  }
  for (std::size_t i = 0; i < ds.size(); ++i) (in_val[i] ? out.val : out.train).push_back(i);
  return out;
}

inline std::pair<LabeledDataset, LabeledDataset> split_train_val(const LabeledDataset& ds, const SplitSpec& spec) {
  auto idx = split_indices(ds, spec);
  return {ds.subset(idx.train), ds.subset(idx.val)};
}

// ---------------------------------------------------------------------------
// Synthetic datasets whose classes differ in which augmentations preserve the
// class evidence.

enum class PatternKind {
  radial_blob,        // centred blob, rotation invariant
  stripes_horizontal, // orientation coded
  stripes_vertical,   // orientation coded
  dark_texture,       // brightness coded (low mean)
  bright_texture,     // brightness coded (high mean)
  blob_left,          // position coded
  blob_right,         // position coded
};

inline constexpr std::array<std::string_view, 7> kPatternNames = {
    "radial_blob", "stripes_horizontal", "stripes_vertical", "dark_texture",
    "bright_texture", "blob_left", "blob_right"};

inline std::string_view pattern_name(PatternKind k) { return kPatternNames[static_cast<std::size_t>(k)]; }

inline PatternKind pattern_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kPatternNames.size(); ++i)
    if (kPatternNames[i] == name) return static_cast<PatternKind>(i);
  throw config_error("unknown synthetic pattern '" + std::string(name) + "'");
}

struct SyntheticSpec {
  int num_classes = 4;
  int per_class = 100;
  int height = 16;
  int width = 16;
  int channels = 1;
  /// Pattern per class, cycled when shorter than num_classes.
  std::vector<PatternKind> plan = {PatternKind::stripes_horizontal, PatternKind::stripes_vertical,
                                   PatternKind::dark_texture, PatternKind::bright_texture};
  double noise = 12.0;  // per-pixel noise amplitude (uniform, +-)
  std::uint64_t seed = 0;
};

namespace detail {

inline double gauss_blob(double x, double y, double cx, double cy, double r) {
  const double dx = x - cx, dy = y - cy;
  return std::exp(-(dx * dx + dy * dy) / (2.0 * r * r));
}

inline ImageRaster render_pattern(PatternKind kind, int h, int w, int channels, double noise, Rng& rng) {
  ImageRaster img(h, w, channels);
  const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
  // Per-image nuisance parameters are always drawn in the same order.
  const double jx = rng.uniform(-1.5, 1.5);
  const double jy = rng.uniform(-1.5, 1.5);
  const double radius = rng.uniform(0.18, 0.28) * std::min(h, w);
  const double period = rng.uniform(3.5, 6.0);
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double amp = rng.uniform(50.0, 100.0);
  const double base = rng.uniform(90.0, 160.0);
  const double polarity = rng.coin() ? 1.0 : -1.0;
  const double tilt = rng.uniform(-0.15, 0.15);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double v = base;
      switch (kind) {
        case PatternKind::radial_blob:
          v = base + polarity * amp * gauss_blob(x, y, cx + jx, cy + jy, radius);
          break;
        case PatternKind::stripes_horizontal:
          v = base + amp * std::sin(2.0 * std::numbers::pi * (y + tilt * x) / period + phase);
          break;
        case PatternKind::stripes_vertical:
          v = base + amp * std::sin(2.0 * std::numbers::pi * (x + tilt * y) / period + phase);
          break;
        case PatternKind::dark_texture:
          v = 55.0 + 0.35 * amp * gauss_blob(x, y, cx + 2 * jx, cy + 2 * jy, radius * 1.5);
          break;
        case PatternKind::bright_texture:
          v = 200.0 - 0.35 * amp * gauss_blob(x, y, cx + 2 * jx, cy + 2 * jy, radius * 1.5);
          break;
        case PatternKind::blob_left:
          v = base + polarity * amp * gauss_blob(x, y, 0.25 * (w - 1) + jx, cy + 2 * jy, radius);
          break;
        case PatternKind::blob_right:
          v = base + polarity * amp * gauss_blob(x, y, 0.75 * (w - 1) + jx, cy + 2 * jy, radius);
          break;
      }
      for (int c = 0; c < channels; ++c) {
        const double n = rng.uniform(-noise, noise);
        img.at(y, x, c) = clamp_round(v + n);
      }
    }
  }
  return img;
}

}  // namespace detail

inline void validate(const SyntheticSpec& spec) {
  if (spec.num_classes < 1 || spec.per_class < 1 || spec.height < 4 || spec.width < 4)
    throw config_error("synthetic: counts and image size must be positive (size >= 4)");
  if (spec.channels != 1 && spec.channels != 3) throw config_error("synthetic: channels must be 1 or 3");
  if (spec.plan.empty()) throw config_error("synthetic: empty pattern plan");
  if (spec.noise < 0) throw config_error("synthetic: noise must be >= 0");
}

/// Balanced dataset, samples interleaved by class (0,1,..,C-1,0,1,...).
inline LabeledDataset make_synthetic(const SyntheticSpec& spec) {
  validate(spec);
  LabeledDataset ds;
  ds.num_classes = spec.num_classes;
  for (int i = 0; i < spec.per_class; ++i) {
    for (int c = 0; c < spec.num_classes; ++c) {
      Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(c), static_cast<std::uint64_t>(i)));
      const auto kind = spec.plan[static_cast<std::size_t>(c) % spec.plan.size()];
      ds.images.push_back(detail::render_pattern(kind, spec.height, spec.width, spec.channels, spec.noise, rng));
      ds.labels.push_back(c);
    }
  }
  return ds;
}

/// Exact quarter-turn rotation (counter-clockwise); square images only.
inline ImageRaster rotate90(const ImageRaster& img) {
  if (img.height != img.width) throw input_error("rotate90: image must be square");
  ImageRaster out = img;
  const int n = img.width;
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x)
      for (int c = 0; c < img.channels; ++c) out.at(n - 1 - x, y, c) = img.at(y, x, c);
  return out;
}

}  // namespace la3
