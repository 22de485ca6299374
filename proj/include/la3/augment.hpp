#pragma once

// The 16-operation augmentation kernel: the AutoAugment operation set without
// SamplePairing, plus Identity. All operations are pure functions on 8-bit
// rasters; randomness enters only through explicitly sampled magnitudes.

#include <algorithm>
#include <array>
#include <cmath>
#include <compare>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "la3/common.hpp"

namespace la3 {

/// H x W x C 8-bit image, row-major with interleaved channels.
struct ImageRaster {
  int height = 0;
  int width = 0;
  int channels = 1;
  std::vector<std::uint8_t> pixels;

  ImageRaster() = default;
  ImageRaster(int h, int w, int c, std::uint8_t fill = 0)
      : height(h), width(w), channels(c), pixels(static_cast<std::size_t>(h) * w * c, fill) {
    if (h <= 0 || w <= 0 || (c != 1 && c != 3)) throw input_error("ImageRaster: bad dimensions");
  }

  std::size_t size() const { return pixels.size(); }
  std::size_t offset(int y, int x, int c = 0) const {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
  std::uint8_t& at(int y, int x, int c = 0) { return pixels[offset(y, x, c)]; }
  std::uint8_t at(int y, int x, int c = 0) const { return pixels[offset(y, x, c)]; }
  bool same_shape(const ImageRaster& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }
  bool operator==(const ImageRaster&) const = default;
};

inline void validate(const ImageRaster& img) {
  if (img.height <= 0 || img.width <= 0 || (img.channels != 1 && img.channels != 3) ||
      img.pixels.size() != static_cast<std::size_t>(img.height) * img.width * img.channels)
    throw input_error("invalid image raster");
}

enum class OpKind : std::uint8_t {
  Identity = 0,
  ShearX,
  ShearY,
  TranslateX,
  TranslateY,
  Rotate,
  AutoContrast,
  Invert,
  Equalize,
  Solarize,
  Posterize,
  Contrast,
  Color,
  Brightness,
  Sharpness,
  Cutout,
};

inline constexpr int kNumOps = 16;
inline constexpr int kTripleLength = 3;
inline constexpr int kNumTriples = kNumOps * kNumOps * kNumOps;  // 4096

inline constexpr std::array<std::string_view, kNumOps> kOpNames = {
    "Identity",     "ShearX", "ShearY",   "TranslateX", "TranslateY", "Rotate",
    "AutoContrast", "Invert", "Equalize", "Solarize",   "Posterize",  "Contrast",
    "Color",        "Brightness", "Sharpness", "Cutout"};

constexpr int op_code(OpKind k) { return static_cast<int>(k); }
inline std::string_view op_name(OpKind k) { return kOpNames[static_cast<std::size_t>(k)]; }

inline OpKind op_from_code(int code) {
  if (code < 0 || code >= kNumOps) throw input_error("op code out of range: " + std::to_string(code));
  return static_cast<OpKind>(code);
}

inline OpKind op_from_name(std::string_view name) {
  for (int i = 0; i < kNumOps; ++i)
    if (kOpNames[static_cast<std::size_t>(i)] == name) return static_cast<OpKind>(i);
  throw input_error("unknown op name '" + std::string(name) + "'");
}

/// The canonical op list in code order.
inline std::array<OpKind, kNumOps> list_ops() {
  std::array<OpKind, kNumOps> ops{};
  for (int i = 0; i < kNumOps; ++i) ops[static_cast<std::size_t>(i)] = static_cast<OpKind>(i);
  return ops;
}

/// Ordered sequence of three ops. Ordering and codes are lexicographic on op codes.
struct AugTriple {
  std::array<OpKind, kTripleLength> ops{OpKind::Identity, OpKind::Identity, OpKind::Identity};

  constexpr AugTriple() = default;
  constexpr AugTriple(OpKind a, OpKind b, OpKind c) : ops{a, b, c} {}

  int code() const { return op_code(ops[0]) * kNumOps * kNumOps + op_code(ops[1]) * kNumOps + op_code(ops[2]); }

  static AugTriple from_code(int code) {
    if (code < 0 || code >= kNumTriples) throw input_error("triple code out of range");
    return {static_cast<OpKind>(code / (kNumOps * kNumOps)), static_cast<OpKind>((code / kNumOps) % kNumOps),
            static_cast<OpKind>(code % kNumOps)};
  }

  static AugTriple from_codes(int a, int b, int c) { return {op_from_code(a), op_from_code(b), op_from_code(c)}; }

  OpKind operator[](std::size_t i) const { return ops[i]; }
  OpKind& operator[](std::size_t i) { return ops[i]; }

  auto operator<=>(const AugTriple&) const = default;
  bool operator==(const AugTriple&) const = default;

  std::string to_string() const {
    return "(" + std::string(op_name(ops[0])) + "," + std::string(op_name(ops[1])) + "," +
           std::string(op_name(ops[2])) + ")";
  }
};

/// Per-op magnitude range. The resolved value is
///   center + sign * base,  base = lo + m (hi - lo)   (or hi - m (hi - lo) when reversed)
/// with m uniform on [0, 1] and sign = +-1 for signed ops.
struct MagnitudeSpec {
  bool uses_magnitude = false;
  double lo = 0.0;
  double hi = 0.0;
  bool is_signed = false;
  bool reversed = false;
  double center = 0.0;
};

/// Translate is a fraction of the image extent, Cutout a fraction of min(H, W);
/// Contrast/Color/Brightness/Sharpness resolve to an enhancement factor 1 +- 0.9m.
inline const MagnitudeSpec& magnitude_spec(OpKind kind) {
  static const std::array<MagnitudeSpec, kNumOps> table = {{
      {false, 0, 0, false, false, 0},    // Identity
      {true, 0, 0.3, true, false, 0},    // ShearX
      {true, 0, 0.3, true, false, 0},    // ShearY
      {true, 0, 0.45, true, false, 0},   // TranslateX
      {true, 0, 0.45, true, false, 0},   // TranslateY
      {true, 0, 30, true, false, 0},     // Rotate (degrees)
      {false, 0, 0, false, false, 0},    // AutoContrast
      {false, 0, 0, false, false, 0},    // Invert
      {false, 0, 0, false, false, 0},    // Equalize
      {true, 0, 256, false, true, 0},    // Solarize threshold 256 -> 0
      {true, 4, 8, false, true, 0},      // Posterize bits 8 -> 4
      {true, 0, 0.9, true, false, 1.0},  // Contrast
      {true, 0, 0.9, true, false, 1.0},  // Color
      {true, 0, 0.9, true, false, 1.0},  // Brightness
      {true, 0, 0.9, true, false, 1.0},  // Sharpness
      {true, 0, 0.2, false, false, 0},   // Cutout side
  }};
  return table[static_cast<std::size_t>(kind)];
}

struct Magnitude {
  double normalized = 0.0;  // m in [0, 1]
  double value = 0.0;       // resolved, op units
  double pos_x = 0.5;       // Cutout centre, fraction of width
  double pos_y = 0.5;       // Cutout centre, fraction of height
};

inline Magnitude resolve_magnitude(OpKind kind, double m, int sign = 1) {
  const auto& spec = magnitude_spec(kind);
  Magnitude out;
  out.normalized = m;
  if (!spec.uses_magnitude) return out;
  const double base = spec.reversed ? spec.hi - m * (spec.hi - spec.lo) : spec.lo + m * (spec.hi - spec.lo);
  out.value = spec.center + (spec.is_signed ? sign : 1) * base;
  return out;
}

/// Draw order: m, then a sign draw for signed ops, then two position draws for Cutout.
inline Magnitude sample_magnitude(OpKind kind, Rng& rng) {
  const double m = rng.uniform();
  const auto& spec = magnitude_spec(kind);
  int sign = 1;
  if (spec.is_signed) sign = rng.coin() ? -1 : 1;
  Magnitude out = resolve_magnitude(kind, m, sign);
  if (kind == OpKind::Cutout) {
    out.pos_x = rng.uniform();
    out.pos_y = rng.uniform();
  }
  return out;
}

/// Posterize bit count from a resolved magnitude.
inline int posterize_bits(double value) { return std::clamp(static_cast<int>(std::floor(value + 0.5)), 0, 8); }

namespace detail {

inline constexpr std::uint8_t kFill = 128;

inline std::uint8_t clamp_round(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
}

inline int round_half_up(double v) { return static_cast<int>(std::floor(v + 0.5)); }

/// Nearest-neighbour inverse mapping; out-of-range sources become kFill.
template <typename Map>
ImageRaster remap(const ImageRaster& src, Map&& source_of) {
  ImageRaster out = src;
  for (int y = 0; y < src.height; ++y) {
    for (int x = 0; x < src.width; ++x) {
      auto [sx, sy] = source_of(static_cast<double>(x), static_cast<double>(y));
      const int ix = round_half_up(sx);
      const int iy = round_half_up(sy);
      const bool inside = ix >= 0 && ix < src.width && iy >= 0 && iy < src.height;
      for (int c = 0; c < src.channels; ++c) out.at(y, x, c) = inside ? src.at(iy, ix, c) : kFill;
    }
  }
  return out;
}

inline int gray_of(const ImageRaster& img, int y, int x) {
  if (img.channels == 1) return img.at(y, x);
  return (299 * img.at(y, x, 0) + 587 * img.at(y, x, 1) + 114 * img.at(y, x, 2) + 500) / 1000;
}

/// out = degenerate + factor * (image - degenerate), rounded and clamped.
inline ImageRaster blend(const ImageRaster& degenerate, const ImageRaster& img, double factor) {
  ImageRaster out = img;
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    const double d = degenerate.pixels[i];
    out.pixels[i] = clamp_round(d + factor * (static_cast<double>(img.pixels[i]) - d));
  }
  return out;
}

template <typename Lut>
ImageRaster per_channel_lut(const ImageRaster& img, Lut&& make_lut) {
  ImageRaster out = img;
  for (int c = 0; c < img.channels; ++c) {
    std::array<std::int64_t, 256> hist{};
    for (std::size_t i = static_cast<std::size_t>(c); i < img.pixels.size(); i += static_cast<std::size_t>(img.channels))
      ++hist[img.pixels[i]];
    const std::optional<std::array<std::uint8_t, 256>> lut = make_lut(hist);
    if (!lut) continue;
    for (std::size_t i = static_cast<std::size_t>(c); i < img.pixels.size(); i += static_cast<std::size_t>(img.channels))
      out.pixels[i] = (*lut)[img.pixels[i]];
  }
  return out;
}

inline ImageRaster auto_contrast(const ImageRaster& img) {
  return per_channel_lut(img, [](const std::array<std::int64_t, 256>& h) -> std::optional<std::array<std::uint8_t, 256>> {
    int lo = 0, hi = 255;
    while (lo < 256 && h[static_cast<std::size_t>(lo)] == 0) ++lo;
    while (hi >= 0 && h[static_cast<std::size_t>(hi)] == 0) --hi;
    if (lo >= hi) return std::nullopt;
    std::array<std::uint8_t, 256> lut{};
    const int span = hi - lo;
    for (int p = 0; p < 256; ++p) {
      const int v = std::clamp(p - lo, 0, span);
      lut[static_cast<std::size_t>(p)] = static_cast<std::uint8_t>((v * 255 + span / 2) / span);
    }
    return lut;
  });
}

inline ImageRaster equalize(const ImageRaster& img) {
  return per_channel_lut(img, [](const std::array<std::int64_t, 256>& h) -> std::optional<std::array<std::uint8_t, 256>> {
    std::int64_t total = 0;
    int last = -1;
    int nonzero = 0;
    for (int i = 0; i < 256; ++i) {
      if (h[static_cast<std::size_t>(i)] > 0) {
        last = i;
        ++nonzero;
      }
      total += h[static_cast<std::size_t>(i)];
    }
    if (nonzero <= 1) return std::nullopt;
    const std::int64_t step = (total - h[static_cast<std::size_t>(last)]) / 255;
    if (step == 0) return std::nullopt;
    std::array<std::uint8_t, 256> lut{};
    std::int64_t n = step / 2;
    for (int i = 0; i < 256; ++i) {
      lut[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(std::min<std::int64_t>(255, n / step));
      n += h[static_cast<std::size_t>(i)];
    }
    return lut;
  });
}

inline ImageRaster smooth(const ImageRaster& img) {
  ImageRaster out = img;
  for (int y = 1; y + 1 < img.height; ++y)
    for (int x = 1; x + 1 < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) {
        int sum = 4 * img.at(y, x, c);
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) sum += img.at(y + dy, x + dx, c);
        out.at(y, x, c) = static_cast<std::uint8_t>((sum + 6) / 13);
      }
  return out;
}

}  // namespace detail

/// Applies one op with a resolved magnitude. The input is never modified;
/// geometric ops fill vacated pixels with 128.
inline ImageRaster apply_op(const ImageRaster& image, OpKind kind, const Magnitude& mag) {
  validate(image);
  const double cx = (image.width - 1) / 2.0;
  const double cy = (image.height - 1) / 2.0;
  const double v = mag.value;
  using P = std::pair<double, double>;
  switch (kind) {
    case OpKind::Identity:
      return image;
    case OpKind::ShearX:
      return detail::remap(image, [&](double x, double y) { return P{x + v * (y - cy), y}; });
    case OpKind::ShearY:
      return detail::remap(image, [&](double x, double y) { return P{x, y + v * (x - cx)}; });
    case OpKind::TranslateX: {
      const int dx = detail::round_half_up(v * image.width);
      return detail::remap(image, [&](double x, double y) { return P{x - dx, y}; });
    }
    case OpKind::TranslateY: {
      const int dy = detail::round_half_up(v * image.height);
      return detail::remap(image, [&](double x, double y) { return P{x, y - dy}; });
    }
    case OpKind::Rotate: {
      const double t = v * std::numbers::pi / 180.0;
      const double c = std::cos(t), s = std::sin(t);
      return detail::remap(image, [&](double x, double y) {
        return P{c * (x - cx) + s * (y - cy) + cx, -s * (x - cx) + c * (y - cy) + cy};
      });
    }
    case OpKind::AutoContrast:
      return detail::auto_contrast(image);
    case OpKind::Invert: {
      ImageRaster out = image;
      for (auto& p : out.pixels) p = static_cast<std::uint8_t>(255 - p);
      return out;
    }
    case OpKind::Equalize:
      return detail::equalize(image);
    case OpKind::Solarize: {
      ImageRaster out = image;
      for (auto& p : out.pixels)
        if (static_cast<double>(p) >= v) p = static_cast<std::uint8_t>(255 - p);
      return out;
    }
    case OpKind::Posterize: {
      const int bits = posterize_bits(v);
      const auto mask = static_cast<std::uint8_t>(0xFFu << (8 - bits));
      ImageRaster out = image;
      for (auto& p : out.pixels) p = static_cast<std::uint8_t>(p & mask);
      return out;
    }
    case OpKind::Contrast: {
      std::int64_t sum = 0;
      for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x) sum += detail::gray_of(image, y, x);
      const double mean = static_cast<double>(sum) / (static_cast<double>(image.height) * image.width);
      ImageRaster degenerate = image;
      std::fill(degenerate.pixels.begin(), degenerate.pixels.end(),
                static_cast<std::uint8_t>(detail::round_half_up(mean)));
      return detail::blend(degenerate, image, v);
    }
    case OpKind::Color: {
      if (image.channels == 1) return image;
      ImageRaster degenerate = image;
      for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x) {
          const auto g = static_cast<std::uint8_t>(detail::gray_of(image, y, x));
          for (int c = 0; c < image.channels; ++c) degenerate.at(y, x, c) = g;
        }
      return detail::blend(degenerate, image, v);
    }
    case OpKind::Brightness: {
      ImageRaster black = image;
      std::fill(black.pixels.begin(), black.pixels.end(), std::uint8_t{0});
      return detail::blend(black, image, v);
    }
    case OpKind::Sharpness:
      return detail::blend(detail::smooth(image), image, v);
    case OpKind::Cutout: {
      ImageRaster out = image;
      const int side = detail::round_half_up(v * std::min(image.height, image.width));
      if (side <= 0) return out;
      const int x0 = static_cast<int>(std::floor(mag.pos_x * image.width)) - side / 2;
      const int y0 = static_cast<int>(std::floor(mag.pos_y * image.height)) - side / 2;
      for (int y = std::max(0, y0); y < std::min(image.height, y0 + side); ++y)
        for (int x = std::max(0, x0); x < std::min(image.width, x0 + side); ++x)
          for (int c = 0; c < image.channels; ++c) out.at(y, x, c) = detail::kFill;
      return out;
    }
  }
  throw input_error("apply_op: unknown op kind " + std::to_string(static_cast<int>(kind)));
}

struct AppliedOp {
  OpKind kind;
  Magnitude magnitude;
};

/// Applies the three ops in order, each with a freshly sampled magnitude.
inline ImageRaster apply_triple(const ImageRaster& image, const AugTriple& triple, Rng& rng,
                                std::vector<AppliedOp>* trace = nullptr) {
  ImageRaster out = image;
  for (OpKind k : triple.ops) {
    const Magnitude mag = sample_magnitude(k, rng);
    if (trace) trace->push_back({k, mag});
    out = apply_op(out, k, mag);
  }
  return out;
}

}  // namespace la3
