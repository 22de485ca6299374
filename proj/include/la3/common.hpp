#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace la3 {

enum class ErrorKind {
  invalid_config,
  invalid_input,
  shape,
  usage,
  format,
  io,
  evaluator_unavailable,
};

/// Base for every error raised by the library. The kind drives CLI exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error config_error(const std::string& msg) { return {ErrorKind::invalid_config, msg}; }
inline Error input_error(const std::string& msg) { return {ErrorKind::invalid_input, msg}; }
inline Error shape_error(const std::string& msg) { return {ErrorKind::shape, msg}; }
inline Error usage_error(const std::string& msg) { return {ErrorKind::usage, msg}; }
inline Error format_error(const std::string& msg) { return {ErrorKind::format, msg}; }
inline Error io_error(const std::string& msg) { return {ErrorKind::io, msg}; }
inline Error evaluator_error(const std::string& msg) {
  return {ErrorKind::evaluator_unavailable, msg};
}

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Derives an independent stream seed from a parent seed and a list of keys.
/// Used for every (master seed, iteration, label) substream so results do not
/// depend on evaluation order.
template <typename... Keys>
constexpr std::uint64_t derive_seed(std::uint64_t seed, Keys... keys) noexcept {
  std::uint64_t h = mix64(seed + 0x9E3779B97F4A7C15ULL);
  ((h = mix64(h ^ (static_cast<std::uint64_t>(keys) + 0x9E3779B97F4A7C15ULL + (h << 6) + (h >> 2)))),
   ...);
  return h;
}

/// Portable deterministic generator (splitmix64 stream). All distributions used
/// by the library are defined on top of it explicitly, so streams are
/// reproducible across standard libraries and easy to port to other languages.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0) noexcept : state_(seed) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return ~result_type{0}; }

  result_type operator()() noexcept { return next(); }

  result_type next() noexcept {
    state_ += 0x9E3779B97F4A7C15ULL;
    return mix64(state_);
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Uniform integer on [0, n). n must be positive.
  std::size_t index(std::size_t n) noexcept {
    auto i = static_cast<std::size_t>(uniform() * static_cast<double>(n));
    return i < n ? i : n - 1;
  }

  bool coin() noexcept { return uniform() < 0.5; }

  std::uint64_t state() const noexcept { return state_; }

 private:
  std::uint64_t state_;
};

/// In-place Fisher-Yates shuffle with the portable index draw.
template <typename Container>
void shuffle(Container& items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::size_t j = rng.index(i);
    using std::swap;
    swap(items[i - 1], items[j]);
  }
}

/// FNV-1a 64-bit digest rendered as 16 hex characters.
inline std::string digest_hex(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kHex[h & 0xF];
    h >>= 4;
  }
  return out;
}

}  // namespace la3
