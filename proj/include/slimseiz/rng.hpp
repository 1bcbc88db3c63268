#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

namespace slimseiz {

// Counter-based deterministic PRNG.
//
// Output i of a stream is mix64(key + (i+1) * GOLDEN), where mix64 is the
// SplitMix64 finalizer and key is derived from (seed, stream index). Pure
// 64-bit integer arithmetic, so a given (seed, stream, counter) triple yields
// the same bits on every platform. Streams obtained via child() are
// statistically independent for distinct indices, which lets callers hand out
// reproducible sub-streams to parallel work items.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
      : key_(mix64(mix64(seed + kGolden) ^ mix64(stream + kStreamSalt))) {}

  // Derived stream; independent of this generator's position.
  Rng child(std::uint64_t index) const { return Rng(key_, index + 1); }

  // Seed value for handing to components that take a plain integer seed.
  std::uint64_t child_seed(std::uint64_t index) const {
    return mix64(key_ ^ mix64(index + kStreamSalt));
  }

  std::uint64_t next_u64() { return mix64(key_ + (++counter_) * kGolden); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in (0, 1]; safe as a log() argument.
  double uniform_pos() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  // Uniform integer in [0, n). n must be > 0.
  std::uint64_t uniform_int(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  // Standard normal via Box-Muller; generates pairs, caches the second value.
  double gaussian() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    const double u1 = uniform_pos();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    cached_ = r * std::sin(theta);
    has_cached_ = true;
    return r * std::cos(theta);
  }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    if (items.size() < 2) return;
    for (std::size_t i = items.size() - 1; i > 0; --i) {
      const std::size_t j = static_cast<std::size_t>(uniform_int(i + 1));
      std::swap(items[i], items[j]);
    }
  }

 private:
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;
  static constexpr std::uint64_t kStreamSalt = 0xD1B54A32D192ED03ull;

  static std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  std::uint64_t key_{0};
  std::uint64_t counter_{0};
  double cached_{0.0};
  bool has_cached_{false};
};

}  // namespace slimseiz
