#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>

namespace attnpool {

// SplitMix64 (Steele, Lea & Flood). Every random quantity in the library is
// drawn from this generator so that datasets, sketches and initializations
// reproduce bit-exactly across platforms and implementations.
class SplitMix64 {
 public:
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

  explicit SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

  std::uint64_t next() noexcept {
    std::uint64_t z = (state_ += kGolden);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform on (0, 1]: top 53 bits plus one ulp, so log() is always finite.
  double uniform01() noexcept { return static_cast<double>((next() >> 11) + 1) * 0x1.0p-53; }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform01(); }

  // next() mod n. The modulo bias is below 2^-40 for every n used here.
  std::uint64_t below(std::uint64_t n) noexcept { return next() % n; }

  // Box-Muller, cosine branch only: each normal consumes exactly two draws.
  double normal() noexcept {
    const double u1 = uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  std::uint64_t state() const noexcept { return state_; }

 private:
  std::uint64_t state_;
};

// Independent sub-seed for stream `index` of a run seeded with `seed`.
inline std::uint64_t split_seed(std::uint64_t seed, std::uint64_t index) noexcept {
  SplitMix64 g(seed + (index + 1) * SplitMix64::kGolden);
  return g.next();
}

// Fisher-Yates, walking from the back.
template <typename T>
void shuffle(std::span<T> items, SplitMix64& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = rng.below(i);
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace attnpool
