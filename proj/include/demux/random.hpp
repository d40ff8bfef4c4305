#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

namespace demux {

/// SplitMix64: a 64-bit counter-based generator. The state advances by a fixed
/// odd increment and each output is a bijective mix of the counter, so streams
/// are identical on every platform. All sampling in the engine goes through
/// this class; std:: distributions are implementation-defined and are not used.
class SplitMix64 {
 public:
  static constexpr std::string_view kName = "splitmix64";

  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform integer in [0, bound) by rejection; bound must be > 0.
  std::uint64_t below(std::uint64_t bound) {
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      const std::uint64_t r = next();
      if (r >= threshold) return r % bound;
    }
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Standard normal via Box-Muller (one value per call, the sine branch is
  /// discarded to keep the stream position a pure function of call count).
  double normal();

 private:
  std::uint64_t state_;
};

/// Partial Fisher-Yates: the first `count` entries of the returned vector are a
/// uniform sample without replacement from `items`, in draw order.
template <typename T>
std::vector<T> sample_without_replacement(std::vector<T> items, std::size_t count, SplitMix64& rng) {
  if (count > items.size()) count = items.size();
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(items.size() - i));
    std::swap(items[i], items[j]);
  }
  items.resize(count);
  return items;
}

}  // namespace demux
