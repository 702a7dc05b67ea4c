#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <utility>

namespace a3s {

/// xoshiro256** (Blackman & Vigna), state seeded through splitmix64.
///
/// Every derived quantity is spelled out so that other implementations can
/// reproduce the stream exactly:
///   uniform()      = (next() >> 11) * 2^-53
///   normal()       = Box-Muller cosine branch on (1 - uniform(), uniform())
///   bounded(n)     = rejection sampling on next() % n above the bias zone
///   shuffle(v)     = Fisher-Yates from the back, swap(i, bounded(i + 1))
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  /// Independent stream for (seed, index), e.g. per-image generation.
  static Rng substream(std::uint64_t seed, std::uint64_t index);

  std::uint64_t next();
  double uniform();
  double uniform(double lo, double hi);
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  std::uint64_t bounded(std::uint64_t n);
  int uniform_int(int lo, int hi_inclusive);

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(bounded(i));
      using std::swap;
      swap(items[i - 1], items[j]);
    }
  }

  const std::array<std::uint64_t, 4>& state() const { return s_; }

 private:
  std::array<std::uint64_t, 4> s_{};
};

std::uint64_t splitmix64(std::uint64_t& state);

}  // namespace a3s
