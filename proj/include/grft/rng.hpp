#pragma once

#include <cstdint>
#include <span>
#include <utility>

namespace grft {

// Counter-based generator. Draw number n (1-based) of seed s is
//   splitmix64_mix(s + n * 0x9E3779B97F4A7C15)
// with the standard SplitMix64 finalizer, so any implementation can replay
// a stream from (seed, counter) alone.
//
// Derived quantities:
//   uniform()  = (u64 >> 11) * 2^-53, in [0, 1)
//   normal()   = Box-Muller on two uniforms, u1 mapped to (0, 1] as 1 - u
//   below(n)   = rejection sampling on u64 % n, rejecting the biased tail
class Rng {
 public:
  explicit Rng(std::uint64_t seed) noexcept : seed_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t counter() const noexcept { return counter_; }

  std::uint64_t next_u64() noexcept;
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept;
  double normal() noexcept;
  std::uint64_t below(std::uint64_t n) noexcept;

  // Fisher-Yates, drawing j = below(i + 1) for i from n-1 down to 1.
  template <typename T>
  void shuffle(std::span<T> items) noexcept {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  // Independent seed for a named sub-stream.
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) noexcept;

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

std::uint64_t splitmix64_mix(std::uint64_t z) noexcept;

}  // namespace grft
