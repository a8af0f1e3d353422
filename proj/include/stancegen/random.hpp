#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace stancegen {

// 64-bit FNV-1a; used for stable per-token and per-parameter seeds.
constexpr std::uint64_t fnv1a64(std::string_view s,
                                std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// mt19937_64 plus distribution code that does not depend on the standard
// library's (implementation-defined) distributions, so streams are
// reproducible across toolchains.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0) : engine_(splitmix64(seed)) {}

  // Independent stream derived from this seed and a label.
  static Rng derive(std::uint64_t seed, std::string_view label) {
    return Rng(splitmix64(seed) ^ fnv1a64(label));
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type(0); }
  result_type operator()() { return engine_(); }

  // [0, 1)
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
  // [0, n)
  std::uint64_t below(std::uint64_t n) { return static_cast<std::uint64_t>(uniform01() * n); }

  template <typename It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      const auto j = below(i);
      std::swap(first[i - 1], first[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace stancegen
