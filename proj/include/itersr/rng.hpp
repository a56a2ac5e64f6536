#pragma once

#include <cstdint>
#include <string_view>

namespace itersr {

/// SplitMix64 finalizer. Used for seeding and for deriving named sub-streams.
constexpr std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// 64-bit FNV-1a over a stream name.
constexpr std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

/// Seed of the sub-stream `name`/`index`/`sub` below `seed`. All randomness in
/// the project flows through this so components can be replayed in isolation.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view name,
                          std::uint64_t index = 0, std::uint64_t sub = 0);

/// xoshiro256** (Blackman & Vigna), seeded through SplitMix64.
///
/// Every derived quantity (uniform doubles, bounded integers, normals, Gumbel
/// noise) uses a fixed documented transform so that streams are bit-identical
/// across platforms and standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next();

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform();
  /// Uniform in (0, 1].
  double uniform_open_closed() { return 1.0 - uniform(); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Unbiased integer in [0, n) by rejection.
  std::uint64_t below(std::uint64_t n);
  /// Standard normal via Box-Muller; both variates are used.
  double normal();
  /// Standard Gumbel: -log(-log(u)), u in (0,1).
  double gumbel();

 private:
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace itersr
