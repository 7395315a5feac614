#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace zsre {

// Name recorded in split files so a split can be replayed on another machine.
inline constexpr std::string_view kPrngName = "mt19937_64/lemire-v1";

// Seed-stream offsets. Every random draw in a run derives from the single
// user seed through one of these.
enum class SeedStream : std::uint64_t {
  Split = 1,
  FewShot = 2,
  Init = 3,
  Shuffle = 4,
  Synthetic = 5,
  GradCheck = 6,
  Hash = 7,
};

std::uint64_t derive_seed(std::uint64_t base, SeedStream stream);

// Portable generator: std::mt19937_64 is fully specified by the standard,
// the distributions below are not, so they are written out here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  // Uniform integer in [0, bound), bound > 0. Lemire's nearly-divisionless method.
  std::uint64_t uniform_index(std::uint64_t bound);
  // Uniform in [0, 1) with 53 bits.
  double uniform01();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
  // Standard normal via Box-Muller (no cached second value).
  double normal();

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_index(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

// k distinct indices from [0, n), in draw order (partial Fisher-Yates).
std::vector<std::size_t> sample_without_replacement(Rng& rng, std::size_t n, std::size_t k);

// FNV-1a 64-bit.
std::uint64_t fnv1a(std::string_view text);

}  // namespace zsre
