#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

namespace eagle {

// Labels mixed into the seed to derive independent streams. A derived
// stream's seed is mix64(parent_seed ^ label).
namespace stream {
inline constexpr std::uint64_t kInit = 0x696e6974ULL;      // "init"
inline constexpr std::uint64_t kFolds = 0x666f6c64ULL;     // "fold"
inline constexpr std::uint64_t kShuffle = 0x73687566ULL;   // "shuf"
inline constexpr std::uint64_t kDropout = 0x64726f70ULL;   // "drop"
inline constexpr std::uint64_t kSynth = 0x73796e74ULL;     // "synt"
}  // namespace stream

std::uint64_t mix64(std::uint64_t z);

// Counter-based generator: output i is mix64(seed + (i + 1) * golden gamma),
// i.e. SplitMix64 indexed by an explicit counter.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0, std::uint64_t counter = 0) : seed_(seed), counter_(counter) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t counter() const noexcept { return counter_; }

  std::uint64_t next_u64();
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer on [0, n) by rejection; n > 0.
  std::uint64_t below(std::uint64_t n);
  double normal();
  bool bernoulli(double p) { return uniform() < p; }

  Rng derive(std::uint64_t label) const { return Rng(mix64(seed_ ^ label), 0); }
  Rng derive(std::uint64_t label, std::uint64_t index) const {
    return Rng(mix64(mix64(seed_ ^ label) + index), 0);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_;
};

}  // namespace eagle
