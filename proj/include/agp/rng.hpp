#pragma once

#include <cstdint>

namespace agp {

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Counter-based uniform stream: draw i depends only on (key, i), never on how
// many draws happened before it or on which thread asks.
class CounterRng {
 public:
  explicit constexpr CounterRng(std::uint64_t key) : key_(key) {}

  // Key for one pruning site at one training step.
  static constexpr CounterRng derive(std::uint64_t seed, std::uint64_t layer_id, std::uint64_t step) {
    std::uint64_t k = mix64(seed + kGamma);
    k = mix64(k ^ (layer_id + kGamma));
    k = mix64(k ^ (step * 0xd1b54a32d192ed03ULL + kGamma));
    return CounterRng(k);
  }

  constexpr std::uint64_t bits(std::uint64_t i) const { return mix64(key_ + (i + 1) * kGamma); }
  // Uniform in [0, 1) with 53 random bits.
  constexpr double uniform(std::uint64_t i) const {
    return static_cast<double>(bits(i) >> 11) * 0x1.0p-53;
  }
  constexpr std::uint64_t key() const { return key_; }

 private:
  static constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ULL;
  std::uint64_t key_;
};

}  // namespace agp
