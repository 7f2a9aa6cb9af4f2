#pragma once

#include <cstdint>
#include <string_view>

namespace lightline {

// SplitMix64 finalizer: a bijective 64-bit mixer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// FNV-1a; stable across platforms, unlike std::hash.
constexpr std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

constexpr std::uint64_t derive_key(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  return mix64(mix64(seed ^ mix64(a)) ^ mix64(b + 0x632BE59BD9B4E019ULL));
}

constexpr std::uint64_t derive_key(std::uint64_t seed, std::string_view label) {
  return derive_key(seed, fnv1a64(label));
}

// Counter-based generator: value i of the stream is mix64(key + i * gamma). The whole
// stream is a pure function of the key, so any (seed, rollout, turn) triple replays exactly.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key) : key_(key) {}

  std::uint64_t next_u64() {
    ++counter_;
    return mix64(key_ + counter_ * 0xD1B54A32D192ED03ULL);
  }

  // Uniform in [0, 1) with 53 bits of resolution.
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace lightline
