#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>

namespace comute {

/// SplitMix64 finalizer. Bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Folds a list of words into a single stream key.
constexpr std::uint64_t derive_key(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x6a09e667f3bcc909ULL;
  for (auto p : parts) h = mix64(h ^ mix64(p));
  return h;
}

/// Domain tags so streams for different purposes never alias.
enum class StreamTag : std::uint64_t {
  kBaselineTaps = 1,
  kDiffractionProfile = 2,
  kScatterProfile = 3,
  kAmbientNoise = 4,
  kMeasurementNoise = 5,
  kPacketSeed = 6,
  kPatternSampler = 7,
  kSplit = 8,
  kInit = 9,
  kDropout = 10,
  kShuffle = 11,
  kEvalSet = 12,
};

/// Counter-based pseudorandom stream: draw i is a pure function of
/// (key, i). Copying a stream is cheap and copies never interfere.
class CounterStream {
 public:
  explicit constexpr CounterStream(std::uint64_t key) : key_(key) {}
  CounterStream(StreamTag tag, std::initializer_list<std::uint64_t> parts)
      : key_(derive_key(parts) ^ mix64(static_cast<std::uint64_t>(tag))) {}

  constexpr std::uint64_t key() const { return key_; }
  constexpr std::uint64_t counter() const { return counter_; }

  /// Raw 64-bit word at an absolute position, independent of the cursor.
  constexpr std::uint64_t at(std::uint64_t i) const { return mix64(key_ ^ mix64(i)); }

  constexpr std::uint64_t next_u64() { return at(counter_++); }

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). Lemire-free modulo; bias is < 2^-40 for the
  /// small n used here.
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

  /// Standard normal via Box-Muller; consumes two words per call.
  double normal() {
    double u1 = uniform();
    const double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace comute
