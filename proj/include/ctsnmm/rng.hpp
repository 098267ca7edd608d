#pragma once

#include <cstdint>

namespace ctsnmm {

// Counter-based pseudo random generator built on the SplitMix64 output
// function: draw k of a stream with seed s is mix64(s + k * GOLDEN).
// Streams are split by hashing (seed, key) through the same finalizer, so
// child streams do not depend on how many draws the parent has consumed and
// the whole tree is reproducible from a single root seed regardless of
// thread count or evaluation order.
//
// Stream layout used across the project (keys for derive/stream):
//   kReplicateStream  + r   per Monte Carlo replicate
//   kSubjectStream    + i   per subject inside a dataset stream
//   kBootstrapStream  + b   per bootstrap resample inside an analysis stream
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t next_u64() { return mix64(seed_ + (++counter_) * kGolden); }

  // [0, 1), 53-bit resolution
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  bool bernoulli(double p) { return uniform() < p; }

  // inverse-CDF: -log(1-U)/rate, U in [0,1) so the argument never hits 0
  double exponential(double rate);

  // Marsaglia polar method; the spare deviate is cached per stream
  double normal();

  // child stream; independent of this stream's draw position
  Rng stream(std::uint64_t key) const { return Rng(derive(seed_, key)); }

  static std::uint64_t derive(std::uint64_t seed, std::uint64_t key) {
    return mix64(mix64(seed + kGolden * (key + 1)) ^ 0xD1B54A32D192ED03ULL);
  }

  static std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

inline constexpr std::uint64_t kReplicateStream = 0x100000000ULL;
inline constexpr std::uint64_t kSubjectStream = 0x200000000ULL;
inline constexpr std::uint64_t kBootstrapStream = 0x300000000ULL;

}  // namespace ctsnmm
