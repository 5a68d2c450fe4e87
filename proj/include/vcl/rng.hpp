#pragma once

#include <cstdint>

namespace vcl {

// Counter-based deterministic RNG. Every consumer derives its own stream from
// (global seed, purpose tag, indices), so parallel workers never share state
// and replaying any (input, seed) pair is bit-exact. The generator core is
// splitmix64; normal variates use Box-Muller on top of it.
class RngStream {
 public:
  explicit RngStream(std::uint64_t state) : state_(state) {}

  std::uint64_t next_u64();

  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  // Uniform in [lo, hi).
  double uniform(double lo, double hi);
  // Unbiased integer in [0, n), n > 0.
  std::uint64_t uniform_int(std::uint64_t n);
  // Standard normal.
  double normal();

 private:
  std::uint64_t state_;
};

// Stream purposes. Values are part of the determinism contract: changing them
// changes every seeded run.
enum class StreamTag : std::uint64_t {
  kShuffle = 1,
  kAugment = 2,     // (epoch, sample, view)
  kLatentNoise = 3, // (epoch, sample, view)
  kQueueInit = 4,
  kParamInit = 5,
  kSynthPose = 6,
  kSynthClass = 7,
  kSynthSample = 8,
  kSubset = 9,
};

// Derives an independent stream from the seed and up to three indices.
RngStream stream_for(std::uint64_t seed, StreamTag tag, std::uint64_t a = 0,
                     std::uint64_t b = 0, std::uint64_t c = 0);

}  // namespace vcl
