#include "vcl/rng.hpp"

#include <cmath>

#include "vcl/errors.hpp"

namespace vcl {

namespace {

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ull;

std::uint64_t mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t RngStream::next_u64() {
  state_ += kGolden;
  return mix(state_);
}

double RngStream::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) {
  return lo + (hi - lo) * uniform();
}

std::uint64_t RngStream::uniform_int(std::uint64_t n) {
  if (n == 0) throw ContractError("uniform_int: n must be positive");
  // Rejection sampling keeps the draw unbiased for every n.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

double RngStream::normal() {
  // Box-Muller; u1 shifted into (0, 1] so the log is finite.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.28318530717958647692 * u2);
}

RngStream stream_for(std::uint64_t seed, StreamTag tag, std::uint64_t a,
                     std::uint64_t b, std::uint64_t c) {
  std::uint64_t s = mix(seed + kGolden);
  s = mix(s ^ (static_cast<std::uint64_t>(tag) + kGolden));
  s = mix(s ^ (a + kGolden));
  s = mix(s ^ (b + kGolden));
  s = mix(s ^ (c + kGolden));
  return RngStream(s);
}

}  // namespace vcl
