#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace certopt {

// Seedable generator with a platform-independent output stream.
//
// The engine is std::mt19937_64, whose sequence is fixed by the standard. The
// standard distributions are not (their algorithms are implementation-defined),
// so every conversion to doubles or bounded integers is done here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be nonzero.
  std::uint64_t below(std::uint64_t n);

  // A generator for a named sub-stream; independent of how much this one has been used.
  static Rng derive(std::uint64_t seed, std::string_view stream);

 private:
  std::mt19937_64 engine_;
};

// SplitMix64 finalizer; used for seed derivation and stable hashing.
std::uint64_t mix64(std::uint64_t x);

// FNV-1a over bytes, for deterministic tie-breaking keys.
std::uint64_t fnv1a(std::string_view bytes);

// Default seed: $CERTOPT_SEED when set and parseable, otherwise `fallback`.
std::uint64_t default_seed(std::uint64_t fallback = 7);

}  // namespace certopt
