#pragma once

#include <cmath>
#include <cstdint>

namespace degflow {

// Counter-based deterministic generator.
//
// The full algorithm, so that any language can reproduce a stream:
//   mix64(x): x ^= x >> 30; x *= 0xBF58476D1CE4E5B9;
//             x ^= x >> 27; x *= 0x94D049BB133111EB; x ^= x >> 31;
//   key(seed, stream) = mix64(mix64(seed ^ 0x243F6A8885A308D3) ^
//                             (stream * 0xD1B54A32D192ED03))
//   u64 value at counter i = mix64(key + (i + 1) * 0x9E3779B97F4A7C15)
//
// Uniform doubles take the top 53 bits: u = (v >> 11) * 2^-53 in [0, 1).
// Normals are Box-Muller pairs from consecutive uniforms, with the first
// uniform shifted into (0, 1] to keep log() finite:
//   u1 = ((v1 >> 11) + 1) * 2^-53, u2 = (v2 >> 11) * 2^-53
//   z0 = sqrt(-2 ln u1) cos(2 pi u2), z1 = sqrt(-2 ln u1) sin(2 pi u2)
//
// Streams with distinct indices are statistically independent; the counter
// makes any position reproducible without generating predecessors.
class Rng {
 public:
  explicit Rng(uint64_t seed, uint64_t stream = 0)
      : key_(mix64(mix64(seed ^ 0x243F6A8885A308D3ull) ^
                   (stream * 0xD1B54A32D192ED03ull))) {}

  static uint64_t mix64(uint64_t x) {
    x ^= x >> 30;
    x *= 0xBF58476D1CE4E5B9ull;
    x ^= x >> 27;
    x *= 0x94D049BB133111EBull;
    x ^= x >> 31;
    return x;
  }

  uint64_t next_u64() { return mix64(key_ + (++counter_) * 0x9E3779B97F4A7C15ull); }

  // Uniform in [0, 1).
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n); n must be > 0. Rejection-free modulo via
  // 128-bit multiply keeps the bias below 2^-64.
  uint64_t next_below(uint64_t n) {
    return static_cast<uint64_t>((static_cast<__uint128_t>(next_u64()) * n) >> 64);
  }

  // Standard normal draw (Box-Muller; caches the second member of each pair).
  double next_normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

 private:
  uint64_t key_;
  uint64_t counter_ = 0;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// Stream indices used across the pipeline. Training code derives per-step
// streams as `base + step * kStreamStride` so no two purposes collide.
namespace streams {
constexpr uint64_t kRandn = 0;
constexpr uint64_t kPatch = 1;
constexpr uint64_t kCorpus = 2;
constexpr uint64_t kFgdmTrain = 3;
constexpr uint64_t kRfdmTrain = 4;
constexpr uint64_t kSynth = 5;
constexpr uint64_t kStreamStride = 16;
}  // namespace streams

}  // namespace degflow
