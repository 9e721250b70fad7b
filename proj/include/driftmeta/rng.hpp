#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace driftmeta {

// Deterministic random stream. The generator is self-contained (SplitMix64
// core, Box-Muller normals) so identical seeds give identical bytes on every
// platform and standard library.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64();

  // Uniform on [0, 1).
  double uniform();

  // Uniform on [lo, hi).
  double uniform(double lo, double hi);

  // Standard normal.
  double normal();

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Uniform integer on [0, n).
  uint64_t below(uint64_t n);

 private:
  uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// FNV-1a of a string; used to derive named sub-streams from one seed.
uint64_t fnv1a64(std::string_view s);

// Named sub-seed: components drawing randomness each get their own stream so
// adding a consumer never shifts another one's draws.
uint64_t derive_seed(uint64_t seed, std::string_view name);

inline Rng derive_rng(uint64_t seed, std::string_view name) {
  return Rng(derive_seed(seed, name));
}

}  // namespace driftmeta
