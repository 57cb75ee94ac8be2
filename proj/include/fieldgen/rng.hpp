#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace fieldgen {

// Seedable random stream with a serializable state. Normal draws use
// Box-Muller on the raw 64-bit engine output so the sequence does not depend
// on the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  double normal();

  std::string state() const;
  void set_state(const std::string& state);

 private:
  std::mt19937_64 engine_;
};

// Stateless mixing of (seed, index) into an independent stream seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace fieldgen
