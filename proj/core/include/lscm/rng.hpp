#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "lscm/tensor.hpp"

namespace lscm {

/// Seeded generator whose draws are identical on every platform: the engine is
/// std::mt19937_64 (fully specified by the standard) and all conversions to
/// real/integer ranges are done here rather than through <random> distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi] (inclusive), unbiased by rejection.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      auto j = static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(v[i - 1], v[j]);
    }
  }

  Tensor uniform_tensor(const Shape& shape, double lo, double hi);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

/// Stateless 64-bit mixer used to derive independent sub-seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

/// Glorot-uniform init: U[-s, s], s = sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform(Rng& rng, const Shape& shape, std::size_t fan_in, std::size_t fan_out);

}  // namespace lscm
