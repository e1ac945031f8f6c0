#include "lscm/rng.hpp"

#include <cmath>

#include "lscm/errors.hpp"

namespace lscm {

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
  if (hi < lo) throw ContractError("uniform_int: empty range");
  const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
  if (span == 0) return static_cast<std::int64_t>(engine_());
  const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % span);
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return lo + static_cast<std::int64_t>(x % span);
}

Tensor Rng::uniform_tensor(const Shape& shape, double lo, double hi) {
  Tensor t(shape);
  for (auto& v : t.data()) v = uniform(lo, hi);
  return t;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over the combined words
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Tensor glorot_uniform(Rng& rng, const Shape& shape, std::size_t fan_in, std::size_t fan_out) {
  const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  return rng.uniform_tensor(shape, -s, s);
}

}  // namespace lscm
