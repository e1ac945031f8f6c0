#pragma once

#include <cstdint>
#include <vector>

#include "lscm/config.hpp"
#include "lscm/gradcheck.hpp"

namespace lscm {

/// Central-difference check of every differentiable op in isolation, `trials`
/// seeded random inputs each. One entry per op holding the worst error seen.
std::vector<ParamCheck> op_gradient_suite(std::uint64_t seed, int trials = 10, double eps = 1e-5);

/// Full-model check at a tiny configuration: 16x16 image (4x4 grid), a
/// 3-word sentence and every channel size set to `channels`. One entry per
/// parameter tensor; `max_entries` bounds the probed entries per tensor (0 = all).
std::vector<ParamCheck> model_gradient_check(std::uint64_t seed, std::size_t channels = 8,
                                             std::size_t max_entries = 0, double eps = 1e-5);

}  // namespace lscm
