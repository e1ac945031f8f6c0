#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "lscm/autodiff.hpp"

namespace lscm {

/// Compares backward() against central differences for f at x.
/// Returns max |analytic - numeric| / max(1, |numeric|) over all entries of x.
double finite_diff_check(const std::function<Var(const Var&)>& f, const Tensor& x, double eps = 1e-5);

struct ParamCheck {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

/// Same measure for a scalar loss of already-registered parameter leaves. The
/// loss closure is re-run for every perturbation, so it must rebuild its graph.
/// When max_entries > 0, only a deterministic stride of entries is probed per tensor.
std::vector<ParamCheck> finite_diff_check_params(const std::function<Var()>& loss,
                                                 std::span<const std::pair<std::string, Var>> params,
                                                 double eps = 1e-5, std::size_t max_entries = 0);

}  // namespace lscm
