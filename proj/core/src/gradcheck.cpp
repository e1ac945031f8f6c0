#include "lscm/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "lscm/errors.hpp"

namespace lscm {

namespace {

double rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
}

}  // namespace

double finite_diff_check(const std::function<Var(const Var&)>& f, const Tensor& x, double eps) {
  if (!(eps > 0.0)) throw ContractError("finite_diff_check: eps must be positive");
  Var input = Var::parameter(x);
  backward(f(input));
  const Tensor analytic = input.grad();

  double worst = 0.0;
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    NoGradGuard guard;
    probe[i] = x[i] + eps;
    const double up = f(Var::constant(probe)).value().item();
    probe[i] = x[i] - eps;
    const double down = f(Var::constant(probe)).value().item();
    probe[i] = x[i];
    worst = std::max(worst, rel_error(analytic[i], (up - down) / (2.0 * eps)));
  }
  return worst;
}

std::vector<ParamCheck> finite_diff_check_params(const std::function<Var()>& loss,
                                                 std::span<const std::pair<std::string, Var>> params,
                                                 double eps, std::size_t max_entries) {
  if (!(eps > 0.0)) throw ContractError("finite_diff_check_params: eps must be positive");
  for (const auto& [name, p] : params) {
    Var v = p;
    v.zero_grad();
  }
  backward(loss());

  std::vector<ParamCheck> report;
  for (const auto& [name, p] : params) {
    Var v = p;
    const Tensor analytic = v.grad();
    Tensor& value = v.mutable_value();
    const std::size_t n = value.size();
    const std::size_t stride = (max_entries == 0 || n <= max_entries) ? 1 : (n + max_entries - 1) / max_entries;
    ParamCheck pc{name, 0.0, 0};
    for (std::size_t i = 0; i < n; i += stride) {
      NoGradGuard guard;
      const double orig = value[i];
      value[i] = orig + eps;
      const double up = loss().value().item();
      value[i] = orig - eps;
      const double down = loss().value().item();
      value[i] = orig;
      pc.max_rel_error = std::max(pc.max_rel_error, rel_error(analytic[i], (up - down) / (2.0 * eps)));
      ++pc.checked;
    }
    v.zero_grad();
    report.push_back(pc);
  }
  return report;
}

}  // namespace lscm
