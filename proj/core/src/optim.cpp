#include "lscm/optim.hpp"

#include <cmath>

#include "lscm/errors.hpp"

namespace lscm {

double poly_lr(std::uint64_t iter, std::uint64_t max_iters, double lr_base, double power) {
  if (max_iters == 0 || iter >= max_iters) return 0.0;
  const double frac = 1.0 - static_cast<double>(iter) / static_cast<double>(max_iters);
  return lr_base * std::pow(frac, power);
}

void adam_update(Tensor& param, const Tensor& grad, Tensor& m, Tensor& v, std::uint64_t step, double lr,
                 const AdamOptions& opt, const std::string& name) {
  if (param.shape() != grad.shape() || param.shape() != m.shape() || param.shape() != v.shape()) {
    throw DimensionError("adam_update: shape mismatch for " + name);
  }
  if (step == 0) throw ContractError("adam_update: step is 1-based");
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!std::isfinite(grad[i])) {
      throw Error("non-finite gradient in parameter '" + name + "' at element " + std::to_string(i));
    }
  }
  const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = opt.decoupled_decay ? grad[i] : grad[i] + opt.weight_decay * param[i];
    m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * g;
    v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * g * g;
    const double m_hat = m[i] / bc1;
    const double v_hat = v[i] / bc2;
    if (opt.decoupled_decay) param[i] -= lr * opt.weight_decay * param[i];
    param[i] -= lr * m_hat / (std::sqrt(v_hat) + opt.eps);
  }
}

Adam::Adam(const NamedParams& params, AdamOptions options) : options_(options) {
  for (const auto& [name, p] : params) {
    slots_.push_back({name, p, Tensor(p.shape()), Tensor(p.shape())});
  }
}

void Adam::step(double lr) {
  // Validate every gradient before touching any parameter.
  std::vector<Tensor> grads;
  grads.reserve(slots_.size());
  for (const auto& s : slots_) {
    grads.push_back(s.param.grad());
    if (!grads.back().all_finite()) throw Error("non-finite gradient in parameter '" + s.name + "'");
  }
  ++steps_;
  for (std::size_t i = 0; i < slots_.size(); ++i) {
    auto& s = slots_[i];
    adam_update(s.param.mutable_value(), grads[i], s.m, s.v, steps_, lr, options_, s.name);
  }
  zero_grad();
}

void Adam::zero_grad() {
  for (auto& s : slots_) s.param.zero_grad();
}

}  // namespace lscm
