#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lscm/lscm.hpp"

namespace lscm {

/// lr_base * (1 - iter / max_iters)^power; iterations past max_iters give 0.
double poly_lr(std::uint64_t iter, std::uint64_t max_iters, double lr_base, double power);

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  // decoupled: theta <- theta - lr * wd * theta, outside the moment estimates.
  // coupled: g <- g + wd * theta before the moments.
  bool decoupled_decay = true;
};

/// One bias-corrected Adam update of a single tensor. `step` is 1-based.
/// Throws Error naming `name` when the gradient is not finite.
void adam_update(Tensor& param, const Tensor& grad, Tensor& m, Tensor& v, std::uint64_t step, double lr,
                 const AdamOptions& opt, const std::string& name);

class Adam {
 public:
  struct Slot {
    std::string name;
    Var param;
    Tensor m;
    Tensor v;
  };

  Adam(const NamedParams& params, AdamOptions options);

  /// Applies accumulated gradients, then clears them.
  void step(double lr);
  void zero_grad();

  std::uint64_t steps() const { return steps_; }
  void set_steps(std::uint64_t s) { steps_ = s; }
  std::vector<Slot>& slots() { return slots_; }
  const std::vector<Slot>& slots() const { return slots_; }
  const AdamOptions& options() const { return options_; }

 private:
  AdamOptions options_;
  std::vector<Slot> slots_;
  std::uint64_t steps_ = 0;
};

}  // namespace lscm
