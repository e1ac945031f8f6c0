#include "lscm/trainer.hpp"

#include <numeric>

#include "lscm/errors.hpp"
#include "lscm/ops.hpp"

namespace lscm {

Trainer::Trainer(const Config& config, std::vector<Example> train_set)
    : config_(config), train_(std::move(train_set)) {
  config_.validate();
  if (train_.empty()) throw InputError("training set is empty");
  model_ = std::make_unique<Model>(config_);
  AdamOptions opt;
  opt.weight_decay = config_.weight_decay;
  opt.decoupled_decay = config_.decay_mode == "decoupled";
  adam_ = std::make_unique<Adam>(model_->trainable(), opt);
}

std::size_t Trainer::sample_index(std::uint64_t position) {
  const std::uint64_t n = train_.size();
  const std::uint64_t epoch = position / n;
  if (epoch != cached_epoch_) {
    order_.resize(train_.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    Rng rng(mix_seed(config_.seed, 0x45504F4348ULL + epoch));
    rng.shuffle(order_);
    cached_epoch_ = epoch;
  }
  return order_[position % n];
}

bool Trainer::mirrored(std::uint64_t position) const {
  if (!config_.mirror_augment) return false;
  return (Rng(mix_seed(config_.seed, 0x4D4952524FULL + position)).next_u64() & 1) != 0;
}

TrainLogEntry Trainer::step() {
  if (iteration_ >= config_.max_iters) throw ContractError("training already reached max_iters");
  const double lr = poly_lr(iteration_, config_.max_iters, config_.lr_base, config_.poly_power);
  const std::size_t batch = config_.batch_size;
  double total = 0.0;
  adam_->zero_grad();
  for (std::size_t b = 0; b < batch; ++b) {
    const std::uint64_t position = iteration_ * batch + b;
    const Example& ex = train_[sample_index(position)];
    Var loss = mirrored(position) ? model_->loss(mirror_example(ex)) : model_->loss(ex);
    total += loss.value().item();
    backward(batch == 1 ? loss : scale(loss, 1.0 / static_cast<double>(batch)));
  }
  adam_->step(lr);
  ++iteration_;
  return {iteration_, lr, total / static_cast<double>(batch)};
}

void Trainer::train_until(std::uint64_t target, const std::function<void(const TrainLogEntry&)>& on_step) {
  target = std::min<std::uint64_t>(target, config_.max_iters);
  while (iteration_ < target) {
    const TrainLogEntry e = step();
    if (on_step) on_step(e);
  }
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint ck;
  for (const auto& [name, v] : model_->parameters()) ck.tensors.emplace_back(name, v.value());
  for (const auto& s : adam_->slots()) {
    ck.tensors.emplace_back("adam.m." + s.name, s.m);
    ck.tensors.emplace_back("adam.v." + s.name, s.v);
  }
  ck.iteration = iteration_;
  return ck;
}

void Trainer::restore(const Checkpoint& ck) {
  auto check = [&](const std::string& name, const Shape& expected) -> const Tensor& {
    const Tensor* t = ck.find(name);
    if (!t) throw ConfigError("checkpoint is missing tensor '" + name + "'");
    if (t->shape() != expected) {
      throw DimensionError("checkpoint tensor '" + name + "' has shape " + shape_str(t->shape()) + ", model expects " +
                           shape_str(expected));
    }
    return *t;
  };
  for (const auto& [name, v] : model_->parameters()) check(name, v.shape());
  for (const auto& s : adam_->slots()) {
    check("adam.m." + s.name, s.m.shape());
    check("adam.v." + s.name, s.v.shape());
  }
  if (ck.iteration > config_.max_iters) throw ConfigError("checkpoint iteration exceeds max_iters");

  for (const auto& [name, v] : model_->parameters()) {
    Var p = v;
    p.mutable_value() = *ck.find(name);
    p.zero_grad();
  }
  for (auto& s : adam_->slots()) {
    s.m = *ck.find("adam.m." + s.name);
    s.v = *ck.find("adam.v." + s.name);
  }
  adam_->set_steps(ck.iteration);
  iteration_ = ck.iteration;
}

EvalReport evaluate(const Model& model, const std::vector<Example>& examples, std::vector<BinaryMask>* predictions) {
  std::vector<BinaryMask> preds, gts;
  preds.reserve(examples.size());
  gts.reserve(examples.size());
  for (const auto& ex : examples) {
    preds.push_back(model.predict(ex));
    gts.push_back(ex.mask);
  }
  EvalReport r = evaluate_masks(preds, gts);
  if (predictions) *predictions = std::move(preds);
  return r;
}

}  // namespace lscm
