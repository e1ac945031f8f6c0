#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "lscm/checkpoint.hpp"
#include "lscm/config.hpp"
#include "lscm/model.hpp"
#include "lscm/optim.hpp"
#include "lscm/synth.hpp"

namespace lscm {

struct TrainLogEntry {
  std::uint64_t iter = 0;  // 1-based index of the completed iteration
  double lr = 0.0;
  double loss = 0.0;
};

/// Training state: model, optimizer and the position in the sample stream.
/// The sample visited at any iteration is a pure function of (seed, iteration),
/// so resuming from a checkpoint replays the same trajectory.
class Trainer {
 public:
  Trainer(const Config& config, std::vector<Example> train_set);

  TrainLogEntry step();
  /// Steps until iteration() == target (bounded by max_iters).
  void train_until(std::uint64_t target, const std::function<void(const TrainLogEntry&)>& on_step = {});

  std::uint64_t iteration() const { return iteration_; }
  const Model& model() const { return *model_; }
  const Adam& optimizer() const { return *adam_; }
  const Config& config() const { return config_; }

  /// Parameters (all), then Adam moments of trainable parameters as "adam.m.<name>" / "adam.v.<name>".
  Checkpoint checkpoint() const;
  /// Validates every tensor before mutating anything; throws DimensionError
  /// naming the first mismatched tensor and ConfigError for a missing one.
  void restore(const Checkpoint& ckpt);

 private:
  std::size_t sample_index(std::uint64_t position);
  bool mirrored(std::uint64_t position) const;

  Config config_;
  std::vector<Example> train_;
  std::unique_ptr<Model> model_;
  std::unique_ptr<Adam> adam_;
  std::uint64_t iteration_ = 0;
  std::uint64_t cached_epoch_ = UINT64_MAX;
  std::vector<std::size_t> order_;
};

/// Predicts every example (optionally returning the masks) and scores them.
EvalReport evaluate(const Model& model, const std::vector<Example>& examples,
                    std::vector<BinaryMask>* predictions = nullptr);

}  // namespace lscm
