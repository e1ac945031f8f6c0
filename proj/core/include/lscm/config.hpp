#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

#include "lscm/lscm.hpp"
#include "lscm/synth.hpp"

namespace lscm {

struct Config {
  // channel sizes
  std::size_t c_v = 32;
  std::size_t c_l = 32;
  std::size_t c_h = 32;
  std::size_t c_o = 16;
  std::size_t c_s = 16;
  std::size_t c_e = 50;
  std::size_t mutan_rank = 4;

  double alpha = 0.1;
  GraphDepth n_layers{false, 1};

  // optimization
  double lr_base = 2e-3;
  double weight_decay = 5e-4;
  std::string decay_mode = "decoupled";  // or "coupled"
  double poly_power = 0.9;
  std::uint64_t max_iters = 5000;
  std::size_t batch_size = 8;
  std::uint64_t seed = 7;
  bool freeze_cnn = false;
  bool mirror_augment = true;  // random left-right mirroring of training samples
  std::uint64_t checkpoint_every = 1000;

  // data
  std::size_t image_size = kImageSize;
  std::string data;
  std::string embeddings;
  std::string mix = "1:1:1";

  std::size_t grid() const { return image_size / 4; }
  LscmDims lscm_dims() const { return {c_v, c_l, c_h, c_o, mutan_rank}; }
  LscmOptions lscm_options() const { return {alpha, n_layers}; }

  /// Sets one key from its textual value; throws ConfigError on unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  /// Throws ConfigError when an invariant does not hold.
  void validate() const;
  /// "key = value" lines, round-trippable through parse_config.
  std::string serialize() const;
};

/// Parses "key = value" lines; '#' starts a comment. Starts from defaults.
Config parse_config(std::string_view text);
Config load_config(const std::string& path);

/// Applies LSCM_SEED from the environment when set.
void apply_environment(Config& config);

}  // namespace lscm
