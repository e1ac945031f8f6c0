#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <span>

#include "lscm/autodiff.hpp"
#include "lscm/lscm.hpp"
#include "lscm/rng.hpp"

namespace lscm {

/// Bottom-up then top-down consumption order of the per-level outputs.
inline constexpr std::array<int, 7> kDualPathSchedule = {5, 4, 3, 2, 3, 4, 5};
inline constexpr std::array<int, 4> kLevels = {2, 3, 4, 5};

struct ConvLstmParams {
  Var w;  // [3 x 3 x (C_in + C_s) x 4C_s], gate blocks ordered i, f, o, g
  Var b;  // [4C_s]

  std::size_t state_channels() const { return b.dim(0) / 4; }
  void collect(const std::string& prefix, NamedParams& out) const;
};

ConvLstmParams make_convlstm_params(Rng& rng, std::size_t input_channels, std::size_t state_channels,
                                    std::size_t kernel = 3);

struct ConvLstmState {
  Var h;  // [H x W x C_s]
  Var c;
};

ConvLstmState convlstm_zero_state(std::size_t h, std::size_t w, std::size_t channels);

/// One ConvLSTM step: gates from a conv over concat(x, h).
ConvLstmState convlstm_cell(const Var& x, const ConvLstmState& state, const ConvLstmParams& params);

/// Runs one shared cell over the levels in the given order; returns the final hidden state.
Var fuse_sequence(const std::map<int, Var>& y_levels, const ConvLstmParams& params, std::span<const int> schedule);

/// fuse_sequence over kDualPathSchedule. Throws ConfigError when a level is missing.
Var dual_path_fuse(const std::map<int, Var>& y_levels, const ConvLstmParams& params);

struct HeadParams {
  Var w;  // [1 x 1 x C_s x 1]
  Var b;  // [1]

  void collect(const std::string& prefix, NamedParams& out) const;
};

HeadParams make_head_params(Rng& rng, std::size_t state_channels);

/// 1x1 conv to a single logit channel, then bilinear upsampling by `factor`.
Var predict_mask(const Var& h, const HeadParams& params, std::size_t factor);

/// Mean stable-form binary cross-entropy. gt has the logits' spatial extents
/// (either [H x W] or [H x W x 1]) with entries in {0, 1}.
Var bce_loss(const Var& logits, const Tensor& gt);

}  // namespace lscm
