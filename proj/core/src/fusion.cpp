#include "lscm/fusion.hpp"

#include "lscm/errors.hpp"
#include "lscm/ops.hpp"

namespace lscm {

void ConvLstmParams::collect(const std::string& prefix, NamedParams& out) const {
  out.emplace_back(prefix + "w", w);
  out.emplace_back(prefix + "b", b);
}

ConvLstmParams make_convlstm_params(Rng& rng, std::size_t input_channels, std::size_t state_channels,
                                    std::size_t kernel) {
  if (kernel % 2 == 0) throw ConfigError("ConvLSTM kernel must be odd");
  const std::size_t cin = input_channels + state_channels;
  const std::size_t cout = 4 * state_channels;
  const std::size_t kk = kernel * kernel;
  ConvLstmParams p;
  p.w = Var::parameter(glorot_uniform(rng, {kernel, kernel, cin, cout}, kk * cin, kk * cout));
  p.b = Var::parameter(Tensor({cout}));
  return p;
}

ConvLstmState convlstm_zero_state(std::size_t h, std::size_t w, std::size_t channels) {
  return {Var::constant(Tensor({h, w, channels})), Var::constant(Tensor({h, w, channels}))};
}

ConvLstmState convlstm_cell(const Var& x, const ConvLstmState& state, const ConvLstmParams& params) {
  const std::size_t cs = params.state_channels();
  if (state.h.shape() != state.c.shape() || state.h.value().rank() != 3 || state.h.dim(2) != cs) {
    throw DimensionError("convlstm_cell: state " + shape_str(state.h.shape()) + "/" + shape_str(state.c.shape()) +
                         " does not match " + std::to_string(cs) + " state channels");
  }
  if (x.value().rank() != 3 || x.dim(0) != state.h.dim(0) || x.dim(1) != state.h.dim(1) ||
      x.dim(2) + cs != params.w.dim(2)) {
    throw DimensionError("convlstm_cell: input " + shape_str(x.shape()) + " vs kernel " +
                         shape_str(params.w.shape()));
  }
  Var gates = conv2d_same(concat_channels({x, state.h}), params.w, params.b);
  Var i = sigmoid(slice_channels(gates, 0, cs));
  Var f = sigmoid(slice_channels(gates, cs, cs));
  Var o = sigmoid(slice_channels(gates, 2 * cs, cs));
  Var g = tanh(slice_channels(gates, 3 * cs, cs));
  Var c = add(mul(f, state.c), mul(i, g));
  return {mul(o, tanh(c)), c};
}

Var fuse_sequence(const std::map<int, Var>& y_levels, const ConvLstmParams& params, std::span<const int> schedule) {
  if (schedule.empty()) throw ConfigError("fusion schedule is empty");
  for (int level : schedule) {
    if (!y_levels.count(level)) throw ConfigError("fusion input for level " + std::to_string(level) + " is missing");
  }
  const Var& first = y_levels.at(schedule.front());
  ConvLstmState state = convlstm_zero_state(first.dim(0), first.dim(1), params.state_channels());
  for (int level : schedule) state = convlstm_cell(y_levels.at(level), state, params);
  return state.h;
}

Var dual_path_fuse(const std::map<int, Var>& y_levels, const ConvLstmParams& params) {
  static_assert(kDualPathSchedule.size() == 7);
  return fuse_sequence(y_levels, params, kDualPathSchedule);
}

void HeadParams::collect(const std::string& prefix, NamedParams& out) const {
  out.emplace_back(prefix + "w", w);
  out.emplace_back(prefix + "b", b);
}

HeadParams make_head_params(Rng& rng, std::size_t state_channels) {
  HeadParams p;
  p.w = Var::parameter(glorot_uniform(rng, {1, 1, state_channels, 1}, state_channels, 1));
  p.b = Var::parameter(Tensor({1}));
  return p;
}

Var predict_mask(const Var& h, const HeadParams& params, std::size_t factor) {
  if (factor == 0) throw ConfigError("upsample factor must be >= 1");
  return upsample_bilinear(conv2d_same(h, params.w, params.b), factor);
}

Var bce_loss(const Var& logits, const Tensor& gt) {
  for (double g : gt.data()) {
    if (g != 0.0 && g != 1.0) throw ContractError("bce_loss: ground truth must be binary");
  }
  if (gt.rank() == 2 && logits.value().rank() == 3 && logits.dim(2) == 1) {
    return bce_with_logits(logits, gt.reshaped({gt.dim(0), gt.dim(1), 1}));
  }
  return bce_with_logits(logits, gt);
}

}  // namespace lscm
