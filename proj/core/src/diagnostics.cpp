#include "lscm/diagnostics.hpp"

#include <algorithm>
#include <functional>
#include <string>

#include "lscm/model.hpp"
#include "lscm/ops.hpp"

namespace lscm {

namespace {

Var c(Tensor t) { return Var::constant(std::move(t)); }

// Weighted sum with fixed weights, so that every output entry carries gradient.
Var probe(const Var& v, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x5052));
  return sum(mul(v, c(rng.uniform_tensor(v.shape(), -1.0, 1.0))));
}

struct OpCase {
  std::string name;
  Shape shape;
  std::function<Var(const Var&)> fn;
};

}  // namespace

std::vector<ParamCheck> op_gradient_suite(std::uint64_t seed, int trials, double eps) {
  Rng wr(mix_seed(seed, 1));
  const Tensor w34 = wr.uniform_tensor({3, 4}, -1, 1);
  const Tensor other = wr.uniform_tensor({3, 4}, -1, 1);
  const Tensor bias = wr.uniform_tensor({4}, -1, 1);
  const Tensor conv_w = wr.uniform_tensor({3, 3, 2, 3}, -1, 1);
  const Tensor conv_b = wr.uniform_tensor({3}, -1, 1);
  Tensor target({4, 4, 1});
  for (std::size_t i = 0; i < target.size(); ++i) target[i] = wr.bernoulli(0.4) ? 1.0 : 0.0;
  const std::vector<std::size_t> idx = {2, 0, 2, 1};
  const LstmParams lstm = make_lstm_params(wr, 4, 3);
  const ConvLstmParams cell = make_convlstm_params(wr, 2, 3);

  const std::vector<OpCase> cases = {
      {"matmul", {2, 3}, [&](const Var& v) { return probe(matmul(v, c(w34)), seed); }},
      {"transpose", {3, 4}, [&](const Var& v) { return probe(transpose(v), seed); }},
      {"add", {3, 4}, [&](const Var& v) { return probe(add(v, c(other)), seed); }},
      {"sub", {3, 4}, [&](const Var& v) { return probe(sub(c(other), v), seed); }},
      {"mul", {3, 4}, [&](const Var& v) { return probe(mul(v, c(other)), seed); }},
      {"scale", {3, 4}, [&](const Var& v) { return probe(scale(v, -1.7), seed); }},
      {"add_bias", {2, 4}, [&](const Var& v) { return probe(add_bias(v, c(bias)), seed); }},
      {"tanh", {3, 4}, [&](const Var& v) { return probe(tanh(v), seed); }},
      {"sigmoid", {3, 4}, [&](const Var& v) { return probe(sigmoid(v), seed); }},
      {"relu", {3, 4}, [&](const Var& v) { return probe(relu(v), seed); }},
      {"scaled_row_softmax", {3, 4}, [&](const Var& v) { return probe(scaled_row_softmax(v, 1.3), seed); }},
      {"conv2d_same", {4, 3, 2}, [&](const Var& v) { return probe(conv2d_same(v, c(conv_w), c(conv_b)), seed); }},
      {"max_pool_over_rows", {4, 3}, [&](const Var& v) { return probe(max_pool_over_rows(v), seed); }},
      {"concat_channels", {2, 2, 3}, [&](const Var& v) { return probe(concat_channels({v, c(Tensor({2, 2, 1}, 1.0)), v}), seed); }},
      {"slice_channels", {2, 5}, [&](const Var& v) { return probe(slice_channels(v, 1, 3), seed); }},
      {"reshape", {2, 6}, [&](const Var& v) { return probe(reshape(v, {3, 4}), seed); }},
      {"row/stack_rows", {3, 2}, [&](const Var& v) {
         std::vector<Var> rows = {row(v, 2), row(v, 0), row(v, 2)};
         return probe(stack_rows(rows), seed);
       }},
      {"embedding_lookup", {3, 4}, [&](const Var& v) { return probe(embedding_lookup(v, idx), seed); }},
      {"tile_spatial", {3}, [&](const Var& v) { return probe(tile_spatial(v, 2, 3), seed); }},
      {"pixel_unshuffle", {4, 4, 2}, [&](const Var& v) { return probe(pixel_unshuffle(v, 2), seed); }},
      {"upsample_bilinear", {2, 3, 2}, [&](const Var& v) { return probe(upsample_bilinear(v, 4), seed); }},
      {"bce_with_logits", {4, 4, 1}, [&](const Var& v) { return bce_with_logits(scale(v, 3.0), target); }},
      {"mean", {3, 4}, [&](const Var& v) { return mean(mul(v, v)); }},
      {"lstm_encode", {3, 4}, [&](const Var& v) { return probe(lstm_encode(v, lstm), seed); }},
      {"convlstm_cell", {3, 3, 2}, [&](const Var& v) {
         ConvLstmState s0{c(Tensor({3, 3, 3}, 0.2)), c(Tensor({3, 3, 3}, -0.3))};
         return probe(convlstm_cell(v, s0, cell).h, seed);
       }},
  };

  std::vector<ParamCheck> out;
  Rng rng(mix_seed(seed, 2));
  for (const auto& cs : cases) {
    ParamCheck pc{cs.name, 0.0, 0};
    for (int t = 0; t < trials; ++t) {
      const Tensor x = rng.uniform_tensor(cs.shape, -1.0, 1.0);
      pc.max_rel_error = std::max(pc.max_rel_error, finite_diff_check(cs.fn, x, eps));
      pc.checked += x.size();
    }
    out.push_back(pc);
  }
  return out;
}

std::vector<ParamCheck> model_gradient_check(std::uint64_t seed, std::size_t channels, std::size_t max_entries,
                                             double eps) {
  Config cfg;
  cfg.c_v = cfg.c_l = cfg.c_h = cfg.c_o = cfg.c_s = cfg.c_e = channels;
  cfg.image_size = 16;
  cfg.seed = seed;
  const Model model(cfg);

  Rng rng(mix_seed(seed, 3));
  Example ex;
  ex.image = rng.uniform_tensor({16, 16, 3}, 0.0, 1.0);
  ex.tokens.tokens = {"red", "circle", "left"};
  ex.tree = DependencyTree({2, 0, 2});
  ex.mask = BinaryMask(16, 16);
  for (auto& b : ex.mask.bits) b = rng.bernoulli(0.3) ? 1 : 0;

  return finite_diff_check_params([&] { return model.loss(ex); }, model.parameters(), eps, max_entries);
}

}  // namespace lscm
