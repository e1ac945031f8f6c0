#include "lscm/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include "lscm/errors.hpp"
#include "lscm/ops.hpp"

namespace lscm {

namespace fs = std::filesystem;

namespace {
constexpr std::size_t kStem = 4;  // image pixels per feature cell along each axis
constexpr double kHeadPrior = -2.5;
}

Model::Model(const Config& config) : config_(config), vocab_(grammar_vocabulary()) {
  config_.validate();
  Rng rng(mix_seed(config_.seed, 0x4D4F44454CULL));
  const std::size_t c_in = kStem * kStem * 3;

  Tensor table = rng.uniform_tensor({vocab_.size(), config_.c_e}, -1.0, 1.0);
  if (!config_.embeddings.empty()) load_embeddings(config_.embeddings, vocab_, table);
  embed_table_ = Var::parameter(std::move(table));
  lstm_ = make_lstm_params(rng, config_.c_e, config_.c_l);

  for (std::size_t i = 0; i < kLevels.size(); ++i) {
    const std::size_t in = i == 0 ? c_in : config_.c_v;
    const std::size_t out = config_.c_v;
    cnn_.push_back({Var::parameter(glorot_uniform(rng, {3, 3, in, out}, 9 * in, 9 * out)),
                    Var::parameter(Tensor({out}))});
  }
  for (std::size_t i = 0; i < kLevels.size(); ++i) {
    levels_.push_back(make_lscm_level_params(rng, config_.lscm_dims(), config_.n_layers.max_layers()));
  }
  fusion_ = make_convlstm_params(rng, config_.c_o, config_.c_s);
  head_ = make_head_params(rng, config_.c_s);
  // start the head at the log-odds of a typical referent's share of the image
  head_.b.mutable_value()[0] = kHeadPrior;

  params_.emplace_back("embed.table", embed_table_);
  params_.emplace_back("lstm.w_x", lstm_.w_x);
  params_.emplace_back("lstm.w_h", lstm_.w_h);
  params_.emplace_back("lstm.b", lstm_.b);
  for (std::size_t i = 0; i < cnn_.size(); ++i) {
    params_.emplace_back("cnn.conv" + std::to_string(i + 1) + ".w", cnn_[i].w);
    params_.emplace_back("cnn.conv" + std::to_string(i + 1) + ".b", cnn_[i].b);
  }
  for (std::size_t i = 0; i < levels_.size(); ++i) {
    levels_[i].collect("lscm.level" + std::to_string(kLevels[i]) + ".", params_);
  }
  fusion_.collect("fusion.convlstm.", params_);
  head_.collect("head.", params_);
}

NamedParams Model::trainable() const {
  NamedParams out;
  for (const auto& [name, v] : params_) {
    if (config_.freeze_cnn && name.rfind("cnn.", 0) == 0) continue;
    out.emplace_back(name, v);
  }
  return out;
}

ModelOutput Model::forward(const Tensor& image, const TokenSequence& tokens, const DependencyTree& tree) const {
  const std::size_t n = config_.image_size;
  if (image.shape() != Shape{n, n, 3}) {
    throw DimensionError("model input must be " + shape_str({n, n, 3}) + ", got " + shape_str(image.shape()));
  }
  if (tokens.size() != tree.size()) throw DimensionError("token count does not match the dependency tree");

  ModelOutput out;
  Tensor img = image;
  for (auto& v : img.data()) v = 2.0 * v - 1.0;  // [0, 1] -> [-1, 1]
  Var x = pixel_unshuffle(Var::constant(img), kStem);
  for (const auto& conv : cnn_) {
    x = relu(conv2d_same(x, conv.w, conv.b));
    out.visual.push_back(x);
  }
  out.words = lstm_encode(embed(tokens, vocab_, embed_table_), lstm_);
  out.levels = lscm_forward(out.visual, out.words, tree, levels_, config_.lscm_options());

  std::map<int, Var> y;
  for (std::size_t i = 0; i < kLevels.size(); ++i) y[kLevels[i]] = out.levels[i].y;
  out.fused = dual_path_fuse(y, fusion_);
  out.logits = predict_mask(out.fused, head_, kStem);
  return out;
}

Var Model::loss(const Example& ex) const {
  return bce_loss(forward(ex.image, ex.tokens, ex.tree).logits, ex.mask.to_tensor());
}

Tensor Model::probabilities(const Example& ex) const {
  NoGradGuard guard;
  Var logits = forward(ex.image, ex.tokens, ex.tree).logits;
  Tensor p({logits.dim(0), logits.dim(1)});
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = 1.0 / (1.0 + std::exp(-logits.value()[i]));
  return p;
}

BinaryMask Model::predict(const Example& ex) const {
  const Tensor p = probabilities(ex);
  BinaryMask m(p.dim(0), p.dim(1));
  for (std::size_t i = 0; i < p.size(); ++i) m.bits[i] = p[i] > 0.5 ? 1 : 0;
  return m;
}

std::vector<fs::path> write_attention_maps(const Model& model, const Example& ex, const fs::path& out_dir) {
  NoGradGuard guard;
  const ModelOutput out = model.forward(ex.image, ex.tokens, ex.tree);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  const std::size_t h = out.visual.front().dim(0), w = out.visual.front().dim(1);
  std::vector<fs::path> written;
  for (std::size_t lv = 0; lv < out.levels.size(); ++lv) {
    const Tensor& b = out.levels[lv].b.value();
    for (std::size_t t = 0; t < b.dim(0); ++t) {
      char stem[96];
      std::snprintf(stem, sizeof stem, "level%d_word%02zu_%s", kLevels[lv], t + 1, ex.tokens.tokens[t].c_str());
      const fs::path csv = out_dir / (std::string(stem) + ".csv");
      std::ofstream f(csv);
      if (!f) throw IoError("cannot write " + csv.string());
      double mx = 0.0;
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          const double v = b.at(t, y * w + x);
          mx = std::max(mx, v);
          char buf[32];
          std::snprintf(buf, sizeof buf, "%.17g", v);
          f << (x ? "," : "") << buf;
        }
        f << '\n';
      }
      std::vector<std::uint8_t> px(h * w);
      for (std::size_t i = 0; i < px.size(); ++i) {
        px[i] = static_cast<std::uint8_t>(std::lround(mx > 0 ? 255.0 * b.at(t, i) / mx : 0.0));
      }
      const fs::path pgm = out_dir / (std::string(stem) + ".pgm");
      write_pgm(pgm, h, w, px);
      written.push_back(csv);
      written.push_back(pgm);
    }
  }
  return written;
}

void write_prediction(const fs::path& dir, const Tensor& prob) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  const std::size_t h = prob.dim(0), w = prob.dim(1);
  BinaryMask m(h, w);
  for (std::size_t i = 0; i < prob.size(); ++i) m.bits[i] = prob[i] > 0.5 ? 1 : 0;
  write_mask_pgm(dir / "mask.pgm", m);
  std::ofstream f(dir / "prob.csv");
  if (!f) throw IoError("cannot write " + (dir / "prob.csv").string());
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.17g", prob.at(y, x));
      f << (x ? "," : "") << buf;
    }
    f << '\n';
  }
}

}  // namespace lscm
