#pragma once

#include <filesystem>
#include <vector>

#include "lscm/config.hpp"
#include "lscm/fusion.hpp"
#include "lscm/lscm.hpp"
#include "lscm/synth.hpp"
#include "lscm/text.hpp"

namespace lscm {

struct ConvParams {
  Var w;
  Var b;
};

struct ModelOutput {
  Var logits;                          // [Hi x Wi x 1]
  std::vector<Var> visual;             // V_2..V_5
  Var words;                           // Q
  std::vector<LscmLevelOutput> levels;  // per level, ordered 2..5
  Var fused;                           // final ConvLSTM hidden state
};

/// The full referring-segmentation network: conv feature stack, word encoder,
/// one LSCM block per level, dual-path ConvLSTM fusion and the mask head.
class Model {
 public:
  explicit Model(const Config& config);

  ModelOutput forward(const Tensor& image, const TokenSequence& tokens, const DependencyTree& tree) const;
  Var loss(const Example& ex) const;
  /// Sigmoid probabilities [Hi x Wi], computed without recording.
  Tensor probabilities(const Example& ex) const;
  /// Probability > 0.5.
  BinaryMask predict(const Example& ex) const;

  /// Every parameter in a fixed registration order.
  const NamedParams& parameters() const { return params_; }
  /// Parameters updated by the optimizer (the conv stack is left out when frozen).
  NamedParams trainable() const;

  const Config& config() const { return config_; }
  const Vocabulary& vocab() const { return vocab_; }

 private:
  Config config_;
  Vocabulary vocab_;
  Var embed_table_;
  LstmParams lstm_;
  std::vector<ConvParams> cnn_;
  std::vector<LscmLevelParams> levels_;
  ConvLstmParams fusion_;
  HeadParams head_;
  NamedParams params_;
};

/// Writes, for every level and word, the attention row B[t] as an H x W CSV and
/// as an 8-bit PGM scaled by the row maximum. Returns the files written.
std::vector<std::filesystem::path> write_attention_maps(const Model& model, const Example& ex,
                                                        const std::filesystem::path& out_dir);

/// Writes the thresholded mask (mask.pgm) and raw probabilities (prob.csv).
void write_prediction(const std::filesystem::path& dir, const Tensor& probabilities);

}  // namespace lscm
