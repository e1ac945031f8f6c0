#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "lscm/autodiff.hpp"
#include "lscm/rng.hpp"

namespace lscm {

inline constexpr std::size_t kMaxTokens = 20;

struct TokenSequence {
  std::vector<std::string> tokens;

  std::size_t size() const { return tokens.size(); }
  std::string joined() const;
};

/// Lowercases, strips ASCII punctuation, splits on whitespace and keeps at most
/// kMaxTokens tokens. Throws InputError when nothing is left.
TokenSequence tokenize(std::string_view text);

/// Word index map; index 0 is the unknown-word slot.
class Vocabulary {
 public:
  Vocabulary();

  std::size_t add(const std::string& word);
  std::size_t index(const std::string& word) const;
  bool contains(const std::string& word) const { return index_.count(word) > 0; }
  const std::string& word(std::size_t i) const { return words_.at(i); }
  std::size_t size() const { return words_.size(); }

  std::vector<std::size_t> encode(const TokenSequence& tokens) const;

  /// One word per line, in index order, starting at index 1.
  std::string serialize() const;
  static Vocabulary deserialize(std::string_view text);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.words_ == b.words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Rows of the embedding table for each token (unknown words map to row 0).
Var embed(const TokenSequence& tokens, const Vocabulary& vocab, const Var& table);

/// Overwrites rows of table for words present in a whitespace-separated
/// "word v1 ... vC" file; other rows are untouched. Returns the number of rows set.
std::size_t load_embeddings(const std::string& path, const Vocabulary& vocab, Tensor& table);
std::size_t load_embeddings_from_string(std::string_view text, const Vocabulary& vocab, Tensor& table);

struct LstmParams {
  Var w_x;  // [C_e x 4C_l], gate blocks ordered i, f, o, g
  Var w_h;  // [C_l x 4C_l]
  Var b;    // [4C_l]

  std::size_t hidden() const { return w_h.dim(0); }
};

/// Glorot weights; forget-gate bias 1, other biases 0.
LstmParams make_lstm_params(Rng& rng, std::size_t input_dim, std::size_t hidden_dim);

/// Single-layer unidirectional LSTM with zero initial state; returns the stacked
/// hidden states [T x C_l].
Var lstm_encode(const Var& x, const LstmParams& p);

/// Head assignments of a dependency parse. Heads are 1-indexed, 0 = root.
class DependencyTree {
 public:
  DependencyTree() = default;
  /// Validates the tree property; throws InputError otherwise.
  explicit DependencyTree(std::vector<std::size_t> heads);

  std::size_t size() const { return heads_.size(); }
  /// Head of node i (1-indexed), 0 for the root.
  std::size_t head(std::size_t i) const { return heads_.at(i - 1); }
  const std::vector<std::size_t>& heads() const { return heads_; }
  /// 1-indexed root node.
  std::size_t root() const;
  /// Children set of node j (1-indexed).
  std::vector<std::size_t> children(std::size_t j) const;
  /// True when i is a child of j or j is a child of i (both 1-indexed).
  bool is_edge(std::size_t i, std::size_t j) const;
  /// Longest root-to-node path, in edges.
  std::size_t depth() const;

  friend bool operator==(const DependencyTree& a, const DependencyTree& b) { return a.heads_ == b.heads_; }

 private:
  std::vector<std::size_t> heads_;
};

struct ParsedSentence {
  TokenSequence tokens;
  DependencyTree tree;
};

/// Reads every sentence of a CoNLL-U subset document. Lines carry
/// ID, FORM, HEAD as the first three tab-separated columns; full 10-column
/// CoNLL-U lines take HEAD from column 7. Comment lines and multiword/empty
/// node IDs are skipped. Errors are ParseError with the offending line.
std::vector<ParsedSentence> parse_conllu_document(std::string_view text);

/// Exactly one sentence is expected.
DependencyTree parse_conllu(std::string_view text);

std::string to_conllu(const TokenSequence& tokens, const DependencyTree& tree);

struct TreeMask {
  Tensor s;  // [T x T]
  double alpha = 0.1;
};

/// S[i][j] = 1 on parent/child pairs, alpha elsewhere (including the diagonal).
TreeMask tree_mask(const DependencyTree& tree, double alpha);

}  // namespace lscm
