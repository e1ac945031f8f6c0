#include "lscm/text.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "lscm/errors.hpp"
#include "lscm/ops.hpp"

namespace lscm {

std::string TokenSequence::joined() const {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

TokenSequence tokenize(std::string_view text) {
  TokenSequence seq;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) {
      seq.tokens.push_back(std::move(current));
      current.clear();
    }
  };
  for (char ch : text) {
    const auto u = static_cast<unsigned char>(ch);
    if (std::isspace(u)) {
      flush();
    } else if (!std::ispunct(u)) {
      current += static_cast<char>(std::tolower(u));
    }
  }
  flush();
  if (seq.tokens.empty()) throw InputError("empty expression");
  if (seq.tokens.size() > kMaxTokens) seq.tokens.resize(kMaxTokens);
  return seq;
}

Vocabulary::Vocabulary() : words_{"<unk>"} {}

std::size_t Vocabulary::add(const std::string& word) {
  if (auto it = index_.find(word); it != index_.end()) return it->second;
  const std::size_t i = words_.size();
  words_.push_back(word);
  index_.emplace(word, i);
  return i;
}

std::size_t Vocabulary::index(const std::string& word) const {
  auto it = index_.find(word);
  return it == index_.end() ? 0 : it->second;
}

std::vector<std::size_t> Vocabulary::encode(const TokenSequence& tokens) const {
  std::vector<std::size_t> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens.tokens) out.push_back(index(t));
  return out;
}

std::string Vocabulary::serialize() const {
  std::string out;
  for (std::size_t i = 1; i < words_.size(); ++i) out += words_[i] + '\n';
  return out;
}

Vocabulary Vocabulary::deserialize(std::string_view text) {
  Vocabulary v;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) v.add(line);
  }
  return v;
}

Var embed(const TokenSequence& tokens, const Vocabulary& vocab, const Var& table) {
  const auto idx = vocab.encode(tokens);
  return embedding_lookup(table, idx);
}

std::size_t load_embeddings_from_string(std::string_view text, const Vocabulary& vocab, Tensor& table) {
  const std::size_t dim = table.dim(1);
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0, loaded = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string word;
    if (!(ls >> word)) continue;
    std::vector<double> values;
    double v;
    while (ls >> v) values.push_back(v);
    if (values.size() != dim) {
      throw ParseError("embedding row: expected " + std::to_string(dim) + " values, got " + std::to_string(values.size()),
                       line_no);
    }
    if (!vocab.contains(word)) continue;
    const std::size_t r = vocab.index(word);
    std::copy(values.begin(), values.end(), table.ptr() + r * dim);
    ++loaded;
  }
  return loaded;
}

std::size_t load_embeddings(const std::string& path, const Vocabulary& vocab, Tensor& table) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read embedding file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return load_embeddings_from_string(ss.str(), vocab, table);
}

LstmParams make_lstm_params(Rng& rng, std::size_t input_dim, std::size_t hidden_dim) {
  LstmParams p;
  p.w_x = Var::parameter(glorot_uniform(rng, {input_dim, 4 * hidden_dim}, input_dim, 4 * hidden_dim));
  p.w_h = Var::parameter(glorot_uniform(rng, {hidden_dim, 4 * hidden_dim}, hidden_dim, 4 * hidden_dim));
  Tensor b({4 * hidden_dim});
  for (std::size_t k = hidden_dim; k < 2 * hidden_dim; ++k) b[k] = 1.0;  // forget gate
  p.b = Var::parameter(std::move(b));
  return p;
}

Var lstm_encode(const Var& x, const LstmParams& p) {
  if (x.value().rank() != 2) throw DimensionError("lstm_encode: expected [T x C_e], got " + shape_str(x.shape()));
  const std::size_t t_len = x.dim(0);
  const std::size_t hid = p.hidden();
  if (t_len == 0) throw DimensionError("lstm_encode: empty sequence");
  Var projected = add_bias(matmul(x, p.w_x), p.b);  // [T x 4C]
  Var h = Var::constant(Tensor({1, hid}));
  Var c = Var::constant(Tensor({1, hid}));
  std::vector<Var> hidden;
  hidden.reserve(t_len);
  for (std::size_t t = 0; t < t_len; ++t) {
    Var pre = add(reshape(row(projected, t), {1, 4 * hid}), matmul(h, p.w_h));
    Var i = sigmoid(slice_channels(pre, 0, hid));
    Var f = sigmoid(slice_channels(pre, hid, hid));
    Var o = sigmoid(slice_channels(pre, 2 * hid, hid));
    Var g = tanh(slice_channels(pre, 3 * hid, hid));
    c = add(mul(f, c), mul(i, g));
    h = mul(o, tanh(c));
    hidden.push_back(reshape(h, {hid}));
  }
  return stack_rows(hidden);
}

DependencyTree::DependencyTree(std::vector<std::size_t> heads) : heads_(std::move(heads)) {
  const std::size_t n = heads_.size();
  if (n == 0) throw InputError("dependency tree has no nodes");
  std::size_t roots = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (heads_[i] > n) throw InputError("head of node " + std::to_string(i + 1) + " out of range");
    if (heads_[i] == i + 1) throw InputError("node " + std::to_string(i + 1) + " is its own head");
    if (heads_[i] == 0) ++roots;
  }
  if (roots != 1) throw InputError("dependency tree must have exactly one root, found " + std::to_string(roots));
  for (std::size_t i = 1; i <= n; ++i) {
    std::size_t cur = i, steps = 0;
    while (cur != 0) {
      cur = heads_[cur - 1];
      if (++steps > n) throw InputError("cycle through node " + std::to_string(i));
    }
  }
}

std::size_t DependencyTree::root() const {
  for (std::size_t i = 0; i < heads_.size(); ++i)
    if (heads_[i] == 0) return i + 1;
  return 0;
}

std::vector<std::size_t> DependencyTree::children(std::size_t j) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < heads_.size(); ++i)
    if (heads_[i] == j) out.push_back(i + 1);
  return out;
}

bool DependencyTree::is_edge(std::size_t i, std::size_t j) const { return head(i) == j || head(j) == i; }

std::size_t DependencyTree::depth() const {
  std::size_t best = 0;
  for (std::size_t i = 1; i <= heads_.size(); ++i) {
    std::size_t d = 0;
    for (std::size_t cur = i; heads_[cur - 1] != 0; cur = heads_[cur - 1]) ++d;
    best = std::max(best, d);
  }
  return best;
}

namespace {

std::vector<std::string> split_columns(const std::string& line) {
  std::vector<std::string> cols;
  if (line.find('\t') != std::string::npos) {
    std::size_t start = 0;
    while (true) {
      auto pos = line.find('\t', start);
      cols.push_back(line.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
      if (pos == std::string::npos) break;
      start = pos + 1;
    }
  } else {
    std::istringstream ls(line);
    std::string c;
    while (ls >> c) cols.push_back(c);
  }
  return cols;
}

bool parse_index(const std::string& s, std::size_t& out) {
  const char* b = s.data();
  const char* e = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(b, e, out);
  return ec == std::errc() && ptr == e;
}

bool is_blank(const std::string& s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

struct PendingSentence {
  std::vector<std::string> forms;
  std::vector<std::size_t> heads;
  std::vector<std::size_t> lines;
};

ParsedSentence finish_sentence(PendingSentence& s) {
  const std::size_t n = s.heads.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (s.heads[i] > n) {
      throw ParseError("HEAD " + std::to_string(s.heads[i]) + " out of range 0.." + std::to_string(n), s.lines[i]);
    }
    if (s.heads[i] == i + 1) throw ParseError("token is its own head", s.lines[i]);
  }
  std::size_t roots = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (s.heads[i] == 0 && ++roots > 1) throw ParseError("multiple roots", s.lines[i]);
  }
  for (std::size_t i = 1; i <= n; ++i) {
    std::size_t cur = i, steps = 0;
    while (cur != 0) {
      cur = s.heads[cur - 1];
      if (++steps > n) throw ParseError("cycle in head assignments", s.lines[i - 1]);
    }
  }
  if (roots == 0) throw ParseError("no root", s.lines.front());

  ParsedSentence out;
  for (auto& f : s.forms) {
    std::string lower;
    for (char ch : f) lower += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    out.tokens.tokens.push_back(lower);
  }
  out.tree = DependencyTree(s.heads);
  s = PendingSentence{};
  return out;
}

}  // namespace

std::vector<ParsedSentence> parse_conllu_document(std::string_view text) {
  std::vector<ParsedSentence> sentences;
  PendingSentence pending;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (is_blank(line)) {
      if (!pending.heads.empty()) sentences.push_back(finish_sentence(pending));
      continue;
    }
    if (line[0] == '#') continue;
    auto cols = split_columns(line);
    if (cols.size() < 3) throw ParseError("expected at least ID, FORM, HEAD columns", line_no);
    if (cols[0].find_first_of("-.") != std::string::npos) continue;
    std::size_t id = 0, head = 0;
    if (!parse_index(cols[0], id)) throw ParseError("bad ID '" + cols[0] + "'", line_no);
    const std::string& head_col = cols.size() >= 10 ? cols[6] : cols[2];
    if (!parse_index(head_col, head)) throw ParseError("bad HEAD '" + head_col + "'", line_no);
    if (id != pending.heads.size() + 1) {
      throw ParseError("ID " + std::to_string(id) + " breaks the consecutive sequence (expected " +
                           std::to_string(pending.heads.size() + 1) + ")",
                       line_no);
    }
    if (pending.heads.size() == kMaxTokens) throw ParseError("sentence longer than 20 tokens", line_no);
    pending.forms.push_back(cols[1]);
    pending.heads.push_back(head);
    pending.lines.push_back(line_no);
  }
  if (!pending.heads.empty()) sentences.push_back(finish_sentence(pending));
  return sentences;
}

DependencyTree parse_conllu(std::string_view text) {
  auto sentences = parse_conllu_document(text);
  if (sentences.size() != 1) {
    throw ParseError("expected exactly one sentence, found " + std::to_string(sentences.size()), 1);
  }
  return sentences.front().tree;
}

std::string to_conllu(const TokenSequence& tokens, const DependencyTree& tree) {
  if (tokens.size() != tree.size()) throw DimensionError("to_conllu: token count does not match tree size");
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    out += std::to_string(i + 1) + '\t' + tokens.tokens[i] + '\t' + std::to_string(tree.heads()[i]) + '\n';
  }
  return out;
}

TreeMask tree_mask(const DependencyTree& tree, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("tree mask alpha must lie in [0, 1]");
  const std::size_t n = tree.size();
  TreeMask m{Tensor({n, n}, alpha), alpha};
  for (std::size_t i = 1; i <= n; ++i) {
    const std::size_t h = tree.head(i);
    if (h == 0) continue;
    m.s.at(i - 1, h - 1) = 1.0;
    m.s.at(h - 1, i - 1) = 1.0;
  }
  return m;
}

}  // namespace lscm
