#include "lscm/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "lscm/errors.hpp"

namespace lscm {

namespace fs = std::filesystem;

namespace {

constexpr std::array<const char*, kNumShapes> kShapeNames = {"circle", "square", "triangle"};
constexpr std::array<const char*, kNumColors> kColorNames = {"red",  "green",   "blue",  "yellow",
                                                             "cyan", "magenta", "white", "orange"};
constexpr std::array<std::array<double, 3>, kNumColors> kPalette = {{{0.95, 0.1, 0.1},
                                                                     {0.1, 0.8, 0.1},
                                                                     {0.15, 0.25, 0.95},
                                                                     {0.95, 0.95, 0.1},
                                                                     {0.1, 0.9, 0.9},
                                                                     {0.9, 0.1, 0.9},
                                                                     {0.97, 0.97, 0.97},
                                                                     {0.98, 0.55, 0.05}}};
constexpr int kPatchMargin = 2;
constexpr int kMaxAttempts = 100;
constexpr int kPlacementTries = 60;

ShapeKind random_shape(Rng& rng) { return static_cast<ShapeKind>(rng.uniform_int(0, kNumShapes - 1)); }
Color random_color(Rng& rng) { return static_cast<Color>(rng.uniform_int(0, kNumColors - 1)); }

Color random_color_except(Rng& rng, std::initializer_list<Color> banned) {
  while (true) {
    Color c = random_color(rng);
    if (std::find(banned.begin(), banned.end(), c) == banned.end()) return c;
  }
}

struct Box {
  int x0, y0, x1, y1;  // half-open
};

Box footprint(const SceneObject& o) {
  const int m = o.patch ? kPatchMargin : 0;
  return {o.x0 - m, o.y0 - m, o.x0 + o.size + m, o.y0 + o.size + m};
}

bool separated(const Box& a, const Box& b) {
  // at least one pixel of background between footprints
  return a.x1 < b.x0 || b.x1 < a.x0 || a.y1 < b.y0 || b.y1 < a.y0;
}

BinaryMask rasterize(const SceneObject& o) {
  BinaryMask m(kImageSize, kImageSize);
  const double s = o.size;
  const double cx = o.x0 + s / 2.0, cy = o.y0 + s / 2.0;
  for (int dy = 0; dy < o.size; ++dy) {
    for (int dx = 0; dx < o.size; ++dx) {
      const double px = o.x0 + dx + 0.5, py = o.y0 + dy + 0.5;
      bool inside = false;
      switch (o.shape) {
        case ShapeKind::square:
          inside = true;
          break;
        case ShapeKind::circle:
          inside = (px - cx) * (px - cx) + (py - cy) * (py - cy) <= (s / 2.0) * (s / 2.0);
          break;
        case ShapeKind::triangle: {
          // apex at top centre, base along the bottom row
          const double half = (dy + 1.0) / s * (s / 2.0);
          inside = std::abs(px - cx) <= half;
          break;
        }
      }
      if (inside) m.at(static_cast<std::size_t>(o.y0 + dy), static_cast<std::size_t>(o.x0 + dx)) = 1;
    }
  }
  return m;
}

/// Positions every object without overlap; false when some object does not fit.
bool place_objects(Rng& rng, std::vector<SceneObject>& objects) {
  std::vector<Box> placed;
  const int n = static_cast<int>(kImageSize);
  for (auto& o : objects) {
    const int m = o.patch ? kPatchMargin : 0;
    bool ok = false;
    for (int t = 0; t < kPlacementTries && !ok; ++t) {
      o.x0 = static_cast<int>(rng.uniform_int(m, n - o.size - m));
      o.y0 = static_cast<int>(rng.uniform_int(m, n - o.size - m));
      const Box b = footprint(o);
      ok = std::all_of(placed.begin(), placed.end(), [&](const Box& p) { return separated(b, p); });
    }
    if (!ok) return false;
    placed.push_back(footprint(o));
  }
  return true;
}

void render(Rng& rng, Scene& scene) {
  Tensor& img = scene.image;
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = 0.15;
  auto paint = [&](std::size_t y, std::size_t x, Color c) {
    for (std::size_t ch = 0; ch < 3; ++ch) img.at(y, x, ch) = kPalette[static_cast<std::size_t>(c)][ch];
  };
  for (const auto& o : scene.objects) {
    if (!o.patch) continue;
    const Box b = footprint(o);
    for (int y = b.y0; y < b.y1; ++y)
      for (int x = b.x0; x < b.x1; ++x) paint(static_cast<std::size_t>(y), static_cast<std::size_t>(x), *o.patch);
  }
  scene.masks.clear();
  for (const auto& o : scene.objects) {
    BinaryMask m = rasterize(o);
    for (std::size_t y = 0; y < kImageSize; ++y)
      for (std::size_t x = 0; x < kImageSize; ++x)
        if (m.at(y, x)) paint(y, x, o.color);
    scene.masks.push_back(std::move(m));
  }
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = std::clamp(img[i] + rng.uniform(-0.05, 0.05), 0.0, 1.0);
}

bool same_kind(const SceneObject& o, ShapeKind s, Color c) { return o.shape == s && o.color == c; }

SceneObject make_object(Rng& rng, ShapeKind s, Color c, int max_size) {
  SceneObject o;
  o.shape = s;
  o.color = c;
  o.size = static_cast<int>(rng.uniform_int(7, max_size));
  return o;
}

/// Draws a (shape, color) pair not in `banned`.
std::pair<ShapeKind, Color> random_kind_except(Rng& rng, const std::vector<std::pair<ShapeKind, Color>>& banned) {
  while (true) {
    std::pair<ShapeKind, Color> k{random_shape(rng), random_color(rng)};
    if (std::find(banned.begin(), banned.end(), k) == banned.end()) return k;
  }
}

std::vector<SceneObject> draft_objects(Rng& rng, Difficulty difficulty, bool& spatial) {
  spatial = false;
  std::vector<SceneObject> objs;
  const ShapeKind s = random_shape(rng);
  const Color c = random_color(rng);
  switch (difficulty) {
    case Difficulty::simple: {
      const int n = static_cast<int>(rng.uniform_int(2, 5));
      const int max_size = n >= 4 ? 10 : 12;
      objs.push_back(make_object(rng, s, c, max_size));
      for (int i = 1; i < n; ++i) {
        ShapeKind other;
        do {
          other = random_shape(rng);
        } while (other == s);
        objs.push_back(make_object(rng, other, random_color(rng), max_size));
      }
      break;
    }
    case Difficulty::attribute: {
      const int n = static_cast<int>(rng.uniform_int(2, 5));
      const int max_size = n >= 4 ? 10 : 12;
      objs.push_back(make_object(rng, s, c, max_size));
      objs.push_back(make_object(rng, s, random_color_except(rng, {c}), max_size));
      for (int i = 2; i < n; ++i) {
        auto [os, oc] = random_kind_except(rng, {{s, c}});
        objs.push_back(make_object(rng, os, oc, max_size));
      }
      break;
    }
    case Difficulty::relation: {
      spatial = rng.bernoulli(0.5);
      if (!spatial) {
        const int n = static_cast<int>(rng.uniform_int(2, 5));
        const int max_size = n >= 4 ? 9 : 11;
        SceneObject t = make_object(rng, s, c, max_size);
        t.patch = random_color_except(rng, {c});
        SceneObject d = make_object(rng, s, c, max_size);
        if (rng.bernoulli(0.5)) d.patch = random_color_except(rng, {c, *t.patch});
        objs.push_back(t);
        objs.push_back(d);
        for (int i = 2; i < n; ++i) {
          auto [os, oc] = random_kind_except(rng, {{s, c}});
          objs.push_back(make_object(rng, os, oc, max_size));
        }
      } else {
        const int n = static_cast<int>(rng.uniform_int(3, 5));
        const int max_size = n >= 4 ? 10 : 11;
        objs.push_back(make_object(rng, s, c, max_size));
        objs.push_back(make_object(rng, s, c, max_size));
        auto [ls, lc] = random_kind_except(rng, {{s, c}});
        objs.push_back(make_object(rng, ls, lc, max_size));
        for (int i = 3; i < n; ++i) {
          auto [os, oc] = random_kind_except(rng, {{s, c}, {ls, lc}});
          objs.push_back(make_object(rng, os, oc, max_size));
        }
      }
      break;
    }
  }
  return objs;
}

std::vector<Query> queries_for(const Scene& scene, std::size_t target, int tier) {
  const SceneObject& t = scene.objects[target];
  std::vector<Query> out;
  if (tier == 0) {
    out.push_back(Query{t.shape, t.color, std::nullopt, std::nullopt});
    return out;
  }
  if (t.patch) out.push_back(Query{t.shape, t.color, t.patch, std::nullopt});
  for (std::size_t j = 0; j < scene.objects.size(); ++j) {
    if (j == target) continue;
    const SceneObject& lm = scene.objects[j];
    for (Direction d : {Direction::left, Direction::right, Direction::above, Direction::below}) {
      if (relation_holds(t, lm, d)) out.push_back(Query{t.shape, std::nullopt, std::nullopt, Query::Relation{d, lm.color, lm.shape}});
    }
  }
  return out;
}

std::vector<Query> unique_queries(const Scene& scene, std::size_t target, int tier) {
  std::vector<Query> out;
  for (const auto& q : queries_for(scene, target, tier)) {
    auto hits = match_query(scene, q);
    if (hits.size() == 1 && hits.front() == target) out.push_back(q);
  }
  return out;
}

}  // namespace

const char* to_string(ShapeKind s) { return kShapeNames[static_cast<std::size_t>(s)]; }
const char* to_string(Color c) { return kColorNames[static_cast<std::size_t>(c)]; }

const char* to_string(Difficulty d) {
  switch (d) {
    case Difficulty::simple: return "simple";
    case Difficulty::attribute: return "attribute";
    case Difficulty::relation: return "relation";
  }
  return "?";
}

const char* to_string(Direction d) {
  switch (d) {
    case Direction::left: return "left";
    case Direction::right: return "right";
    case Direction::above: return "above";
    case Direction::below: return "below";
  }
  return "?";
}

Difficulty parse_difficulty(const std::string& s) {
  if (s == "simple") return Difficulty::simple;
  if (s == "attribute") return Difficulty::attribute;
  if (s == "relation") return Difficulty::relation;
  throw InputError("unknown difficulty '" + s + "'");
}

std::vector<std::string> grammar_lexicon() {
  std::vector<std::string> words;
  for (auto c : kColorNames) words.emplace_back(c);
  for (auto s : kShapeNames) words.emplace_back(s);
  for (auto w : {"on", "patch", "left", "right", "above", "below", "of"}) words.emplace_back(w);
  return words;
}

Vocabulary grammar_vocabulary() {
  Vocabulary v;
  for (const auto& w : grammar_lexicon()) v.add(w);
  return v;
}

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count_if(bits.begin(), bits.end(), [](std::uint8_t b) { return b != 0; }));
}

Tensor BinaryMask::to_tensor() const {
  Tensor t({height, width});
  for (std::size_t i = 0; i < bits.size(); ++i) t[i] = bits[i] ? 1.0 : 0.0;
  return t;
}

Scene gen_scene(Rng& rng, Difficulty difficulty) {
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    Scene scene;
    scene.difficulty = difficulty;
    bool spatial = false;
    scene.objects = draft_objects(rng, difficulty, spatial);
    if (!place_objects(rng, scene.objects)) continue;
    scene.target = 0;
    if (spatial && unique_queries(scene, 0, 1).empty()) continue;
    render(rng, scene);
    return scene;
  }
  throw GenerationError("could not lay out a " + std::string(to_string(difficulty)) + " scene after " +
                        std::to_string(kMaxAttempts) + " attempts");
}

bool relation_holds(const SceneObject& target, const SceneObject& landmark, Direction direction) {
  const double dx = target.center_x() - landmark.center_x();
  const double dy = target.center_y() - landmark.center_y();
  switch (direction) {
    case Direction::left: return dx < 0 && std::abs(dx) > std::abs(dy);
    case Direction::right: return dx > 0 && std::abs(dx) > std::abs(dy);
    case Direction::above: return dy < 0 && std::abs(dy) > std::abs(dx);
    case Direction::below: return dy > 0 && std::abs(dy) > std::abs(dx);
  }
  return false;
}

std::vector<std::size_t> match_query(const Scene& scene, const Query& query) {
  std::optional<std::size_t> landmark;
  if (query.relation) {
    std::vector<std::size_t> lms;
    for (std::size_t j = 0; j < scene.objects.size(); ++j) {
      if (same_kind(scene.objects[j], query.relation->landmark_shape, query.relation->landmark_color)) lms.push_back(j);
    }
    // the landmark phrase must itself be unambiguous
    if (lms.size() != 1) return {};
    landmark = lms.front();
  }
  std::vector<std::size_t> hits;
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    const SceneObject& o = scene.objects[i];
    if (o.shape != query.shape) continue;
    if (query.color && o.color != *query.color) continue;
    if (query.patch && (!o.patch || *o.patch != *query.patch)) continue;
    if (landmark) {
      if (i == *landmark) continue;
      if (!relation_holds(o, scene.objects[*landmark], query.relation->direction)) continue;
    }
    hits.push_back(i);
  }
  return hits;
}

Expression realize(const Query& q) {
  Expression e;
  e.query = q;
  auto& tok = e.tokens.tokens;
  if (q.relation && !q.color && !q.patch) {
    tok = {to_string(q.shape), to_string(q.relation->direction), "of", to_string(q.relation->landmark_color),
           to_string(q.relation->landmark_shape)};
    e.tree = DependencyTree({0, 1, 2, 5, 3});
  } else if (q.color && q.patch && !q.relation) {
    tok = {to_string(*q.color), to_string(q.shape), "on", to_string(*q.patch), "patch"};
    e.tree = DependencyTree({2, 0, 2, 5, 3});
  } else if (q.color && !q.patch && !q.relation) {
    tok = {to_string(*q.color), to_string(q.shape)};
    e.tree = DependencyTree({2, 0});
  } else {
    throw GenerationError("query has no template");
  }
  return e;
}

Expression gen_expression(const Scene& scene, std::size_t target, Rng& rng) {
  if (target >= scene.objects.size()) throw GenerationError("target index out of range");
  for (int tier = 0; tier < 2; ++tier) {
    auto candidates = unique_queries(scene, target, tier);
    if (candidates.empty()) continue;
    const auto pick = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(candidates.size()) - 1));
    return realize(candidates[pick]);
  }
  throw GenerationError("target " + std::to_string(target) + " cannot be described unambiguously");
}

Difficulty DifficultyMix::draw(Rng& rng) const {
  const double total = simple + attribute + relation;
  const double u = rng.uniform() * total;
  if (u < simple) return Difficulty::simple;
  if (u < simple + attribute) return Difficulty::attribute;
  return Difficulty::relation;
}

DifficultyMix DifficultyMix::only(Difficulty d) {
  return {d == Difficulty::simple ? 1.0 : 0.0, d == Difficulty::attribute ? 1.0 : 0.0,
          d == Difficulty::relation ? 1.0 : 0.0};
}

DifficultyMix DifficultyMix::parse(const std::string& text) {
  if (text == "simple" || text == "attribute" || text == "relation") return only(parse_difficulty(text));
  DifficultyMix m;
  char c1 = 0, c2 = 0;
  std::istringstream in(text);
  if (!(in >> m.simple >> c1 >> m.attribute >> c2 >> m.relation) || c1 != ':' || c2 != ':' || !in.eof()) {
    throw InputError("difficulty mix must look like 'a:b:c' or name one difficulty, got '" + text + "'");
  }
  if (m.simple < 0 || m.attribute < 0 || m.relation < 0 || m.simple + m.attribute + m.relation <= 0) {
    throw InputError("difficulty mix weights must be non-negative with a positive sum");
  }
  return m;
}

std::string DifficultyMix::str() const {
  std::ostringstream os;
  os << simple << ':' << attribute << ':' << relation;
  return os.str();
}

Example gen_example(std::uint64_t seed, const DifficultyMix& mix, const std::string& id) {
  Rng rng(seed);
  Example ex;
  ex.id = id;
  ex.seed = seed;
  ex.difficulty = mix.draw(rng);
  Scene scene = gen_scene(rng, ex.difficulty);
  Expression expr = gen_expression(scene, scene.target, rng);
  ex.image = std::move(scene.image);
  ex.tokens = std::move(expr.tokens);
  ex.tree = std::move(expr.tree);
  ex.target = scene.target;
  ex.mask = scene.masks[scene.target];
  return ex;
}

std::uint64_t split_sample_seed(std::uint64_t master_seed, Split split, std::size_t index) {
  const std::uint64_t stream = (split == Split::train ? 0ULL : (1ULL << 40)) + index;
  return mix_seed(master_seed, stream);
}

namespace {
std::string sample_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06zu", i);
  return buf;
}
}  // namespace

std::vector<Example> make_split(std::uint64_t master_seed, Split split, std::size_t count, const DifficultyMix& mix) {
  std::vector<Example> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(gen_example(split_sample_seed(master_seed, split, i), mix, sample_id(i)));
  return out;
}

void build_split(const fs::path& root, std::uint64_t master_seed, SplitCounts counts, const DifficultyMix& mix) {
  if (counts.train == 0 || counts.val == 0) throw InputError("split counts must be >= 1");
  for (auto [split, name, count] : {std::tuple{Split::train, "train", counts.train}, std::tuple{Split::val, "val", counts.val}}) {
    for (std::size_t i = 0; i < count; ++i) {
      const Example ex = gen_example(split_sample_seed(master_seed, split, i), mix, sample_id(i));
      write_example(root / name / ex.id, ex);
    }
  }
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  if (!f) throw IoError("write failed for " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

Example mirror_example(const Example& ex) {
  Example out = ex;
  const std::size_t h = ex.image.dim(0), w = ex.image.dim(1), ch = ex.image.dim(2);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t k = 0; k < ch; ++k) out.image.at(y, x, k) = ex.image.at(y, w - 1 - x, k);
  for (std::size_t y = 0; y < ex.mask.height; ++y)
    for (std::size_t x = 0; x < ex.mask.width; ++x) out.mask.at(y, x) = ex.mask.at(y, ex.mask.width - 1 - x);
  for (auto& t : out.tokens.tokens) {
    if (t == "left") t = "right";
    else if (t == "right") t = "left";
  }
  return out;
}

void write_example(const fs::path& dir, const Example& ex) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  std::string csv;
  for (std::size_t p = 0; p < kImageSize * kImageSize; ++p) {
    csv += format_double(ex.image[p * 3]) + ',' + format_double(ex.image[p * 3 + 1]) + ',' +
           format_double(ex.image[p * 3 + 2]) + '\n';
  }
  write_text(dir / "image.csv", csv);
  write_mask_pgm(dir / "mask.pgm", ex.mask);
  write_text(dir / "expr.txt", ex.tokens.joined() + '\n');
  write_text(dir / "parse.conllu", to_conllu(ex.tokens, ex.tree) + '\n');
  write_text(dir / "meta.txt", "seed = " + std::to_string(ex.seed) + "\ndifficulty = " + to_string(ex.difficulty) +
                                   "\ntarget = " + std::to_string(ex.target) + '\n');
}

Example read_example(const fs::path& dir) {
  Example ex;
  ex.id = dir.filename().string();
  {
    std::istringstream in(read_text(dir / "image.csv"));
    std::string line;
    std::size_t p = 0;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (p >= kImageSize * kImageSize) throw InputError(dir.string() + "/image.csv: too many rows");
      std::istringstream ls(line);
      char sep1 = 0, sep2 = 0;
      double r, g, b;
      if (!(ls >> r >> sep1 >> g >> sep2 >> b) || sep1 != ',' || sep2 != ',') {
        throw InputError(dir.string() + "/image.csv: bad row " + std::to_string(p + 1));
      }
      ex.image[p * 3] = r;
      ex.image[p * 3 + 1] = g;
      ex.image[p * 3 + 2] = b;
      ++p;
    }
    if (p != kImageSize * kImageSize) throw InputError(dir.string() + "/image.csv: expected 1024 rows");
  }
  ex.mask = read_mask_pgm(dir / "mask.pgm");
  auto sentences = parse_conllu_document(read_text(dir / "parse.conllu"));
  if (sentences.size() != 1) throw InputError(dir.string() + "/parse.conllu: expected one sentence");
  ex.tree = sentences.front().tree;
  ex.tokens = tokenize(read_text(dir / "expr.txt"));
  if (ex.tokens.tokens != sentences.front().tokens.tokens) {
    throw InputError(dir.string() + ": expr.txt and parse.conllu disagree");
  }
  if (fs::exists(dir / "meta.txt")) {
    std::istringstream in(read_text(dir / "meta.txt"));
    std::string key, eq, value;
    while (in >> key >> eq >> value) {
      if (key == "seed") ex.seed = std::stoull(value);
      else if (key == "difficulty") ex.difficulty = parse_difficulty(value);
      else if (key == "target") ex.target = std::stoull(value);
    }
  }
  return ex;
}

std::vector<Example> load_examples(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> subdirs;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_directory()) subdirs.push_back(entry.path());
  }
  std::sort(subdirs.begin(), subdirs.end());
  std::vector<Example> out;
  out.reserve(subdirs.size());
  for (const auto& d : subdirs) out.push_back(read_example(d));
  return out;
}

void write_pgm(const fs::path& path, std::size_t height, std::size_t width, const std::vector<std::uint8_t>& pixels) {
  if (pixels.size() != height * width) throw DimensionError("write_pgm: pixel count does not match extents");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << "P5\n" << width << ' ' << height << "\n255\n";
  f.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  if (!f) throw IoError("write failed for " + path.string());
}

void write_mask_pgm(const fs::path& path, const BinaryMask& mask) {
  std::vector<std::uint8_t> px(mask.bits.size());
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = mask.bits[i] ? 255 : 0;
  write_pgm(path, mask.height, mask.width, px);
}

BinaryMask read_mask_pgm(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read " + path.string());
  auto next_token = [&]() {
    std::string tok;
    char ch;
    while (f.get(ch)) {
      if (ch == '#') {
        std::string rest;
        std::getline(f, rest);
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(ch))) {
        if (!tok.empty()) break;
        continue;
      }
      tok += ch;
    }
    return tok;
  };
  const std::string magic = next_token();
  if (magic != "P5" && magic != "P2") throw InputError(path.string() + ": not a PGM file");
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(next_token());
    h = std::stoul(next_token());
    maxval = std::stoul(next_token());
  } catch (const std::exception&) {
    throw InputError(path.string() + ": bad PGM header");
  }
  if (w == 0 || h == 0 || maxval == 0 || maxval > 255) throw InputError(path.string() + ": unsupported PGM header");
  BinaryMask m(h, w);
  if (magic == "P5") {
    std::vector<char> buf(w * h);
    f.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (f.gcount() != static_cast<std::streamsize>(buf.size())) throw InputError(path.string() + ": truncated PGM");
    for (std::size_t i = 0; i < buf.size(); ++i) m.bits[i] = buf[i] != 0 ? 1 : 0;
  } else {
    for (std::size_t i = 0; i < w * h; ++i) {
      const std::string tok = next_token();
      if (tok.empty()) throw InputError(path.string() + ": truncated PGM");
      m.bits[i] = std::stoul(tok) != 0 ? 1 : 0;
    }
  }
  return m;
}

IouCounts iou_counts(const BinaryMask& pred, const BinaryMask& gt) {
  if (pred.height != gt.height || pred.width != gt.width) {
    throw DimensionError("mask extents differ: " + std::to_string(pred.height) + "x" + std::to_string(pred.width) +
                         " vs " + std::to_string(gt.height) + "x" + std::to_string(gt.width));
  }
  IouCounts c;
  for (std::size_t i = 0; i < pred.bits.size(); ++i) {
    const bool p = pred.bits[i] != 0, g = gt.bits[i] != 0;
    c.intersection += (p && g) ? 1 : 0;
    c.uni += (p || g) ? 1 : 0;
  }
  return c;
}

double sample_iou(const BinaryMask& pred, const BinaryMask& gt) {
  const IouCounts c = iou_counts(pred, gt);
  return c.uni == 0 ? 1.0 : static_cast<double>(c.intersection) / static_cast<double>(c.uni);
}

double overall_iou(const std::vector<BinaryMask>& preds, const std::vector<BinaryMask>& gts) {
  if (preds.size() != gts.size()) throw DimensionError("overall_iou: prediction and ground-truth counts differ");
  std::uint64_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const IouCounts c = iou_counts(preds[i], gts[i]);
    inter += c.intersection;
    uni += c.uni;
  }
  if (uni == 0) {
    if (inter == 0) return 1.0;
    throw ContractError("overall_iou: zero union with nonzero intersection");
  }
  return static_cast<double>(inter) / static_cast<double>(uni);
}

std::map<double, double> pr_at_x(const std::vector<double>& ious, const std::vector<double>& thresholds) {
  if (ious.empty()) throw InputError("pr_at_x: no samples");
  std::map<double, double> out;
  for (double t : thresholds) {
    const auto above = std::count_if(ious.begin(), ious.end(), [t](double v) { return v > t; });
    out[t] = static_cast<double>(above) / static_cast<double>(ious.size());
  }
  return out;
}

EvalReport evaluate_masks(const std::vector<BinaryMask>& preds, const std::vector<BinaryMask>& gts) {
  EvalReport r;
  r.overall_iou = overall_iou(preds, gts);
  for (std::size_t i = 0; i < preds.size(); ++i) r.per_sample_iou.push_back(sample_iou(preds[i], gts[i]));
  r.pr_at = pr_at_x(r.per_sample_iou);
  return r;
}

std::string EvalReport::table() const {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << "  Pr@0.5  Pr@0.6  Pr@0.7  Pr@0.8  Pr@0.9  Overall IoU\n";
  for (double t : kPrThresholds) os << std::setw(8) << 100.0 * pr_at.at(t);
  os << std::setw(13) << 100.0 * overall_iou << '\n';
  os << "  (" << per_sample_iou.size() << " samples)\n";
  return os.str();
}

std::string EvalReport::csv() const {
  std::ostringstream os;
  os << "metric,value\n";
  os << "overall_iou," << format_double(overall_iou) << '\n';
  for (const auto& [t, v] : pr_at) {
    char name[32];
    std::snprintf(name, sizeof name, "pr@%.1f", t);
    os << name << ',' << format_double(v) << '\n';
  }
  os << "samples," << per_sample_iou.size() << '\n';
  return os.str();
}

}  // namespace lscm
