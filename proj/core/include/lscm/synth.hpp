#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lscm/rng.hpp"
#include "lscm/tensor.hpp"
#include "lscm/text.hpp"

namespace lscm {

inline constexpr std::size_t kImageSize = 32;

enum class ShapeKind { circle, square, triangle };
enum class Color { red, green, blue, yellow, cyan, magenta, white, orange };
enum class Difficulty { simple, attribute, relation };
enum class Direction { left, right, above, below };

inline constexpr std::size_t kNumShapes = 3;
inline constexpr std::size_t kNumColors = 8;

const char* to_string(ShapeKind s);
const char* to_string(Color c);
const char* to_string(Difficulty d);
const char* to_string(Direction d);
Difficulty parse_difficulty(const std::string& s);

/// Every word the expression grammar can emit.
std::vector<std::string> grammar_lexicon();
Vocabulary grammar_vocabulary();

struct BinaryMask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> bits;

  BinaryMask() = default;
  BinaryMask(std::size_t h, std::size_t w) : height(h), width(w), bits(h * w, 0) {}

  std::uint8_t& at(std::size_t y, std::size_t x) { return bits[y * width + x]; }
  std::uint8_t at(std::size_t y, std::size_t x) const { return bits[y * width + x]; }
  std::size_t count() const;
  Tensor to_tensor() const;  // [H x W] of 0.0 / 1.0

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

struct SceneObject {
  ShapeKind shape = ShapeKind::square;
  Color color = Color::red;
  int x0 = 0;  // top-left of the shape's bounding box
  int y0 = 0;
  int size = 8;
  std::optional<Color> patch;  // support patch drawn under the shape

  double center_x() const { return x0 + size / 2.0; }
  double center_y() const { return y0 + size / 2.0; }
};

struct Scene {
  Tensor image{Shape{kImageSize, kImageSize, 3}};  // values in [0, 1]
  std::vector<SceneObject> objects;
  std::vector<BinaryMask> masks;  // one per object, shape pixels only
  std::size_t target = 0;         // referent around which the difficulty guarantee is built
  Difficulty difficulty = Difficulty::simple;
};

/// Scenes of 2-5 non-overlapping objects on a 32x32 canvas.
/// attribute: a same-shape different-color distractor is present.
/// relation: a same-shape same-color distractor is present; the target is told
/// apart only by its support patch or by a spatial relation to a landmark.
Scene gen_scene(Rng& rng, Difficulty difficulty);

/// Structured meaning of an expression.
struct Query {
  ShapeKind shape = ShapeKind::square;
  std::optional<Color> color;
  std::optional<Color> patch;
  struct Relation {
    Direction direction;
    Color landmark_color;
    ShapeKind landmark_shape;
  };
  std::optional<Relation> relation;
};

/// True when `target` lies in `direction` of `landmark` (dominant-axis rule).
bool relation_holds(const SceneObject& target, const SceneObject& landmark, Direction direction);

/// Brute-force grounding: indices of all objects the query denotes.
std::vector<std::size_t> match_query(const Scene& scene, const Query& query);

struct Expression {
  TokenSequence tokens;
  DependencyTree tree;
  Query query;
};

/// Realizes a query with the template grammar and its fixed parse.
Expression realize(const Query& query);

/// Picks the simplest template that uniquely denotes `target`; ties among
/// equally simple templates are broken by rng. Throws GenerationError if none does.
Expression gen_expression(const Scene& scene, std::size_t target, Rng& rng);

/// A training/evaluation record: what the model sees plus the answer.
struct Example {
  std::string id;
  Tensor image{Shape{kImageSize, kImageSize, 3}};
  TokenSequence tokens;
  DependencyTree tree;
  BinaryMask mask;
  std::uint64_t seed = 0;
  Difficulty difficulty = Difficulty::simple;
  std::size_t target = 0;
};

/// Mixture weights over difficulties.
struct DifficultyMix {
  double simple = 1.0;
  double attribute = 1.0;
  double relation = 1.0;

  Difficulty draw(Rng& rng) const;
  static DifficultyMix only(Difficulty d);
  /// "simple:attribute:relation" weights, e.g. "1:1:1".
  static DifficultyMix parse(const std::string& text);
  std::string str() const;
};

/// Fully determined by the sample seed.
Example gen_example(std::uint64_t seed, const DifficultyMix& mix, const std::string& id = "");

enum class Split { train, val };

/// Seed of the i-th sample of a split; train and val draw from disjoint streams.
std::uint64_t split_sample_seed(std::uint64_t master_seed, Split split, std::size_t index);

std::vector<Example> make_split(std::uint64_t master_seed, Split split, std::size_t count, const DifficultyMix& mix);

struct SplitCounts {
  std::size_t train = 1;
  std::size_t val = 1;
};

/// Writes root/train/<id>/ and root/val/<id>/ sample directories.
void build_split(const std::filesystem::path& root, std::uint64_t master_seed, SplitCounts counts,
                 const DifficultyMix& mix);

/// Left-right mirror: image and mask columns reversed and the words "left" and
/// "right" exchanged. Shapes are mirror-symmetric, so the expression still
/// refers to the same object. The parse tree is unchanged.
Example mirror_example(const Example& ex);

void write_example(const std::filesystem::path& dir, const Example& ex);
Example read_example(const std::filesystem::path& dir);
/// All sample directories directly under `dir`, sorted by name.
std::vector<Example> load_examples(const std::filesystem::path& dir);

// 8-bit grayscale PGM.
void write_pgm(const std::filesystem::path& path, std::size_t height, std::size_t width,
               const std::vector<std::uint8_t>& pixels);
void write_mask_pgm(const std::filesystem::path& path, const BinaryMask& mask);
/// Nonzero pixels become 1.
BinaryMask read_mask_pgm(const std::filesystem::path& path);

// ---- evaluation metrics ----

struct IouCounts {
  std::uint64_t intersection = 0;
  std::uint64_t uni = 0;
};

IouCounts iou_counts(const BinaryMask& pred, const BinaryMask& gt);
/// Per-sample IoU; an empty prediction of an empty target scores 1.
double sample_iou(const BinaryMask& pred, const BinaryMask& gt);

/// Total intersection over total union across all samples.
double overall_iou(const std::vector<BinaryMask>& preds, const std::vector<BinaryMask>& gts);

inline constexpr std::array<double, 5> kPrThresholds = {0.5, 0.6, 0.7, 0.8, 0.9};

/// Fraction of samples whose IoU is strictly greater than each threshold.
std::map<double, double> pr_at_x(const std::vector<double>& per_sample_iou,
                                 const std::vector<double>& thresholds = {kPrThresholds.begin(),
                                                                          kPrThresholds.end()});

struct EvalReport {
  double overall_iou = 0.0;
  std::map<double, double> pr_at;
  std::vector<double> per_sample_iou;

  std::string table() const;
  std::string csv() const;
};

EvalReport evaluate_masks(const std::vector<BinaryMask>& preds, const std::vector<BinaryMask>& gts);

}  // namespace lscm
