// lscm: train / evaluate / inspect the referring-segmentation model.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>

#include "lscm/checkpoint.hpp"
#include "lscm/config.hpp"
#include "lscm/diagnostics.hpp"
#include "lscm/errors.hpp"
#include "lscm/model.hpp"
#include "lscm/trainer.hpp"

namespace fs = std::filesystem;
using namespace lscm;

namespace {

constexpr int kUsageError = 2;

struct UsageError : Error {
  using Error::Error;
};

struct CommonFlags {
  std::string config;
  std::optional<double> alpha;
  std::optional<std::string> n_layers;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> iters;
  std::optional<std::string> data;
  std::optional<std::string> mix;
  std::string out;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "key = value config file");
  cmd->add_option("--alpha", f.alpha, "tree-mask weight of non-edges");
  cmd->add_option("--n-layers", f.n_layers, "graph-conv layers or 'adaptive'");
  cmd->add_option("--seed", f.seed, "master seed");
  cmd->add_option("--iters", f.iters, "max iterations");
  cmd->add_option("--data", f.data, "dataset root or split directory");
  cmd->add_option("--mix", f.mix, "difficulty mix a:b:c or a single difficulty");
  cmd->add_option("--out", f.out, "output directory");
}

/// config file < LSCM_SEED < flags
Config resolve_config(const CommonFlags& f) {
  Config c = f.config.empty() ? Config{} : load_config(f.config);
  apply_environment(c);
  if (f.alpha) c.alpha = *f.alpha;
  if (f.n_layers) c.set("n_layers", *f.n_layers);
  if (f.seed) c.seed = *f.seed;
  if (f.iters) c.max_iters = *f.iters;
  if (f.data) c.data = *f.data;
  if (f.mix) c.set("mix", *f.mix);
  c.validate();
  return c;
}

/// root/<split> when it exists, otherwise root itself.
fs::path split_dir(const fs::path& root, const char* split) {
  if (fs::is_directory(root / split)) return root / split;
  if (!fs::is_directory(root)) throw IoError("no such dataset directory: " + root.string());
  return root;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

int cmd_train(const CommonFlags& f, const std::string& resume, bool freeze_cnn, std::size_t train_count,
              std::optional<double> lr) {
  Config c = resolve_config(f);
  if (freeze_cnn) c.freeze_cnn = true;
  if (lr) c.lr_base = *lr;
  c.validate();
  std::vector<Example> train = c.data.empty()
                                   ? make_split(c.seed, Split::train, train_count, DifficultyMix::parse(c.mix))
                                   : load_examples(split_dir(c.data, "train"));
  const fs::path out = f.out.empty() ? fs::path("run") : fs::path(f.out);
  fs::create_directories(out);
  {
    std::ofstream cf(out / "config.txt");
    cf << c.serialize();
  }
  Trainer trainer(c, std::move(train));
  if (!resume.empty()) trainer.restore(load_checkpoint(resume));

  std::cout << "iter,lr,loss\n";
  trainer.train_until(c.max_iters, [&](const TrainLogEntry& e) {
    std::cout << e.iter << ',' << fmt(e.lr) << ',' << fmt(e.loss) << '\n';
    if (c.checkpoint_every > 0 && e.iter % c.checkpoint_every == 0) {
      char name[40];
      std::snprintf(name, sizeof name, "ckpt_%06llu.bin", static_cast<unsigned long long>(e.iter));
      save_checkpoint(out / name, trainer.checkpoint());
    }
  });
  save_checkpoint(out / "final.bin", trainer.checkpoint());
  std::cout.flush();
  std::cerr << "saved " << (out / "final.bin").string() << '\n';
  return 0;
}

/// Loads parameters from a checkpoint into a fresh model of config c.
Model load_model(const Config& c, const std::string& ckpt) {
  Model model(c);
  if (ckpt.empty()) return model;
  const Checkpoint ck = load_checkpoint(ckpt);
  for (const auto& [name, v] : model.parameters()) {
    const Tensor* t = ck.find(name);
    if (!t) throw ConfigError("checkpoint is missing tensor '" + name + "'");
    if (t->shape() != v.shape()) {
      throw DimensionError("checkpoint tensor '" + name + "' has shape " + shape_str(t->shape()) + ", model expects " +
                           shape_str(v.shape()));
    }
  }
  for (const auto& [name, v] : model.parameters()) {
    Var p = v;
    p.mutable_value() = *ck.find(name);
  }
  return model;
}

int cmd_eval(const CommonFlags& f, const std::string& ckpt, const std::string& pred) {
  const Config c = resolve_config(f);
  if (c.data.empty()) throw UsageError("eval needs --data");
  const fs::path gt_dir = split_dir(c.data, "val");
  EvalReport report;
  if (!pred.empty()) {
    std::vector<BinaryMask> preds, gts;
    std::vector<fs::path> dirs;
    for (const auto& e : fs::directory_iterator(gt_dir)) {
      if (e.is_directory()) dirs.push_back(e.path());
    }
    std::sort(dirs.begin(), dirs.end());
    const fs::path pred_dir = split_dir(pred, "val");
    for (const auto& d : dirs) {
      gts.push_back(read_mask_pgm(d / "mask.pgm"));
      preds.push_back(read_mask_pgm(pred_dir / d.filename() / "mask.pgm"));
    }
    if (gts.empty()) throw InputError("no samples under " + gt_dir.string());
    report = evaluate_masks(preds, gts);
  } else {
    if (ckpt.empty()) throw UsageError("eval needs --ckpt or --pred");
    const Model model = load_model(c, ckpt);
    const auto examples = load_examples(gt_dir);
    if (examples.empty()) throw InputError("no samples under " + gt_dir.string());
    report = evaluate(model, examples);
    if (!f.out.empty()) {
      for (const auto& ex : examples) write_prediction(fs::path(f.out) / ex.id, model.probabilities(ex));
    }
  }
  std::cout << report.table() << '\n' << report.csv();
  return 0;
}

int cmd_gen_data(const CommonFlags& f, std::size_t train, std::size_t val) {
  const Config c = resolve_config(f);
  if (f.out.empty()) throw UsageError("gen-data needs --out");
  build_split(f.out, c.seed, {train, val}, DifficultyMix::parse(c.mix));
  std::cout << "wrote " << train << " train and " << val << " val samples to " << f.out << '\n';
  return 0;
}

int cmd_attn_dump(const CommonFlags& f, const std::string& ckpt, const std::string& sample) {
  const Config c = resolve_config(f);
  if (sample.empty()) throw UsageError("attn-dump needs --sample");
  if (f.out.empty()) throw UsageError("attn-dump needs --out");
  const Model model = load_model(c, ckpt);
  const Example ex = read_example(sample);
  const auto files = write_attention_maps(model, ex, f.out);
  write_prediction(f.out, model.probabilities(ex));
  std::cout << "expression: " << ex.tokens.joined() << '\n' << files.size() << " attention files in " << f.out << '\n';
  return 0;
}

int cmd_gradcheck(std::uint64_t seed, std::size_t max_entries, double tol) {
  double worst = 0.0;
  auto report = [&](const char* group, const std::vector<ParamCheck>& rows) {
    for (const auto& r : rows) {
      std::printf("%-8s %-32s %8zu  %.3e\n", group, r.name.c_str(), r.checked, r.max_rel_error);
      worst = std::max(worst, r.max_rel_error);
    }
  };
  std::printf("%-8s %-32s %8s  %s\n", "group", "name", "entries", "max_rel_error");
  report("op", op_gradient_suite(seed));
  report("model", model_gradient_check(seed, 8, max_entries));
  const bool ok = worst <= tol;
  std::printf("max relative error %.3e (tolerance %.0e): %s\n", worst, tol, ok ? "ok" : "FAILED");
  return ok ? 0 : 1;
}

int cmd_treemask(std::optional<double> alpha_flag, const std::string& config) {
  Config c = config.empty() ? Config{} : load_config(config);
  const double alpha = alpha_flag.value_or(c.alpha);
  const std::string text((std::istreambuf_iterator<char>(std::cin)), std::istreambuf_iterator<char>());
  const auto sentences = parse_conllu_document(text);
  if (sentences.empty()) throw InputError("no sentence on stdin");
  for (std::size_t s = 0; s < sentences.size(); ++s) {
    if (s) std::cout << '\n';
    const TreeMask m = tree_mask(sentences[s].tree, alpha);
    const std::size_t t = m.s.dim(0);
    for (std::size_t i = 0; i < t; ++i) {
      for (std::size_t j = 0; j < t; ++j) std::cout << (j ? " " : "") << m.s.at(i, j);
      std::cout << '\n';
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"referring segmentation with linguistic-structure context modeling"};
  app.require_subcommand(1);

  CommonFlags train_f, eval_f, gen_f, attn_f;
  std::string resume, ckpt_eval, pred, ckpt_attn, sample, tm_config;
  bool freeze_cnn = false;
  std::size_t train_count = 2000, gen_train = 2000, gen_val = 200, gc_entries = 0;
  std::uint64_t gc_seed = 1;
  double gc_tol = 1e-4;
  std::optional<double> lr, tm_alpha;

  auto* train = app.add_subcommand("train", "train a model; logs iter,lr,loss CSV to stdout");
  add_common(train, train_f);
  train->add_option("--resume", resume, "checkpoint to resume from");
  train->add_flag("--freeze-cnn", freeze_cnn, "keep the conv feature stack fixed");
  train->add_option("--train-count", train_count, "synthetic samples when --data is absent");
  train->add_option("--lr", lr, "base learning rate");

  auto* eval = app.add_subcommand("eval", "score a checkpoint or a directory of predicted masks");
  add_common(eval, eval_f);
  eval->add_option("--ckpt", ckpt_eval, "model checkpoint");
  eval->add_option("--pred", pred, "directory of <id>/mask.pgm predictions");

  auto* gen = app.add_subcommand("gen-data", "write a synthetic train/val split");
  add_common(gen, gen_f);
  gen->add_option("--train", gen_train, "train samples");
  gen->add_option("--val", gen_val, "val samples");

  auto* attn = app.add_subcommand("attn-dump", "write per-word attention maps for one sample");
  add_common(attn, attn_f);
  attn->add_option("--ckpt", ckpt_attn, "model checkpoint (fresh weights when absent)");
  attn->add_option("--sample", sample, "sample directory")->required();

  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every op and of a tiny model");
  gc->add_option("--seed", gc_seed, "seed");
  gc->add_option("--max-entries", gc_entries, "probed entries per model tensor (0 = all)");
  gc->add_option("--tol", gc_tol, "maximum relative error");

  auto* tm = app.add_subcommand("treemask", "read CoNLL-U on stdin, print the tree mask");
  tm->add_option("--alpha", tm_alpha, "weight of non-edges");
  tm->add_option("--config", tm_config, "config file supplying alpha");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsageError;
  }

  try {
    if (*train) return cmd_train(train_f, resume, freeze_cnn, train_count, lr);
    if (*eval) return cmd_eval(eval_f, ckpt_eval, pred);
    if (*gen) return cmd_gen_data(gen_f, gen_train, gen_val);
    if (*attn) return cmd_attn_dump(attn_f, ckpt_attn, sample);
    if (*gc) return cmd_gradcheck(gc_seed, gc_entries, gc_tol);
    if (*tm) return cmd_treemask(tm_alpha, tm_config);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsageError;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsageError;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kUsageError;
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
