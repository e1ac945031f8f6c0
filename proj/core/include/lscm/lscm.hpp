#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lscm/autodiff.hpp"
#include "lscm/rng.hpp"
#include "lscm/text.hpp"

namespace lscm {

using NamedParams = std::vector<std::pair<std::string, Var>>;

struct LscmDims {
  std::size_t c_v = 32;  // visual channels
  std::size_t c_l = 32;  // word feature channels
  std::size_t c_h = 32;  // multimodal channels
  std::size_t c_o = 16;  // per-level output channels
  std::size_t mutan_rank = 4;
};

/// Number of graph-convolution layers: a fixed count, or the depth of the
/// sentence's dependency tree.
struct GraphDepth {
  bool adaptive = false;
  std::size_t layers = 1;

  std::size_t resolve(const DependencyTree& tree) const { return adaptive ? tree.depth() : layers; }
  /// Weight matrices needed to cover any sentence.
  std::size_t max_layers() const { return adaptive ? kMaxTokens - 1 : layers; }

  static GraphDepth parse(const std::string& text);
  std::string str() const { return adaptive ? "adaptive" : std::to_string(layers); }
};

struct LscmOptions {
  double alpha = 0.1;
  GraphDepth depth;
};

/// 8-channel cell geometry [x_min, y_min, x_max, y_max, x_center, y_center, 1/W, 1/H]
/// with box coordinates normalized to [-1, 1].
Tensor coord_feature(std::size_t h, std::size_t w);

/// Weights of one feature level.
struct LscmLevelParams {
  Var w_q2;                  // [C_l x C_h]
  Var w_m;                   // [C_h x C_h]
  Var w_x1;                  // [C_h x C_h]
  Var w_x2;                  // [C_h x C_h]
  std::vector<Var> w_z;      // one [C_h x C_h] per graph-conv layer
  std::vector<Var> mutan_v;  // R x [(C_v + 8) x C_h]
  std::vector<Var> mutan_l;  // R x [C_l x C_h]
  Var out_w;                 // [1 x 1 x (C_v + C_h + C_l + 8) x C_o]
  Var out_b;                 // [C_o]

  std::size_t c_h() const { return w_m.dim(0); }
  void collect(const std::string& prefix, NamedParams& out) const;
};

LscmLevelParams make_lscm_level_params(Rng& rng, const LscmDims& dims, std::size_t graph_layers);

/// Low-rank Hadamard fusion: sum_r tanh([v_p; P_p] W_v^r) * tanh(L W_l^r).
/// v [H x W x C_v], l [C_l], p [H x W x 8] -> [H x W x C_h].
Var mutan_fuse(const Var& v, const Var& l, const Tensor& p, const LscmLevelParams& params);

struct GatherResult {
  Var b;  // [T x HW] attention of each word over locations
  Var x;  // [T x C_h] word-node features
};

/// Cross-modal attention from words q [T x C_l] over multimodal cells m [H x W x C_h].
GatherResult gather(const Var& q, const Var& m, const LscmLevelParams& params);

/// Row-stochastic word-graph adjacency [T x T].
Var build_adjacency(const Var& x, const LscmLevelParams& params);

struct PropagateResult {
  Var a_t;  // A masked by the tree
  Var z;    // [T x C_h]
};

/// A_t = A * S, then `layers` rounds of Z <- (A_t + I) Z W_z starting from X.
PropagateResult propagate(const Var& x, const Var& a, const TreeMask& mask, const LscmLevelParams& params,
                          std::size_t layers);

/// B^T Z reshaped to [H x W x C_h].
Var distribute(const Var& b, const Var& z, std::size_t h, std::size_t w);

/// 1x1 conv over [V, Z~, L^, P] -> [H x W x C_o].
Var output_project(const Var& v, const Var& z_tilde, const Var& l_hat, const Tensor& p,
                   const LscmLevelParams& params);

/// Intermediate quantities of one level, kept for diagnostics and attention dumps.
struct LscmLevelOutput {
  Var m;
  Var b;
  Var x;
  Var a;
  Var a_t;
  Var z;
  Var z_tilde;
  Var y;
};

/// Runs every level through fuse -> gather -> adjacency -> propagate -> distribute -> project.
/// All levels must share H and W; params has one entry per level.
std::vector<LscmLevelOutput> lscm_forward(std::span<const Var> v_levels, const Var& q, const DependencyTree& tree,
                                          std::span<const LscmLevelParams> params, const LscmOptions& options);

}  // namespace lscm
