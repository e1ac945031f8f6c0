#include "lscm/lscm.hpp"

#include <cmath>

#include "lscm/errors.hpp"
#include "lscm/ops.hpp"

namespace lscm {

GraphDepth GraphDepth::parse(const std::string& text) {
  if (text == "adaptive") return GraphDepth{true, 0};
  std::size_t pos = 0;
  long long n = -1;
  try {
    n = std::stoll(text, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != text.size() || n < 0) throw ConfigError("n_layers must be a non-negative integer or 'adaptive'");
  return GraphDepth{false, static_cast<std::size_t>(n)};
}

Tensor coord_feature(std::size_t h, std::size_t w) {
  if (h == 0 || w == 0) throw DimensionError("coord_feature: empty grid");
  Tensor p({h, w, 8});
  const auto fh = static_cast<double>(h);
  const auto fw = static_cast<double>(w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double x_min = 2.0 * static_cast<double>(x) / fw - 1.0;
      const double x_max = 2.0 * static_cast<double>(x + 1) / fw - 1.0;
      const double y_min = 2.0 * static_cast<double>(y) / fh - 1.0;
      const double y_max = 2.0 * static_cast<double>(y + 1) / fh - 1.0;
      const double vals[8] = {x_min, y_min, x_max, y_max, 0.5 * (x_min + x_max), 0.5 * (y_min + y_max),
                              1.0 / fw, 1.0 / fh};
      for (std::size_t c = 0; c < 8; ++c) p.at(y, x, c) = vals[c];
    }
  }
  return p;
}

void LscmLevelParams::collect(const std::string& prefix, NamedParams& out) const {
  out.emplace_back(prefix + "w_q2", w_q2);
  out.emplace_back(prefix + "w_m", w_m);
  out.emplace_back(prefix + "w_x1", w_x1);
  out.emplace_back(prefix + "w_x2", w_x2);
  for (std::size_t i = 0; i < w_z.size(); ++i) out.emplace_back(prefix + "w_z." + std::to_string(i), w_z[i]);
  for (std::size_t r = 0; r < mutan_v.size(); ++r) {
    out.emplace_back(prefix + "mutan_v." + std::to_string(r), mutan_v[r]);
    out.emplace_back(prefix + "mutan_l." + std::to_string(r), mutan_l[r]);
  }
  out.emplace_back(prefix + "out_w", out_w);
  out.emplace_back(prefix + "out_b", out_b);
}

LscmLevelParams make_lscm_level_params(Rng& rng, const LscmDims& d, std::size_t graph_layers) {
  if (d.c_v == 0 || d.c_l == 0 || d.c_h == 0 || d.c_o == 0 || d.mutan_rank == 0) {
    throw ConfigError("LSCM channel sizes and mutan rank must be positive");
  }
  auto dense = [&](std::size_t in, std::size_t out) {
    return Var::parameter(glorot_uniform(rng, {in, out}, in, out));
  };
  LscmLevelParams p;
  p.w_q2 = dense(d.c_l, d.c_h);
  p.w_m = dense(d.c_h, d.c_h);
  p.w_x1 = dense(d.c_h, d.c_h);
  p.w_x2 = dense(d.c_h, d.c_h);
  for (std::size_t i = 0; i < graph_layers; ++i) p.w_z.push_back(dense(d.c_h, d.c_h));
  for (std::size_t r = 0; r < d.mutan_rank; ++r) {
    p.mutan_v.push_back(dense(d.c_v + 8, d.c_h));
    p.mutan_l.push_back(dense(d.c_l, d.c_h));
  }
  const std::size_t cat = d.c_v + d.c_h + d.c_l + 8;
  p.out_w = Var::parameter(glorot_uniform(rng, {1, 1, cat, d.c_o}, cat, d.c_o));
  p.out_b = Var::parameter(Tensor({d.c_o}));
  return p;
}

Var mutan_fuse(const Var& v, const Var& l, const Tensor& p, const LscmLevelParams& params) {
  if (v.value().rank() != 3 || p.rank() != 3 || v.dim(0) != p.dim(0) || v.dim(1) != p.dim(1) || p.dim(2) != 8) {
    throw DimensionError("mutan_fuse: visual " + shape_str(v.shape()) + " vs coordinates " + shape_str(p.shape()));
  }
  if (l.value().rank() != 1) throw DimensionError("mutan_fuse: sentence feature must be a vector");
  const std::size_t h = v.dim(0), w = v.dim(1);
  Var vp = reshape(concat_channels({v, Var::constant(p)}), {h * w, v.dim(2) + 8});
  Var l_row = reshape(l, {1, l.dim(0)});
  Var m;
  for (std::size_t r = 0; r < params.mutan_v.size(); ++r) {
    Var visual = tanh(matmul(vp, params.mutan_v[r]));  // [HW x C_h]
    Var lang = tanh(matmul(l_row, params.mutan_l[r]));  // [1 x C_h]
    Var lang_grid = reshape(tile_spatial(reshape(lang, {lang.dim(1)}), h * w, 1), {h * w, lang.dim(1)});
    Var term = mul(visual, lang_grid);
    m = m ? add(m, term) : term;
  }
  return reshape(m, {h, w, m.dim(1)});
}

GatherResult gather(const Var& q, const Var& m, const LscmLevelParams& params) {
  if (m.value().rank() != 3) throw DimensionError("gather: M must be [H x W x C_h], got " + shape_str(m.shape()));
  const std::size_t hw = m.dim(0) * m.dim(1), c_h = m.dim(2);
  Var m_flat = reshape(m, {hw, c_h});
  Var logits = matmul(matmul(q, params.w_q2), transpose(matmul(m_flat, params.w_m)));  // [T x HW]
  Var b = scaled_row_softmax(logits, std::sqrt(static_cast<double>(c_h)));
  return {b, matmul(b, m_flat)};
}

Var build_adjacency(const Var& x, const LscmLevelParams& params) {
  const std::size_t c_h = x.dim(1);
  Var logits = matmul(matmul(x, params.w_x1), transpose(matmul(x, params.w_x2)));
  return scaled_row_softmax(logits, std::sqrt(static_cast<double>(c_h)));
}

PropagateResult propagate(const Var& x, const Var& a, const TreeMask& mask, const LscmLevelParams& params,
                          std::size_t layers) {
  if (a.shape() != mask.s.shape()) {
    throw DimensionError("propagate: adjacency " + shape_str(a.shape()) + " vs tree mask " + shape_str(mask.s.shape()));
  }
  if (layers > params.w_z.size()) {
    throw ConfigError("propagate: " + std::to_string(layers) + " layers requested but only " +
                      std::to_string(params.w_z.size()) + " weight matrices exist");
  }
  Var a_t = mul(a, Var::constant(mask.s));
  Var z = x;
  for (std::size_t k = 0; k < layers; ++k) {
    // (A_t + I) Z W_z
    Var zw = matmul(z, params.w_z[k]);
    z = add(matmul(a_t, zw), zw);
  }
  return {a_t, z};
}

Var distribute(const Var& b, const Var& z, std::size_t h, std::size_t w) {
  if (b.value().rank() != 2 || z.value().rank() != 2 || b.dim(0) != z.dim(0) || b.dim(1) != h * w) {
    throw DimensionError("distribute: B " + shape_str(b.shape()) + ", Z " + shape_str(z.shape()) + " for a " +
                         std::to_string(h) + "x" + std::to_string(w) + " grid");
  }
  return reshape(matmul(transpose(b), z), {h, w, z.dim(1)});
}

Var output_project(const Var& v, const Var& z_tilde, const Var& l_hat, const Tensor& p,
                   const LscmLevelParams& params) {
  Var cat = concat_channels({v, z_tilde, l_hat, Var::constant(p)});
  return conv2d_same(cat, params.out_w, params.out_b);
}

std::vector<LscmLevelOutput> lscm_forward(std::span<const Var> v_levels, const Var& q, const DependencyTree& tree,
                                          std::span<const LscmLevelParams> params, const LscmOptions& options) {
  if (v_levels.empty() || v_levels.size() != params.size()) {
    throw ConfigError("lscm_forward: " + std::to_string(v_levels.size()) + " levels but " +
                      std::to_string(params.size()) + " parameter sets");
  }
  if (q.value().rank() != 2 || q.dim(0) != tree.size()) {
    throw DimensionError("lscm_forward: word features " + shape_str(q.shape()) + " do not match a tree of " +
                         std::to_string(tree.size()) + " tokens");
  }
  const std::size_t h = v_levels[0].dim(0), w = v_levels[0].dim(1);
  for (const auto& v : v_levels) {
    if (v.value().rank() != 3 || v.dim(0) != h || v.dim(1) != w) {
      throw DimensionError("lscm_forward: level shapes differ: " + shape_str(v.shape()) + " vs " +
                           shape_str(v_levels[0].shape()));
    }
  }
  const Tensor p = coord_feature(h, w);
  const TreeMask mask = tree_mask(tree, options.alpha);
  const std::size_t layers = options.depth.resolve(tree);
  Var l = max_pool_over_rows(q);
  Var l_hat = tile_spatial(l, h, w);

  std::vector<LscmLevelOutput> out;
  out.reserve(v_levels.size());
  for (std::size_t i = 0; i < v_levels.size(); ++i) {
    LscmLevelOutput o;
    o.m = mutan_fuse(v_levels[i], l, p, params[i]);
    auto g = gather(q, o.m, params[i]);
    o.b = g.b;
    o.x = g.x;
    o.a = build_adjacency(o.x, params[i]);
    auto pr = propagate(o.x, o.a, mask, params[i], layers);
    o.a_t = pr.a_t;
    o.z = pr.z;
    o.z_tilde = distribute(o.b, o.z, h, w);
    o.y = output_project(v_levels[i], o.z_tilde, l_hat, p, params[i]);
    out.push_back(std::move(o));
  }
  return out;
}

}  // namespace lscm
