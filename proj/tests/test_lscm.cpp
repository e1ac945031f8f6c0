#include <doctest.h>

#include <cmath>

#include "lscm/errors.hpp"
#include "lscm/gradcheck.hpp"
#include "lscm/lscm.hpp"
#include "lscm/ops.hpp"
#include "naive_lscm.hpp"
#include "test_util.hpp"

using namespace lscm;
using lscm::testing::naive_level;

namespace {

Var c(Tensor t) { return Var::constant(std::move(t)); }

LscmLevelParams params_for(Rng& rng, std::size_t cv, std::size_t cl, std::size_t ch, std::size_t co,
                           std::size_t rank, std::size_t layers) {
  LscmDims d;
  d.c_v = cv;
  d.c_l = cl;
  d.c_h = ch;
  d.c_o = co;
  d.mutan_rank = rank;
  return make_lscm_level_params(rng, d, layers);
}

/// 1x1 everything with identity projections.
LscmLevelParams unit_params() {
  Rng rng(0);
  auto p = params_for(rng, 1, 1, 1, 1, 1, 1);
  p.w_q2.mutable_value() = Tensor::matrix({{1}});
  p.w_m.mutable_value() = Tensor::matrix({{1}});
  p.w_z[0].mutable_value() = Tensor::matrix({{1}});
  return p;
}

}  // namespace

TEST_CASE("coord_feature") {
  CHECK(coord_feature(1, 1) == Tensor({1, 1, 8}, {-1, -1, 1, 1, 0, 0, 1, 1}));
  Tensor p = coord_feature(3, 5);
  CHECK(p.at(1, 2, 4) == doctest::Approx(0.0));
  CHECK(p.at(1, 2, 5) == doctest::Approx(0.0));
  for (std::size_t y = 0; y < 3; ++y) {
    for (std::size_t x = 0; x < 5; ++x) {
      CHECK(p.at(y, x, 6) == 1.0 / 5);
      CHECK(p.at(y, x, 7) == 1.0 / 3);
      for (std::size_t k = 0; k < 8; ++k) CHECK(std::abs(p.at(y, x, k)) <= 1.0);
    }
  }
}

TEST_CASE("mutan_fuse") {
  Rng rng(1);
  SUBCASE("zero sentence feature annihilates") {
    auto prm = params_for(rng, 4, 3, 5, 2, 4, 1);
    Tensor m = mutan_fuse(c(rng.uniform_tensor({2, 3, 4}, -1, 1)), c(Tensor({3})), coord_feature(2, 3), prm).value();
    CHECK(m.shape() == Shape{2, 3, 5});
    for (double v : m.data()) CHECK(v == 0.0);
  }
  SUBCASE("rank one with unit pre-activations") {
    auto prm = params_for(rng, 1, 1, 3, 2, 1, 1);
    Tensor wv({9, 3});
    for (std::size_t ch = 0; ch < 3; ++ch) wv.at(0, ch) = 1.0;  // only the visual channel contributes
    prm.mutan_v[0].mutable_value() = wv;
    prm.mutan_l[0].mutable_value() = Tensor({1, 3}, 1.0);
    Tensor m = mutan_fuse(c(Tensor({2, 2, 1}, 1.0)), c(Tensor::vector({1.0})), coord_feature(2, 2), prm).value();
    for (double v : m.data()) CHECK(std::abs(v - 0.5800) < 1e-4);
  }
  SUBCASE("bounded by the rank") {
    auto prm = params_for(rng, 4, 3, 5, 2, 4, 1);
    for (auto& w : prm.mutan_v) w.mutable_value() = rng.uniform_tensor(w.shape(), -5, 5);
    Tensor m = mutan_fuse(c(rng.uniform_tensor({3, 3, 4}, -3, 3)), c(rng.uniform_tensor({3}, -3, 3)),
                          coord_feature(3, 3), prm)
                   .value();
    for (double v : m.data()) CHECK(std::abs(v) <= 4.0);
  }
  SUBCASE("shape mismatch") {
    auto prm = params_for(rng, 4, 3, 5, 2, 4, 1);
    CHECK_THROWS_AS(mutan_fuse(c(Tensor({2, 3, 4})), c(Tensor({3})), coord_feature(3, 2), prm), DimensionError);
  }
}

TEST_CASE("gather: worked example") {
  auto prm = unit_params();
  auto g = gather(c(Tensor::matrix({{1}, {0}})), c(Tensor({1, 2, 1}, {1, 2})), prm);
  const Tensor& b = g.b.value();
  CHECK(std::abs(b.at(0, 0) - 0.26894) < 1e-5);
  CHECK(std::abs(b.at(0, 1) - 0.73106) < 1e-5);
  CHECK(std::abs(b.at(1, 0) - 0.5) < 1e-5);
  CHECK(std::abs(b.at(1, 1) - 0.5) < 1e-5);
  CHECK(std::abs(g.x.value().at(0, 0) - 1.73106) < 1e-5);
  CHECK(std::abs(g.x.value().at(1, 0) - 1.5) < 1e-5);

  // distribute with Z = X
  Tensor zt = distribute(g.b, g.x, 1, 2).value();
  CHECK(std::abs(zt.at(0, 0, 0) - (0.26894 * 1.73106 + 0.5 * 1.5)) < 1e-5);
  CHECK(std::abs(zt.at(0, 1, 0) - (0.73106 * 1.73106 + 0.5 * 1.5)) < 1e-5);
}

TEST_CASE("gather: identical cells and convexity") {
  Rng rng(2);
  auto prm = params_for(rng, 4, 3, 5, 2, 1, 1);
  Tensor row = rng.uniform_tensor({5}, -1, 1);
  Tensor m({3, 3, 5});
  for (std::size_t i = 0; i < 9; ++i)
    for (std::size_t k = 0; k < 5; ++k) m[i * 5 + k] = row[k];
  auto g = gather(c(rng.uniform_tensor({4, 3}, -1, 1)), c(m), prm);
  for (std::size_t t = 0; t < 4; ++t)
    for (std::size_t k = 0; k < 5; ++k) CHECK(std::abs(g.x.value().at(t, k) - row[k]) < 1e-12);

  for (int trial = 0; trial < 20; ++trial) {
    Tensor mm = rng.uniform_tensor({3, 3, 5}, -2, 2);
    auto gg = gather(c(rng.uniform_tensor({4, 3}, -2, 2)), c(mm), prm);
    for (std::size_t k = 0; k < 5; ++k) {
      double lo = 1e9, hi = -1e9;
      for (std::size_t i = 0; i < 9; ++i) {
        lo = std::min(lo, mm[i * 5 + k]);
        hi = std::max(hi, mm[i * 5 + k]);
      }
      for (std::size_t t = 0; t < 4; ++t) {
        CHECK(gg.x.value().at(t, k) >= lo - 1e-12);
        CHECK(gg.x.value().at(t, k) <= hi + 1e-12);
      }
    }
  }
}

TEST_CASE("build_adjacency") {
  Rng rng(3);
  auto prm = params_for(rng, 4, 3, 5, 2, 1, 1);
  Tensor a = build_adjacency(c(Tensor({4, 5})), prm).value();
  for (double v : a.data()) CHECK(v == doctest::Approx(0.25));
  CHECK(build_adjacency(c(rng.uniform_tensor({1, 5}, -1, 1)), prm).value() == Tensor::matrix({{1}}));
}

TEST_CASE("propagate: examples") {
  SUBCASE("hand example with identity W_z") {
    auto prm = unit_params();
    auto r = propagate(c(Tensor::matrix({{2}, {4}})), c(Tensor::matrix({{0, 0.5}, {0.5, 0}})),
                       tree_mask(DependencyTree({2, 0}), 0.1), prm, 1);
    CHECK(r.a_t.value() == Tensor::matrix({{0, 0.5}, {0.5, 0}}));
    CHECK(r.z.value() == Tensor::matrix({{4}, {5}}));
  }
  SUBCASE("single word, alpha 0") {
    Rng rng(4);
    auto prm = params_for(rng, 2, 2, 3, 2, 1, 1);
    Tensor x = rng.uniform_tensor({1, 3}, -1, 1);
    auto r = propagate(c(x), c(Tensor::matrix({{1}})), tree_mask(DependencyTree({0}), 0.0), prm, 1);
    CHECK(r.a_t.value() == Tensor::matrix({{0}}));
    Tensor expect = matmul(x, prm.w_z[0].value());
    CHECK(max_abs_diff(r.z.value(), expect) < 1e-15);
  }
  SUBCASE("zero layers and alpha one") {
    Rng rng(5);
    auto prm = params_for(rng, 2, 2, 3, 2, 1, 2);
    Tensor x = rng.uniform_tensor({3, 3}, -1, 1);
    Var a = build_adjacency(c(x), prm);
    DependencyTree tree({0, 1, 1});
    CHECK(propagate(c(x), a, tree_mask(tree, 0.1), prm, 0).z.value() == x);
    auto r = propagate(c(x), a, tree_mask(tree, 1.0), prm, 2);
    CHECK(r.a_t.value() == a.value());
    CHECK_THROWS_AS(propagate(c(x), a, tree_mask(tree, 0.1), prm, 3), ConfigError);
  }
}

TEST_CASE("distribute: rank-one and one-hot cases") {
  Rng rng(6);
  Tensor b = rng.uniform_tensor({1, 4}, 0, 1);
  Tensor z = rng.uniform_tensor({1, 3}, -1, 1);
  Tensor zt = distribute(c(b), c(z), 2, 2).value();
  for (std::size_t loc = 0; loc < 4; ++loc)
    for (std::size_t k = 0; k < 3; ++k) CHECK(zt[loc * 3 + k] == b[loc] * z[k]);

  Tensor one_hot({2, 4});
  one_hot.at(0, 3) = 1.0;
  one_hot.at(1, 1) = 1.0;
  Tensor z2 = rng.uniform_tensor({2, 3}, -1, 1);
  Tensor d = distribute(c(one_hot), c(z2), 2, 2).value();
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(d.at(1, 1, k) == z2.at(0, k));
    CHECK(d.at(0, 1, k) == z2.at(1, k));
    CHECK(d.at(0, 0, k) == 0.0);
    CHECK(d.at(1, 0, k) == 0.0);
  }
  CHECK_THROWS_AS(distribute(c(one_hot), c(z2), 3, 2), DimensionError);
}

TEST_CASE("output_project") {
  Rng rng(7);
  auto prm = params_for(rng, 2, 3, 4, 4, 1, 1);
  Tensor v = rng.uniform_tensor({2, 3, 2}, -1, 1);
  Tensor zt = rng.uniform_tensor({2, 3, 4}, -1, 1);
  Tensor lh = tile_spatial(c(rng.uniform_tensor({3}, -1, 1)), 2, 3).value();
  const Tensor p = coord_feature(2, 3);

  prm.out_w.mutable_value() = Tensor({1, 1, 17, 4});
  prm.out_b.mutable_value() = Tensor::vector({1, 2, 3, 4});
  Tensor y = output_project(c(v), c(zt), c(lh), p, prm).value();
  CHECK(y.shape() == Shape{2, 3, 4});
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == double(i % 4 + 1));

  Tensor sel({1, 1, 17, 4});
  for (std::size_t k = 0; k < 4; ++k) sel[(2 + k) * 4 + k] = 1.0;
  prm.out_w.mutable_value() = sel;
  prm.out_b.mutable_value() = Tensor({4});
  CHECK(output_project(c(v), c(zt), c(lh), p, prm).value() == zt);
}

TEST_CASE("lscm_forward matches the loop reference") {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t layers = static_cast<std::size_t>(trial % 3);
    std::vector<LscmLevelParams> prm;
    std::vector<Var> vs;
    for (int lv = 0; lv < 4; ++lv) {
      prm.push_back(params_for(rng, 3, 4, 5, 2, 4, std::max<std::size_t>(layers, 1)));
      vs.push_back(c(rng.uniform_tensor({3, 3, 3}, -1, 1)));
    }
    Tensor q = rng.uniform_tensor({4, 4}, -1, 1);
    DependencyTree tree({2, 0, 2, 3});
    const double alpha = rng.uniform();
    auto out = lscm_forward(vs, c(q), tree, prm, LscmOptions{alpha, GraphDepth{false, layers}});
    for (int lv = 0; lv < 4; ++lv) {
      auto ref = naive_level(vs[lv].value(), q, tree.heads(), prm[lv], alpha, layers);
      const Tensor& y = out[lv].y.value();
      double err = 0.0;
      for (std::size_t loc = 0; loc < 9; ++loc)
        for (std::size_t o = 0; o < 2; ++o) err = std::max(err, std::abs(y[loc * 2 + o] - ref.y[loc][o]));
      CHECK(err <= 1e-10);
    }
  }
}

TEST_CASE("lscm_forward: tied weights and degenerate sentences") {
  Rng rng(9);
  auto shared = params_for(rng, 3, 4, 5, 2, 2, 1);
  std::vector<LscmLevelParams> prm(4, shared);
  Tensor v = rng.uniform_tensor({2, 2, 3}, -1, 1);
  std::vector<Var> vs(4, c(v));
  auto out = lscm_forward(vs, c(rng.uniform_tensor({3, 4}, -1, 1)), DependencyTree({0, 1, 1}), prm, {});
  for (int lv = 1; lv < 4; ++lv) CHECK(out[lv].y.value() == out[0].y.value());

  auto single = lscm_forward(vs, c(rng.uniform_tensor({1, 4}, -1, 1)), DependencyTree({0}), prm, {});
  CHECK(single[0].y.value().all_finite());

  CHECK_THROWS_AS(lscm_forward(vs, c(Tensor({2, 4})), DependencyTree({0, 1, 1}), prm, {}), DimensionError);
  std::vector<LscmLevelParams> three(3, shared);
  CHECK_THROWS_AS(lscm_forward(vs, c(Tensor({3, 4})), DependencyTree({0, 1, 1}), three, {}), ConfigError);
}

TEST_CASE("adaptive depth follows the tree") {
  GraphDepth d = GraphDepth::parse("adaptive");
  CHECK(d.resolve(DependencyTree({0, 1, 2})) == 2);
  CHECK(d.max_layers() == 19);
  CHECK(GraphDepth::parse("4").resolve(DependencyTree({0})) == 4);
  CHECK_THROWS_AS(GraphDepth::parse("-1"), ConfigError);
  CHECK_THROWS_AS(GraphDepth::parse("two"), ConfigError);
}

TEST_CASE("lscm_forward gradient check at tiny size") {
  Rng rng(10);
  std::vector<LscmLevelParams> prm;
  std::vector<Var> vs;
  for (int lv = 0; lv < 4; ++lv) {
    prm.push_back(params_for(rng, 8, 8, 8, 8, 2, 1));
    vs.push_back(c(rng.uniform_tensor({4, 4, 8}, -1, 1)));
  }
  Var q = Var::parameter(rng.uniform_tensor({3, 8}, -1, 1));
  DependencyTree tree({2, 0, 2});
  Tensor w = rng.uniform_tensor({4, 4, 8}, -1, 1);
  auto loss = [&] {
    auto out = lscm_forward(vs, q, tree, prm, {});
    Var total;
    for (const auto& o : out) {
      Var s = sum(mul(o.y, c(w)));
      total = total ? add(total, s) : s;
    }
    return total;
  };
  NamedParams named{{"q", q}};
  prm[0].collect("level2.", named);
  for (const auto& r : finite_diff_check_params(loss, named, 1e-5, 24)) {
    CAPTURE(r.name);
    CHECK(r.max_rel_error <= 1e-4);
  }
}
