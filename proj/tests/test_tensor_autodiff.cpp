#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "lscm/errors.hpp"
#include "lscm/gradcheck.hpp"
#include "lscm/ops.hpp"
#include "test_util.hpp"

using namespace lscm;
using lscm::testing::random_tensor;

namespace {

Var c(Tensor t) { return Var::constant(std::move(t)); }


Var squares(const Var& v) { return sum(mul(v, v)); }

/// Weighted sum with fixed pseudo-random weights so every output entry matters.
Var probe_loss(const Var& v) {
  Rng rng(99);
  Tensor w = rng.uniform_tensor(v.shape(), -1.0, 1.0);
  return sum(mul(v, Var::constant(w)));
}

}  // namespace

TEST_CASE("tensor: shape invariants") {
  Tensor t({2, 3});
  CHECK(t.size() == 6);
  CHECK_THROWS_AS(Tensor({2, 3}, std::vector<double>(5)), DimensionError);
  CHECK_THROWS_AS(Tensor({0, 3}), DimensionError);
  CHECK(Tensor::scalar(4.0).item() == 4.0);
  CHECK_THROWS_AS(t.reshaped({4, 2}), DimensionError);
}

TEST_CASE("matmul: examples") {
  auto a = Tensor::matrix({{1, 2}, {3, 4}});
  auto id = Tensor::matrix({{1, 0}, {0, 1}});
  CHECK(matmul(c(a), c(id)).value() == a);
  CHECK(matmul(c(id), c(Tensor::matrix({{5}, {7}}))).value() == Tensor::matrix({{5}, {7}}));
  CHECK(matmul(c(Tensor::matrix({{1, 2}})), c(Tensor::matrix({{3}, {4}}))).value().item() == 11.0);
}

TEST_CASE("matmul: mismatch names both shapes") {
  try {
    matmul(c(Tensor({2, 3})), c(Tensor({2, 3})));
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("by [2x3]") != std::string::npos);
  }
}

TEST_CASE("matmul: associativity on random triples") {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor a = random_tensor(rng, {3, 4}), b = random_tensor(rng, {4, 5}), d = random_tensor(rng, {5, 2});
    Tensor left = matmul(matmul(a, b), d);
    Tensor right = matmul(a, matmul(b, d));
    for (std::size_t i = 0; i < left.size(); ++i) {
      CHECK(std::abs(left[i] - right[i]) <= 1e-9 * std::max(1.0, std::abs(left[i])));
    }
  }
}

TEST_CASE("scaled_row_softmax: examples") {
  auto s = scaled_row_softmax(c(Tensor::matrix({{0, 0}})), 3.0).value();
  CHECK(s[0] == doctest::Approx(0.5));
  CHECK(s[1] == doctest::Approx(0.5));
  auto t = scaled_row_softmax(c(Tensor::matrix({{1, 2}})), 1.0).value();
  CHECK(std::abs(t[0] - 0.26894) < 1e-5);
  CHECK(std::abs(t[1] - 0.73106) < 1e-5);
  auto big = scaled_row_softmax(c(Tensor::matrix({{1000, 1000}})), 1.0).value();
  CHECK(big.all_finite());
  CHECK(big[0] == 0.5);
  CHECK(big[1] == 0.5);
  CHECK_THROWS_AS(scaled_row_softmax(c(Tensor::matrix({{1}})), 0.0), ContractError);
}

TEST_CASE("scaled_row_softmax: rows are distributions") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x = random_tensor(rng, {4, 7}, -5.0, 5.0);
    Tensor y = scaled_row_softmax(c(x), rng.uniform(0.5, 4.0)).value();
    for (std::size_t i = 0; i < 4; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < 7; ++j) {
        CHECK(y.at(i, j) > 0.0);
        CHECK(y.at(i, j) < 1.0);
        s += y.at(i, j);
      }
      CHECK(std::abs(s - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("conv2d_same: examples") {
  Rng rng(5);
  Tensor x = random_tensor(rng, {3, 4, 2});
  Tensor id({1, 1, 2, 2});
  id[0] = 1.0;
  id[3] = 1.0;
  CHECK(conv2d_same(c(x), c(id), c(Tensor({2}))).value() == x);

  Tensor zero_out = conv2d_same(c(x), c(Tensor({3, 3, 2, 5})), c(Tensor({5}))).value();
  for (double v : zero_out.data()) CHECK(v == 0.0);

  Tensor ones({3, 3, 1}, 1.0);
  Tensor out = conv2d_same(c(ones), c(Tensor({3, 3, 1, 1}, 1.0)), c(Tensor({1}))).value();
  CHECK(out.at(1, 1, 0) == 9.0);
  CHECK(out.at(0, 0, 0) == 4.0);
  CHECK(out.at(2, 2, 0) == 4.0);
  CHECK(out.at(0, 1, 0) == 6.0);

  CHECK_THROWS_AS(conv2d_same(c(ones), c(Tensor({2, 2, 1, 1})), c(Tensor({1}))), ConfigError);
  CHECK_THROWS_AS(conv2d_same(c(ones), c(Tensor({3, 3, 2, 1})), c(Tensor({1}))), DimensionError);
}

TEST_CASE("max_pool_over_rows: examples and tie rule") {
  CHECK(max_pool_over_rows(c(Tensor::matrix({{1, 5}}))).value() == Tensor::vector({1, 5}));
  CHECK(max_pool_over_rows(c(Tensor::matrix({{1, 5}, {3, 2}}))).value() == Tensor::vector({3, 5}));

  Var q = Var::parameter(Tensor::matrix({{2}, {2}}));
  Var m = max_pool_over_rows(q);
  CHECK(m.value().item() == 2.0);
  backward(sum(m));
  CHECK(q.grad() == Tensor::matrix({{1}, {0}}));
}

TEST_CASE("concat_channels: examples") {
  Var a = c(Tensor({1, 1, 1}, 3.0));
  Var b = c(Tensor({1, 1, 1}, 8.0));
  CHECK(concat_channels({a}).value() == a.value());
  auto ab = concat_channels({a, b}).value();
  CHECK(ab.shape() == Shape{1, 1, 2});
  CHECK(ab[0] == 3.0);
  CHECK(ab[1] == 8.0);
  auto ba = concat_channels({b, a}).value();
  CHECK(ba[0] == 8.0);
  CHECK(ba[1] == 3.0);
  CHECK_THROWS_AS(concat_channels({a, c(Tensor({2, 1, 1}))}), DimensionError);
}

TEST_CASE("backward: examples") {
  SUBCASE("identity") {
    Var x = Var::parameter(Tensor::scalar(3.0));
    backward(x);
    CHECK(x.grad().item() == 1.0);
  }
  SUBCASE("sum of x w^T with w ones") {
    Rng rng(2);
    Var x = Var::parameter(random_tensor(rng, {2, 3}));
    Var w = c(Tensor({4, 3}, 1.0));
    backward(sum(matmul(x, transpose(w))));
    // each x entry feeds every one of the 4 output columns
    const Tensor g = x.grad();
    for (double v : g.data()) CHECK(v == 4.0);
  }
  SUBCASE("loss independent of x") {
    Var x = Var::parameter(Tensor({2, 2}, 1.0));
    Var y = Var::parameter(Tensor({2, 2}, 1.0));
    backward(sum(y));
    const Tensor g = x.grad();
    for (double v : g.data()) CHECK(v == 0.0);
  }
  SUBCASE("non-scalar loss") {
    Var x = Var::parameter(Tensor({2, 2}, 1.0));
    CHECK_THROWS_AS(backward(mul(x, x)), ContractError);
  }
  SUBCASE("repeated calls accumulate") {
    Var x = Var::parameter(Tensor::vector({1.0, -2.0}));
    Var loss = sum(mul(x, x));
    backward(loss);
    backward(loss);
    CHECK(x.grad() == Tensor::vector({4.0, -8.0}));
  }
}

TEST_CASE("backward: a node used twice accumulates both paths") {
  Rng rng(21);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor x = random_tensor(rng, {3, 3});
    auto f = [](const Var& v) { return sum(add(mul(v, v), matmul(v, v))); };
    CHECK(finite_diff_check(f, x) <= 1e-4);
  }
}

TEST_CASE("finite_diff_check: examples") {
  Rng rng(4);
  Tensor w = random_tensor(rng, {3, 2});
  auto linear = [&](const Var& v) { return sum(matmul(v, Var::constant(w))); };
  CHECK(finite_diff_check(linear, random_tensor(rng, {4, 3})) <= 1e-9);

  auto softmax_sq = [](const Var& v) { return squares(scaled_row_softmax(v, 1.7)); };
  CHECK(finite_diff_check(softmax_sq, random_tensor(rng, {3, 4})) <= 1e-4);
}

TEST_CASE("every differentiable op passes the gradient check on 10 seeded inputs") {
  using Fn = std::function<Var(const Var&)>;
  struct Case {
    const char* name;
    Shape shape;
    Fn fn;
  };
  Rng wrng(77);
  const Tensor w34 = random_tensor(wrng, {3, 4});
  const Tensor conv_w = random_tensor(wrng, {3, 3, 2, 3});
  const Tensor conv_b = random_tensor(wrng, {3});
  const Tensor other = random_tensor(wrng, {3, 4});
  const Tensor bias = random_tensor(wrng, {4});
  Tensor target({4, 4, 1});
  for (std::size_t i = 0; i < target.size(); ++i) target[i] = (i % 3 == 0) ? 1.0 : 0.0;
  const std::vector<std::size_t> idx = {2, 0, 2, 1};

  std::vector<Case> cases = {
      {"matmul_left", {2, 3}, [&](const Var& v) { return probe_loss(matmul(v, c(w34))); }},
      {"matmul_right", {4, 2}, [&](const Var& v) { return probe_loss(matmul(c(w34), v)); }},
      {"transpose", {3, 4}, [](const Var& v) { return probe_loss(transpose(v)); }},
      {"add", {3, 4}, [&](const Var& v) { return probe_loss(add(v, c(other))); }},
      {"sub", {3, 4}, [&](const Var& v) { return probe_loss(sub(c(other), v)); }},
      {"mul", {3, 4}, [&](const Var& v) { return probe_loss(mul(v, c(other))); }},
      {"scale", {3, 4}, [](const Var& v) { return probe_loss(scale(v, -2.5)); }},
      {"add_bias_x", {2, 3, 4}, [&](const Var& v) { return probe_loss(add_bias(v, c(bias))); }},
      {"add_bias_b", {4}, [&](const Var& v) { return probe_loss(add_bias(c(Tensor({2, 3, 4}, 0.3)), v)); }},
      {"tanh", {3, 4}, [](const Var& v) { return probe_loss(tanh(v)); }},
      {"sigmoid", {3, 4}, [](const Var& v) { return probe_loss(sigmoid(v)); }},
      {"relu", {3, 4}, [](const Var& v) { return probe_loss(relu(v)); }},
      {"softmax", {3, 4}, [](const Var& v) { return probe_loss(scaled_row_softmax(v, 1.3)); }},
      {"conv_x", {4, 3, 2}, [&](const Var& v) { return probe_loss(conv2d_same(v, c(conv_w), c(conv_b))); }},
      {"conv_w", {3, 3, 2, 3},
       [&](const Var& v) { return probe_loss(conv2d_same(c(Tensor({4, 3, 2}, 0.7)), v, c(conv_b))); }},
      {"max_pool", {4, 3}, [](const Var& v) { return probe_loss(max_pool_over_rows(v)); }},
      {"concat", {2, 2, 3}, [&](const Var& v) { return probe_loss(concat_channels({c(Tensor({2, 2, 1}, 1.0)), v, v})); }},
      {"slice", {2, 5}, [](const Var& v) { return probe_loss(slice_channels(v, 1, 3)); }},
      {"reshape", {2, 6}, [](const Var& v) { return probe_loss(reshape(v, {3, 4})); }},
      {"row_stack", {3, 2}, [](const Var& v) {
         std::vector<Var> rows = {row(v, 2), row(v, 0), row(v, 2)};
         return probe_loss(stack_rows(rows));
       }},
      {"embedding", {3, 4}, [&](const Var& v) { return probe_loss(embedding_lookup(v, idx)); }},
      {"tile", {3}, [](const Var& v) { return probe_loss(tile_spatial(v, 2, 3)); }},
      {"pixel_unshuffle", {4, 4, 2}, [](const Var& v) { return probe_loss(pixel_unshuffle(v, 2)); }},
      {"upsample", {2, 3, 2}, [](const Var& v) { return probe_loss(upsample_bilinear(v, 4)); }},
      {"bce", {4, 4, 1}, [&](const Var& v) { return bce_with_logits(scale(v, 3.0), target); }},
      {"mean", {3, 4}, [](const Var& v) { return mean(mul(v, v)); }},
  };
  Rng rng(2024);
  for (const auto& cs : cases) {
    CAPTURE(cs.name);
    for (int trial = 0; trial < 10; ++trial) {
      Tensor x = random_tensor(rng, cs.shape);
      CHECK(finite_diff_check(cs.fn, x) <= 1e-4);
    }
  }
}

TEST_CASE("upsample_bilinear: factor 1 is identity, extents scale") {
  Rng rng(8);
  Var x = c(random_tensor(rng, {2, 3, 1}));
  CHECK(upsample_bilinear(x, 1).value() == x.value());
  CHECK(upsample_bilinear(x, 4).shape() == Shape{8, 12, 1});
  // constant fields stay constant
  Tensor flat = upsample_bilinear(c(Tensor({2, 2, 1}, 0.25)), 3).value();
  for (double v : flat.data()) CHECK(v == doctest::Approx(0.25));
}

TEST_CASE("no-grad guard records nothing") {
  Var x = Var::parameter(Tensor({2}, 1.0));
  NoGradGuard guard;
  Var y = sum(mul(x, x));
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("rng: seeded determinism and ranges") {
  Rng a(123), b(123);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng r(5);
  for (int i = 0; i < 1000; ++i) {
    const auto k = r.uniform_int(-2, 3);
    CHECK(k >= -2);
    CHECK(k <= 3);
    const double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
  // first draws of mt19937_64 with the default-seed constant are fixed by the standard
  Rng std_seed(5489u);
  CHECK(std_seed.next_u64() == 14514284786278117030ULL);
  CHECK(mix_seed(1, 0) != mix_seed(1, 1));
}

TEST_CASE("glorot init stays within its bound") {
  Rng rng(1);
  Tensor t = glorot_uniform(rng, {10, 6}, 10, 6);
  const double s = std::sqrt(6.0 / 16.0);
  for (double v : t.data()) CHECK(std::abs(v) <= s);
}
