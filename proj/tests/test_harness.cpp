#include <doctest.h>

#include <cmath>
#include <cstdlib>

#include "lscm/checkpoint.hpp"
#include "lscm/config.hpp"
#include "lscm/errors.hpp"
#include "lscm/ops.hpp"
#include "lscm/optim.hpp"
#include "lscm/trainer.hpp"
#include "test_util.hpp"

using namespace lscm;

namespace {

Config tiny_config() {
  Config c;
  c.c_v = c.c_l = c.c_h = 6;
  c.c_o = c.c_s = 4;
  c.c_e = 5;
  c.max_iters = 12;
  c.lr_base = 1e-3;
  c.seed = 3;
  return c;
}

std::vector<Example> tiny_train() { return make_split(5, Split::train, 5, DifficultyMix{}); }

std::string params_bytes(const Trainer& t) { return encode_checkpoint(t.checkpoint()); }

}  // namespace

TEST_CASE("poly_lr") {
  CHECK(poly_lr(0, 100, 0.01, 0.9) == 0.01);
  CHECK(poly_lr(100, 100, 0.01, 0.9) == 0.0);
  CHECK(poly_lr(150, 100, 0.01, 0.9) == 0.0);
  CHECK(poly_lr(50, 100, 0.01, 1.0) == doctest::Approx(0.005).epsilon(1e-15));
  CHECK(poly_lr(25, 100, 1.0, 0.9) == doctest::Approx(std::pow(0.75, 0.9)).epsilon(1e-15));
  double prev = 1.0;
  for (std::uint64_t i = 0; i <= 100; ++i) {
    CHECK(poly_lr(i, 100, 1.0, 0.9) <= prev);
    prev = poly_lr(i, 100, 1.0, 0.9);
  }
}

TEST_CASE("adam_update") {
  AdamOptions opt;
  SUBCASE("zero gradient leaves parameters") {
    Tensor p = Tensor::vector({1.0, -2.0}), m({2}), v({2});
    adam_update(p, Tensor({2}), m, v, 1, 0.1, opt, "p");
    CHECK(p == Tensor::vector({1.0, -2.0}));
  }
  SUBCASE("first step moves by about lr") {
    Tensor p = Tensor::vector({0.5}), m({1}), v({1});
    adam_update(p, Tensor::vector({1.0}), m, v, 1, 0.1, opt, "p");
    CHECK(std::abs((0.5 - p[0]) - 0.1) < 1e-6);
  }
  SUBCASE("non-finite gradient names the parameter") {
    Tensor p({1}), m({1}), v({1});
    try {
      adam_update(p, Tensor::vector({std::nan("")}), m, v, 1, 0.1, opt, "lstm.w_h");
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("lstm.w_h") != std::string::npos);
    }
  }
  SUBCASE("decay modes") {
    AdamOptions coupled = opt, decoupled = opt;
    coupled.weight_decay = decoupled.weight_decay = 0.5;
    coupled.decoupled_decay = false;
    // coupled: zero task gradient, decay alone becomes a full normalized step
    Tensor p = Tensor::vector({2.0}), m({1}), v({1});
    adam_update(p, Tensor({1}), m, v, 1, 0.1, coupled, "p");
    CHECK(std::abs(p[0] - 1.9) < 1e-6);
    // decoupled: shrink by lr * wd * theta outside the moments
    Tensor q = Tensor::vector({2.0}), mq({1}), vq({1});
    adam_update(q, Tensor({1}), mq, vq, 1, 0.1, decoupled, "q");
    CHECK(q[0] == doctest::Approx(2.0 - 0.1 * 0.5 * 2.0).epsilon(1e-15));
    CHECK(mq[0] == 0.0);
  }
}

TEST_CASE("Adam validates all gradients before updating any") {
  Var a = Var::parameter(Tensor::vector({1.0}));
  Var b = Var::parameter(Tensor::vector({1.0}));
  Adam adam({{"a", a}, {"b", b}}, {});
  backward(sum(mul(a, a)));
  b.node()->grad_buffer()[0] = std::nan("");
  CHECK_THROWS_AS(adam.step(0.1), Error);
  CHECK(a.value()[0] == 1.0);
  CHECK(adam.steps() == 0);
}

TEST_CASE("checkpoint encode/decode") {
  Rng rng(1);
  Checkpoint ck;
  ck.tensors.emplace_back("a", rng.uniform_tensor({2, 3}, -1, 1));
  ck.tensors.emplace_back("b.c", Tensor::scalar(-0.0));
  ck.tensors.emplace_back("d", Tensor::vector({1e-300, std::ldexp(1.0, -1074)}));
  ck.iteration = 77;
  const std::string bytes = encode_checkpoint(ck);
  CHECK(bytes.substr(0, 4) == "LSCM");
  CHECK(static_cast<unsigned char>(bytes[4]) == 1);
  const Checkpoint back = decode_checkpoint(bytes);
  CHECK(back.iteration == 77);
  REQUIRE(back.tensors.size() == 3);
  CHECK(std::signbit(back.find("b.c")->item()));
  CHECK(encode_checkpoint(back) == bytes);

  const auto dir = lscm::testing::temp_dir("ckpt");
  save_checkpoint(dir / "x.ckpt", ck);
  CHECK(encode_checkpoint(load_checkpoint(dir / "x.ckpt")) == bytes);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), IoError);

  Checkpoint dup = ck;
  dup.tensors.emplace_back("a", Tensor::scalar(1.0));
  CHECK_THROWS_AS(encode_checkpoint(dup), ContractError);
}

TEST_CASE("checkpoint corruption reports offsets") {
  Checkpoint ck;
  ck.tensors.emplace_back("w", Tensor::vector({1, 2, 3}));
  std::string bytes = encode_checkpoint(ck);
  auto offset_of = [](const std::string& b) -> std::size_t {
    try {
      decode_checkpoint(b);
    } catch (const CorruptCheckpointError& e) {
      return e.offset();
    }
    return SIZE_MAX;
  };
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK(offset_of(bad_magic) == 0);
  std::string bad_version = bytes;
  bad_version[4] = 2;
  CHECK(offset_of(bad_version) == 4);
  // The layout carries no tensor count: a prefix that ends where a tensor
  // record could start may parse as a shorter file. Every other prefix fails
  // inside the file, and the shorter parse never holds all the tensors.
  ck.tensors.emplace_back("v", Tensor::vector({4}));
  bytes = encode_checkpoint(ck);
  for (std::size_t len = 0; len < bytes.size(); ++len) {
    CAPTURE(len);
    const std::size_t off = offset_of(bytes.substr(0, len));
    if (off == SIZE_MAX) {
      CHECK(decode_checkpoint(bytes.substr(0, len)).tensors.size() < ck.tensors.size());
    } else {
      CHECK(off <= len);
    }
  }
}

TEST_CASE("config parsing") {
  const Config c = parse_config("# desk run\nalpha = 0.5\nn_layers = adaptive  # tree depth\nseed=11\n\nmix = relation\n");
  CHECK(c.alpha == 0.5);
  CHECK(c.n_layers.adaptive);
  CHECK(c.seed == 11);
  CHECK(c.mix == "relation");
  CHECK(c.lr_base == 2e-3);
  CHECK(c.batch_size == 8);
  CHECK(c.weight_decay == 5e-4);
  CHECK(c.poly_power == 0.9);

  const Config round = parse_config(c.serialize());
  CHECK(round.serialize() == c.serialize());

  CHECK_THROWS_AS(parse_config("alpha = 2\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("bogus = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("c_v = -3\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("poly_power = 0\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("just a line\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("decay_mode = sometimes\n"), ConfigError);
  try {
    parse_config("alpha = 0.1\nseed = x\n");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("LSCM_SEED overrides the configured seed") {
  Config c;
  ::setenv("LSCM_SEED", "1234", 1);
  apply_environment(c);
  ::unsetenv("LSCM_SEED");
  CHECK(c.seed == 1234);
}

TEST_CASE("training is bit-reproducible") {
  const auto data = tiny_train();
  Trainer a(tiny_config(), data), b(tiny_config(), data);
  for (int i = 0; i < 6; ++i) {
    const auto ea = a.step(), eb = b.step();
    CHECK(ea.loss == eb.loss);
    CHECK(ea.lr == eb.lr);
  }
  CHECK(params_bytes(a) == params_bytes(b));

  Config other = tiny_config();
  other.seed = 4;
  Trainer c(other, data);
  c.train_until(6);
  CHECK(params_bytes(c) != params_bytes(a));
}

TEST_CASE("resume equals uninterrupted training") {
  const auto data = tiny_train();
  Trainer full(tiny_config(), data);
  full.train_until(12);

  Trainer first(tiny_config(), data);
  first.train_until(7);
  const auto dir = lscm::testing::temp_dir("resume");
  save_checkpoint(dir / "k.ckpt", first.checkpoint());

  Trainer resumed(tiny_config(), data);
  resumed.restore(load_checkpoint(dir / "k.ckpt"));
  CHECK(resumed.iteration() == 7);
  resumed.train_until(12);
  CHECK(params_bytes(resumed) == params_bytes(full));
}

TEST_CASE("restore rejects mismatched or incomplete checkpoints") {
  const auto data = tiny_train();
  Trainer t(tiny_config(), data);
  t.train_until(2);
  const Checkpoint ck = t.checkpoint();

  Config wider = tiny_config();
  wider.c_h = 7;
  Trainer other(wider, data);
  const std::string before = params_bytes(other);
  try {
    other.restore(ck);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    CHECK(std::string(e.what()).find("lscm.level2.w_q2") != std::string::npos);
  }
  CHECK(params_bytes(other) == before);

  // any truncation either fails to decode or fails to restore, never a partial load
  const std::string bytes = encode_checkpoint(ck);
  Trainer target(tiny_config(), data);
  const std::string pristine = params_bytes(target);
  for (std::size_t len = 0; len < bytes.size(); len += 97) {
    bool rejected = false;
    try {
      target.restore(decode_checkpoint(std::string_view(bytes).substr(0, len)));
    } catch (const CorruptCheckpointError&) {
      rejected = true;
    } catch (const ConfigError&) {
      rejected = true;
    }
    CHECK(rejected);
  }
  CHECK(params_bytes(target) == pristine);
}

TEST_CASE("frozen conv stack is left untouched") {
  Config c = tiny_config();
  c.freeze_cnn = true;
  Trainer t(c, tiny_train());
  const Tensor before = t.model().parameters()[4].second.value();
  REQUIRE(t.model().parameters()[4].first == "cnn.conv1.w");
  t.train_until(3);
  CHECK(t.model().parameters()[4].second.value() == before);
}
