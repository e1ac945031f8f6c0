#include <benchmark/benchmark.h>

#include "lscm/lscm.hpp"
#include "lscm/ops.hpp"
#include "lscm/trainer.hpp"

using namespace lscm;

static void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Var a = Var::constant(rng.uniform_tensor({n, n}, -1, 1));
  const Var b = Var::constant(rng.uniform_tensor({n, n}, -1, 1));
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(16)->Arg(64)->Arg(128);

static void BM_Conv2d(benchmark::State& state) {
  const auto hw = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  const Var x = Var::constant(rng.uniform_tensor({hw, hw, 32}, -1, 1));
  const Var w = Var::constant(rng.uniform_tensor({3, 3, 32, 32}, -0.1, 0.1));
  const Var b = Var::constant(Tensor({32}));
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(conv2d_same(x, w, b));
}
BENCHMARK(BM_Conv2d)->Arg(8)->Arg(16);

static void BM_LscmForward(benchmark::State& state) {
  const auto t = static_cast<std::size_t>(state.range(0));
  Rng rng(3);
  const LscmDims dims{32, 32, 32, 16, 4};
  const std::vector<LscmLevelParams> p = {make_lscm_level_params(rng, dims, 1)};
  const std::vector<Var> v = {Var::constant(rng.uniform_tensor({8, 8, 32}, -1, 1))};
  const Var q = Var::constant(rng.uniform_tensor({t, 32}, -1, 1));
  std::vector<std::size_t> heads(t);
  for (std::size_t i = 0; i < t; ++i) heads[i] = i;  // chain rooted at word 1
  const DependencyTree tree(heads);
  NoGradGuard guard;
  for (auto _ : state) {
    benchmark::DoNotOptimize(lscm_forward(v, q, tree, p, LscmOptions{}));
  }
}
BENCHMARK(BM_LscmForward)->Arg(4)->Arg(12);

static void BM_TrainStep(benchmark::State& state) {
  Config c;
  c.max_iters = 1000000;
  Trainer trainer(c, make_split(1, Split::train, 16, DifficultyMix{}));
  for (auto _ : state) benchmark::DoNotOptimize(trainer.step().loss);
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
