#include <benchmark/benchmark.h>

#include <random>

#include "xing/attention.hpp"
#include "xing/ops.hpp"

using namespace xing;

namespace {

Tensor random_code(Shape s, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> d(-1, 1);
  std::vector<double> v(numel(s));
  for (double& x : v) x = d(rng);
  return Tensor(std::move(s), std::move(v));
}

// Side length of a square code; channels fixed at 32.
void BM_SingleScale(benchmark::State& state) {
  const auto s = static_cast<std::size_t>(state.range(0));
  ParamStore store;
  Rng rng(1);
  const SAParams p = make_sa(store, "sa", 32, rng);
  const Tensor fi = random_code({1, 32, s, s}, 2), fp = random_code({1, 32, s, s}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(sa_forward(Bind::frozen(), fi, fp, p).out);
  state.counters["tokens"] = double(s * s);
}

void BM_MultiScale(benchmark::State& state) {
  const auto s = static_cast<std::size_t>(state.range(0));
  ParamStore store;
  Rng rng(1);
  const EMSAParams p = make_emsa(store, "emsa", 32, s, s, PyramidSpec{}, 64, rng);
  const Tensor fi = random_code({1, 32, s, s}, 2), fp = random_code({1, 32, s, s}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(emsa_forward(Bind::frozen(), fi, fp, p).out);
  state.counters["tokens"] = double(s * s);
}

// Forward + backward of one attention block on a tape.
void BM_SingleScaleBackward(benchmark::State& state) {
  const auto s = static_cast<std::size_t>(state.range(0));
  ParamStore store;
  Rng rng(1);
  const SAParams p = make_sa(store, "sa", 32, rng);
  p.alpha->assign({0.5});
  const Tensor fi = random_code({1, 32, s, s}, 2), fp = random_code({1, 32, s, s}, 3);
  for (auto _ : state) {
    Graph g;
    g.backward(sum(sa_forward(Bind(&g), fi, fp, p).out));
  }
}

void BM_Conv3x3(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const Tensor x = random_code({8, c, 16, 8}, 4), w = random_code({c, c, 3, 3}, 5), b = random_code({c}, 6);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, w, b, 1, 1));
  state.SetItemsProcessed(state.iterations() * 8 * 16 * 8 * c * c * 9);
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor a = random_code({n, n}, 7), b = random_code({n, n}, 8);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * n * n * n);
}

}  // namespace

BENCHMARK(BM_SingleScale)->Arg(8)->Arg(16)->Arg(24)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_MultiScale)->Arg(8)->Arg(16)->Arg(24)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_SingleScaleBackward)->Arg(8)->Arg(16)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Conv3x3)->Arg(32)->Arg(64)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Matmul)->Arg(64)->Arg(256)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
