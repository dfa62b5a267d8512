#include <benchmark/benchmark.h>

#include "cordcpd/autodiff.hpp"
#include "cordcpd/rng.hpp"

namespace {

using namespace cordcpd;

Tensor random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t({rows, cols});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal();
  return t;
}

void BM_MatmulForward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor a = random_matrix(n, n, 1), b = random_matrix(n, n, 2);
  ad::Tape tape;
  tape.set_grad_enabled(false);
  for (auto _ : state) {
    tape.clear();
    const ad::Var y = ad::matmul(tape.constant(a), tape.constant(b));
    benchmark::DoNotOptimize(tape.value(y.id())[0]);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_MatmulForward)->RangeMultiplier(2)->Range(16, 256);

void BM_MatmulBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor a = random_matrix(n, n, 1), b = random_matrix(n, n, 2);
  ad::Tape tape;
  for (auto _ : state) {
    tape.clear();
    const ad::Var x = tape.variable(a), w = tape.variable(b);
    tape.backward(ad::sum(ad::tanh(ad::matmul(x, w))));
    benchmark::DoNotOptimize(tape.grad(x.id())[0]);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(3 * n * n * n));
}
BENCHMARK(BM_MatmulBackward)->RangeMultiplier(2)->Range(16, 256);

}  // namespace
