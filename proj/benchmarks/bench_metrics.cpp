#include <benchmark/benchmark.h>

#include <cstdint>
#include <vector>

#include "cordcpd/metrics.hpp"
#include "cordcpd/rng.hpp"

namespace {

using namespace cordcpd;

void BM_AucRoc(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(7);
  std::vector<double> scores(n);
  std::vector<std::uint8_t> positive(n);
  for (std::size_t i = 0; i < n; ++i) {
    positive[i] = rng.bernoulli(0.3) ? 1 : 0;
    scores[i] = rng.normal(positive[i] ? 1.0 : 0.0, 1.0);
  }
  positive[0] = 1;
  positive[1] = 0;
  for (auto _ : state) benchmark::DoNotOptimize(auc_roc(scores, positive));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_AucRoc)->RangeMultiplier(10)->Range(100, 100000);

void BM_StepAuc(benchmark::State& state) {
  Rng rng(8);
  std::vector<double> scores(99);
  for (auto& s : scores) s = rng.uniform();
  for (auto _ : state) benchmark::DoNotOptimize(step_auc(scores, 50, 5));
}
BENCHMARK(BM_StepAuc);

}  // namespace
