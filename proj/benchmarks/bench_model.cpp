#include <benchmark/benchmark.h>

#include <vector>

#include "cordcpd/model.hpp"
#include "cordcpd/optim.hpp"
#include "cordcpd/scoring.hpp"
#include "cordcpd/simulator.hpp"
#include "cordcpd/training.hpp"

namespace {

using namespace cordcpd;

ModelConfig bench_config(std::size_t hidden, TelKind tel, SelKind sel) {
  ModelConfig cfg;
  cfg.encoder.tel_kind = tel;
  cfg.encoder.sel_kind = sel;
  cfg.encoder.hidden_dim = hidden;
  cfg.decoder.hidden_dim = hidden;
  return cfg;
}

std::vector<Tensor> bench_series(std::size_t count) {
  const SimConfig sim;
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < count; ++i)
    out.push_back(generate_series(ChangeType::connection, Rng::derive(3, i, "bench"), sim).values);
  return out;
}

void BM_EdgePosterior(benchmark::State& state) {
  const auto tel = static_cast<TelKind>(state.range(1));
  const auto sel = static_cast<SelKind>(state.range(2));
  const CordModel model(bench_config(static_cast<std::size_t>(state.range(0)), tel, sel));
  const Tensor series = bench_series(1).front();
  for (auto _ : state) {
    const Tensor p = model.edge_posterior(series);
    benchmark::DoNotOptimize(p[0]);
  }
}
BENCHMARK(BM_EdgePosterior)
    ->ArgsProduct({{32, 64}, {0, 1}, {0, 1}})
    ->ArgNames({"hidden", "tel", "sel"})
    ->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  CordModel model(bench_config(32, TelKind::rnn, SelKind::gnn));
  const std::vector<Tensor> data = bench_series(batch);
  TrainConfig cfg;
  cfg.batch_size = batch;
  AdamState opt(model.params().size(), AdamConfig{});
  std::size_t epoch = 1;
  for (auto _ : state) {
    const double loss = train_epoch(model, data, opt, cfg, epoch++);
    benchmark::DoNotOptimize(loss);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
}
BENCHMARK(BM_TrainStep)->Arg(4)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_ScoreSeries(benchmark::State& state) {
  const CordModel model(bench_config(32, TelKind::rnn, SelKind::gnn));
  const Tensor series = bench_series(1).front();
  const auto k = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    const ScoreTriple s = score_series(model, series, k);
    benchmark::DoNotOptimize(s.s_en.data());
  }
}
BENCHMARK(BM_ScoreSeries)->Arg(1)->Arg(5)->Arg(10)->Unit(benchmark::kMillisecond);

}  // namespace
