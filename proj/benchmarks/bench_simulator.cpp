#include <benchmark/benchmark.h>

#include <algorithm>

#include "cordcpd/simulator.hpp"

namespace {

using namespace cordcpd;

void BM_GenerateSeries(benchmark::State& state) {
  SimConfig cfg;
  cfg.n_particles = static_cast<std::size_t>(state.range(0));
  cfg.min_connection_flips = std::min<std::size_t>(cfg.min_connection_flips, cfg.n_particles - 1);
  std::size_t i = 0;
  for (auto _ : state) {
    const TrajectorySeries s = generate_series(ChangeType::connection, Rng::derive(11, i++, "bench"), cfg);
    benchmark::DoNotOptimize(s.values[0]);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(cfg.t_steps * cfg.sample_every));
}
BENCHMARK(BM_GenerateSeries)->Arg(5)->Arg(10)->Unit(benchmark::kMillisecond);

void BM_Advance(benchmark::State& state) {
  const SimConfig cfg;
  Rng rng(5);
  const ConnectionMatrix conn = sample_connections(rng, cfg);
  const ParticleState start = sample_initial_state(rng, cfg);
  const auto steps = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    const ParticleState s = advance(start, conn, steps, cfg);
    benchmark::DoNotOptimize(s.pos[0]);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(steps));
}
BENCHMARK(BM_Advance)->Arg(100)->Arg(10000);

}  // namespace
