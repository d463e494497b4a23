#include "muse/cluster.hpp"
#include "muse/graph.hpp"
#include "muse/sampler.hpp"
#include "muse/vectors.hpp"

#include "generators.hpp"

#include <benchmark/benchmark.h>

using namespace muse;

namespace {

void BM_Agglomerative(benchmark::State& state) {
  Rng rng(1);
  const auto v = gen::clustered_vectors(rng, static_cast<std::size_t>(state.range(0)), 64);
  for (auto _ : state) benchmark::DoNotOptimize(agglomerative(v, 0.2));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Agglomerative)->RangeMultiplier(2)->Range(64, 1024)->Complexity();

void BM_Kmeans(benchmark::State& state) {
  Rng rng(2);
  const auto v = gen::clustered_vectors(rng, static_cast<std::size_t>(state.range(0)), 64);
  for (auto _ : state) benchmark::DoNotOptimize(kmeans(v, 8, 0));
}
BENCHMARK(BM_Kmeans)->RangeMultiplier(4)->Range(256, 4096);

void BM_Nearest(benchmark::State& state) {
  Rng rng(3);
  std::vector<std::pair<std::string, Vector>> items;
  for (long i = 0; i < state.range(0); ++i) items.emplace_back(gen::node_name(static_cast<std::size_t>(i)), gen::unit_vector(rng, 256));
  const auto index = NnIndex::build(std::move(items));
  const auto q = gen::unit_vector(rng, 256);
  for (auto _ : state) benchmark::DoNotOptimize(index.nearest(q, 10));
}
BENCHMARK(BM_Nearest)->RangeMultiplier(4)->Range(1024, 65536);

void BM_Mmr(benchmark::State& state) {
  Rng rng(4);
  std::vector<MmrCandidate> c;
  for (long i = 0; i < state.range(0); ++i) c.push_back({gen::node_name(static_cast<std::size_t>(i)), gen::unit_vector(rng, 256)});
  const auto q = gen::unit_vector(rng, 256);
  for (auto _ : state) benchmark::DoNotOptimize(mmr_select(c, q, 0.7, 5));
}
BENCHMARK(BM_Mmr)->RangeMultiplier(4)->Range(16, 1024);

void BM_TransitiveReduce(benchmark::State& state) {
  Rng rng(5);
  const auto n = static_cast<std::size_t>(state.range(0));
  const Fcg g = gen::dag(rng, n, 4.0 / static_cast<double>(n));
  for (auto _ : state) benchmark::DoNotOptimize(transitive_reduce(g));
}
BENCHMARK(BM_TransitiveReduce)->RangeMultiplier(4)->Range(64, 4096);

void BM_BreakCycles(benchmark::State& state) {
  Rng rng(6);
  const auto n = static_cast<std::size_t>(state.range(0));
  const Fcg g = gen::scored_digraph(rng, n, 3.0 / static_cast<double>(n));
  for (auto _ : state) benchmark::DoNotOptimize(break_cycles(g));
}
BENCHMARK(BM_BreakCycles)->RangeMultiplier(4)->Range(64, 1024);

}  // namespace

BENCHMARK_MAIN();
