#include <benchmark/benchmark.h>

#include "boltzseg/boltzmann.hpp"
#include "boltzseg/rng.hpp"

using namespace boltzseg;

namespace {

void BM_BoltzmannDistribution(benchmark::State& state) {
  int side = static_cast<int>(state.range(0));
  RngStream rng(11, RngTag::kMisc, 0);
  SpatialField conf(side, side, 1);
  for (auto& v : conf.data) v = rng.uniform();

  for (auto _ : state) {
    auto field = boltzmann_distribution(conf, 0.5);
    benchmark::DoNotOptimize(field.probabilities.data.data());
  }
  state.SetItemsProcessed(state.iterations() * side * side);
}

void BM_SampleAttentionSet(benchmark::State& state) {
  int side = static_cast<int>(state.range(0));
  RngStream rng(11, RngTag::kMisc, 1);
  SpatialField conf(side, side, 1);
  for (auto& v : conf.data) v = rng.uniform();
  auto field = boltzmann_distribution(conf, 0.5);
  int n = sample_count(0.10, side * side);

  uint32_t draw = 0;
  for (auto _ : state) {
    RngStream sample_rng(11, RngTag::kSampling, draw++, 0, 0);
    auto set = sample_attention_set(field, n, sample_rng);
    benchmark::DoNotOptimize(set.indices.data());
  }
  state.SetItemsProcessed(state.iterations() * side * side);
}

}  // namespace

BENCHMARK(BM_BoltzmannDistribution)->Arg(8)->Arg(16)->Arg(32);
BENCHMARK(BM_SampleAttentionSet)->Arg(8)->Arg(16)->Arg(32);
