#include <benchmark/benchmark.h>

#include "boltzseg/config.hpp"
#include "boltzseg/model.hpp"
#include "boltzseg/synthdata.hpp"

using namespace boltzseg;

namespace {

// End-to-end forward pass (and backward) on the default desk-scale model,
// per sampler policy.
void run_forward(benchmark::State& state, const char* policy, bool backward) {
  RunConfig cfg;
  cfg.policy = policy;
  Model model(cfg.model_config(), 0);
  Example ex = generate_example(cfg.scene_config(), 0);

  uint32_t fwd_id = 0;
  for (auto _ : state) {
    Tape tape;
    auto out = model.forward_loss(tape, ex.image, ex.prompt_id, ex.target_mask,
                                  fwd_id++);
    if (backward) {
      model.store().zero_grad();
      tape.backward(out.loss);
    }
    benchmark::DoNotOptimize(out.probs->v.data());
  }
}

void BM_ForwardBoltzmann(benchmark::State& state) {
  run_forward(state, "boltzmann", false);
}
void BM_ForwardFull(benchmark::State& state) { run_forward(state, "full", false); }
void BM_TrainStepBoltzmann(benchmark::State& state) {
  run_forward(state, "boltzmann", true);
}

}  // namespace

BENCHMARK(BM_ForwardBoltzmann)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ForwardFull)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TrainStepBoltzmann)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
