#include <benchmark/benchmark.h>

#include "boltzseg/attention.hpp"
#include "boltzseg/nn.hpp"
#include "boltzseg/params.hpp"
#include "boltzseg/rng.hpp"

using namespace boltzseg;

namespace {

TensorPtr random_tensor(std::vector<int> shape, RngStream& rng, bool grad) {
  auto t = make_tensor(std::move(shape), grad);
  for (auto& v : t->v) v = rng.uniform(-1.0, 1.0);
  return t;
}

void BM_MaskedCrossAttention(benchmark::State& state) {
  int d = 64, heads = 8;
  int side = static_cast<int>(state.range(0));
  int set_size = static_cast<int>(state.range(1));
  RngStream rng(7, RngTag::kMisc, 0);

  auto q = random_tensor({d}, rng, true);
  auto level = random_tensor({side, side, d}, rng, true);
  MultiHeadParams params{random_tensor({d, d}, rng, true),
                         random_tensor({d, d}, rng, true),
                         random_tensor({d, d}, rng, true),
                         random_tensor({d, d}, rng, true), heads, 1.0 / d};
  AttentionSet set;
  set.level_height = side;
  set.level_width = side;
  for (int i = 0; i < set_size && i < side * side; ++i)
    set.indices.push_back(i * (side * side / set_size));

  for (auto _ : state) {
    Tape tape;
    auto out = masked_cross_attention(tape, q, level, set, params);
    benchmark::DoNotOptimize(out->v.data());
  }
  state.SetItemsProcessed(state.iterations() * set.size());
}

void BM_JointSelfAttention(benchmark::State& state) {
  int d = 64, heads = 8;
  int m = static_cast<int>(state.range(0));
  int tokens = 4;
  RngStream rng(7, RngTag::kMisc, 1);

  auto queries = random_tensor({m, d}, rng, true);
  auto text = random_tensor({tokens, d}, rng, true);
  JointBlockParams params;
  params.attn = {random_tensor({d, d}, rng, true), random_tensor({d, d}, rng, true),
                 random_tensor({d, d}, rng, true), random_tensor({d, d}, rng, true),
                 heads, 1.0 / d};
  params.ln_gain = random_tensor({d}, rng, true);
  params.ln_bias = random_tensor({d}, rng, true);
  params.ffn_w1 = random_tensor({2 * d, d}, rng, true);
  params.ffn_b1 = random_tensor({2 * d}, rng, true);
  params.ffn_w2 = random_tensor({d, 2 * d}, rng, true);
  params.ffn_b2 = random_tensor({d}, rng, true);

  for (auto _ : state) {
    Tape tape;
    auto [qo, to] = joint_self_attention_block(tape, queries, text, params);
    benchmark::DoNotOptimize(qo->v.data());
  }
  state.SetItemsProcessed(state.iterations() * (m + tokens));
}

}  // namespace

BENCHMARK(BM_MaskedCrossAttention)->Args({32, 103})->Args({32, 1024})->Args({8, 7});
BENCHMARK(BM_JointSelfAttention)->Arg(1)->Arg(10)->Arg(32);
