#pragma once

#include <cstdint>
#include <vector>

#include "boltzseg/attention.hpp"
#include "boltzseg/boltzmann.hpp"
#include "boltzseg/encoder.hpp"
#include "boltzseg/params.hpp"
#include "boltzseg/tensor.hpp"

namespace boltzseg {

class Tape;

enum class ScoreScale { kDim, kSqrtDim };

struct DecoderConfig {
  int layers = 9;
  int queries = 10;
  int heads = 8;
  int feature_dim = 64;
  int mlp_hidden = 0;  // 0 -> 2 * feature_dim
  int ffn_hidden = 0;  // 0 -> 2 * feature_dim
  ScoreScale score_scale = ScoreScale::kDim;
  bool text_update = true;   // feed normalized text rows to the next layer
  bool text_prior = true;    // condition the initial queries on the prompt
  SamplerConfig sampler;
  // Pyramid level index per layer; empty -> coarse-to-fine loop over all
  // levels, repeated until `layers` entries exist.
  std::vector<int> schedule;

  void validate() const;
  std::vector<int> resolved_schedule(int n_levels) const;
  double inv_scale() const;
};

struct TraceEntry {
  int layer = 0;
  int query = 0;
  double temperature = 0.0;
  BoltzmannField field;      // sampling probabilities at level resolution
  AttentionSet set;
  int attended_pairs = 0;
};

struct SamplingTrace {
  std::vector<TraceEntry> entries;  // layers * queries after a forward pass
  int64_t total_attended_pairs() const;
  std::vector<int64_t> attended_pairs_per_layer(int layers) const;
};

struct DecoderResult {
  std::vector<TensorPtr> mask_logits;  // per query, (hs, ws, 1)
  SamplingTrace trace;
  TensorPtr final_queries;             // (m, d)
};

void declare_decoder_params(ParamStore& store, const DecoderConfig& cfg);

// Q0 = FFN(LayerNorm([Q, T] + SelfAttn[Q, T])), Q rows only. text may be null
// (unconditioned prior).
TensorPtr init_text_conditioned(Tape& tape, const ParamStore& store,
                                const DecoderConfig& cfg, const TensorPtr& text);

// Per-query mask logits: MLP(q) . S_xy, pre-sigmoid, at semantic resolution.
TensorPtr per_query_mask(Tape& tape, const ParamStore& store,
                         const DecoderConfig& cfg, const TensorPtr& q,
                         const TensorPtr& semantic);

// The full decoder loop. `seed`/`forward_id` address the sampling RNG
// substreams: layer l, query i draws from (seed, forward_id, l, i).
// record_fields=false skips the per-entry Boltzmann field snapshots (counts
// and sets are always recorded).
DecoderResult decoder_forward(Tape& tape, const ParamStore& store,
                              const DecoderConfig& cfg, const EncodedImage& enc,
                              const TensorPtr& text, uint64_t seed,
                              uint32_t forward_id, bool record_fields = true);

}  // namespace boltzseg
