#pragma once

#include <utility>
#include <vector>

#include "boltzseg/boltzmann.hpp"
#include "boltzseg/tensor.hpp"

namespace boltzseg {

class Tape;

// Packed multi-head projection weights. Each matrix is (d x d) with head j
// occupying output rows [j*d/h, (j+1)*d/h). inv_scale is the score divisor:
// 1/d as written in the cross-attention formula, or 1/sqrt(d) behind the
// config flag.
struct MultiHeadParams {
  TensorPtr wq, wk, wv, wo;
  int heads = 1;
  double inv_scale = 1.0;
};

// Prompt token embeddings, (tokens x d).
struct TextSequence {
  TensorPtr embeddings;
  int tokens = 0;
};

// Self-attention + LayerNorm + FFN-on-queries block shared by the
// text-conditioned prior and the inter-query layers.
struct JointBlockParams {
  MultiHeadParams attn;
  TensorPtr ln_gain, ln_bias;
  TensorPtr ffn_w1, ffn_b1, ffn_w2, ffn_b2;
};

// One query attends to the visual features of its sampled cells and adds the
// projected result to itself:
//   q + W^O concat_j( sum_c softmax_c(W^Q_j q . W^K_j v_c * inv_scale) W^V_j v_c )
// level is an (h, w, d) tensor; the set must be non-empty.
TensorPtr masked_cross_attention(Tape& tape, const TensorPtr& q,
                                 const TensorPtr& level, const AttentionSet& set,
                                 const MultiHeadParams& params);

// Same attention with the level rows already projected: keys[u x d] and
// values[u x d] over the layer's union of sampled cells, `rows` selecting this
// query's subset. Avoids reprojecting shared cells per query.
TensorPtr cross_attention_pooled(Tape& tape, const TensorPtr& q,
                                 const TensorPtr& keys, const TensorPtr& values,
                                 const std::vector<int>& rows,
                                 const TensorPtr& wq, const TensorPtr& wo,
                                 int heads, double inv_scale);

// Rowwise layer norm over the query ensemble with shared gain/bias.
TensorPtr ensemble_layer_norm(Tape& tape, const TensorPtr& queries,
                              const TensorPtr& gain, const TensorPtr& bias);

// FFN(LayerNorm([Q, T] + SelfAttn[Q, T])) with the Q/T split: only the query
// rows pass the FFN; text rows come back normalized (or untouched when
// update_text is false). text may be null (no prompt conditioning).
std::pair<TensorPtr, TensorPtr> joint_self_attention_block(
    Tape& tape, const TensorPtr& queries, const TensorPtr& text,
    const JointBlockParams& params, bool update_text = true);

// Full (unmasked) multi-head self-attention over the rows of x.
TensorPtr self_attention_rows(Tape& tape, const TensorPtr& x,
                              const MultiHeadParams& params);

}  // namespace boltzseg
