#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "boltzseg/grid.hpp"
#include "boltzseg/rng.hpp"

namespace boltzseg {

enum class SamplerPolicy { kBoltzmann, kFull, kThreshold };

SamplerPolicy sampler_policy_from_string(const std::string& s);
std::string to_string(SamplerPolicy p);

struct SamplerConfig {
  double tau0 = 1.0;          // base temperature
  double sample_ratio = 0.10; // N = ceil(ratio * level cell count)
  SamplerPolicy policy = SamplerPolicy::kBoltzmann;
  double threshold_value = 0.5;
  uint64_t seed = 0;

  void validate() const;
};

// Normalized sampling probabilities over a level grid at temperature tau.
struct BoltzmannField {
  SpatialField probabilities;  // 1-channel, sums to 1
  double temperature = 1.0;
};

// Sparse set of grid cells one query may attend to in one layer. Indices are
// sorted unique linear (y * width + x) positions; never empty.
struct AttentionSet {
  int level_height = 0;
  int level_width = 0;
  std::vector<int> indices;

  int size() const { return static_cast<int>(indices.size()); }
};

// U_xy = sigmoid(mu . S_xy) over the semantic grid.
SpatialField confidence_map(const std::vector<double>& mu, const SpatialField& semantic);

// p_xy proportional to exp(U_xy / tau), normalized by the discrete grid sum.
BoltzmannField boltzmann_distribution(const SpatialField& confidence, double tau);

// Annealing schedule tau_l = tau0 / (1 + l).
double temperature_at(double tau0, int layer);

// Number of sampling trials for a level with `cells` positions.
int sample_count(double ratio, int cells);

// Independent per-cell inclusion with probability 1 - (1 - p)^N (the parallel
// Bernoulli approximation of N with-replacement draws). Guarantees a
// non-empty result (argmax fallback) and caps the set at the N
// highest-probability sampled cells. Consumes draws [0, cells) of `rng`.
AttentionSet sample_attention_set(const BoltzmannField& field, int n_trials,
                                  const RngStream& rng);

AttentionSet full_attention_set(int height, int width);

// Cells where sigmoid(mask_logit) >= threshold; full fallback when empty or
// when no previous mask exists.
AttentionSet baseline_attention_set(SamplerPolicy policy,
                                    const SpatialField* previous_mask_logits,
                                    int height, int width, double threshold);

}  // namespace boltzseg
