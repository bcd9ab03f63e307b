#include "boltzseg/boltzmann.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

#include "boltzseg/errors.hpp"

namespace boltzseg {

SamplerPolicy sampler_policy_from_string(const std::string& s) {
  if (s == "boltzmann") return SamplerPolicy::kBoltzmann;
  if (s == "full") return SamplerPolicy::kFull;
  if (s == "threshold") return SamplerPolicy::kThreshold;
  throw ConfigError("unknown sampler policy '" + s + "'");
}

std::string to_string(SamplerPolicy p) {
  switch (p) {
    case SamplerPolicy::kBoltzmann: return "boltzmann";
    case SamplerPolicy::kFull: return "full";
    case SamplerPolicy::kThreshold: return "threshold";
  }
  return "?";
}

void SamplerConfig::validate() const {
  if (!(tau0 > 0.0)) throw ConfigError("sampler: tau0 must be > 0");
  if (!(sample_ratio > 0.0 && sample_ratio <= 1.0))
    throw ConfigError("sampler: sample_ratio must be in (0, 1]");
  if (!(threshold_value > 0.0 && threshold_value < 1.0))
    throw ConfigError("sampler: threshold_value must be in (0, 1)");
}

SpatialField confidence_map(const std::vector<double>& mu, const SpatialField& semantic) {
  semantic.validate();
  int d = semantic.channels;
  if (static_cast<int>(mu.size()) != d)
    throw ConfigError("confidence_map: mu dimension != semantic channels");
  SpatialField out(semantic.height, semantic.width, 1);
  int64_t cells = static_cast<int64_t>(semantic.height) * semantic.width;
  Eigen::Map<Eigen::VectorXd> ov(out.data.data(), cells);
  ov.noalias() =
      Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                     Eigen::RowMajor>>(semantic.data.data(), cells, d) *
      Eigen::Map<const Eigen::VectorXd>(mu.data(), d);
  for (int64_t p = 0; p < cells; ++p) out.data[p] = 1.0 / (1.0 + std::exp(-out.data[p]));
  return out;
}

BoltzmannField boltzmann_distribution(const SpatialField& confidence, double tau) {
  confidence.validate();
  if (confidence.channels != 1)
    throw InvalidArgument("boltzmann_distribution: confidence must be 1-channel");
  if (!(tau > 0.0)) throw InvalidArgument("boltzmann_distribution: tau must be > 0");

  double mx = -std::numeric_limits<double>::infinity();
  for (double u : confidence.data) {
    if (!std::isfinite(u))
      throw NumericalError("boltzmann_distribution: non-finite confidence value");
    mx = std::max(mx, u);
  }
  BoltzmannField field;
  field.temperature = tau;
  field.probabilities = SpatialField(confidence.height, confidence.width, 1);
  double z = 0.0;
  for (size_t i = 0; i < confidence.data.size(); ++i) {
    double e = std::exp((confidence.data[i] - mx) / tau);
    field.probabilities.data[i] = e;
    z += e;
  }
  if (!(z > 0.0) || !std::isfinite(z))
    throw NumericalError("boltzmann_distribution: degenerate normalizer");
  for (double& p : field.probabilities.data) p /= z;
  return field;
}

double temperature_at(double tau0, int layer) {
  if (!(tau0 > 0.0)) throw InvalidArgument("temperature_at: tau0 must be > 0");
  if (layer < 0) throw InvalidArgument("temperature_at: layer must be >= 0");
  return tau0 / (1.0 + layer);
}

int sample_count(double ratio, int cells) {
  int n = static_cast<int>(std::ceil(ratio * cells));
  return std::max(1, std::min(n, cells));
}

AttentionSet sample_attention_set(const BoltzmannField& field, int n_trials,
                                  const RngStream& rng) {
  const SpatialField& p = field.probabilities;
  p.validate();
  if (n_trials < 1) throw InvalidArgument("sample_attention_set: n_trials must be >= 1");

  AttentionSet set;
  set.level_height = p.height;
  set.level_width = p.width;
  int cells = p.cells();
  set.indices.reserve(std::min(cells, 2 * n_trials));
  for (int c = 0; c < cells; ++c) {
    double miss = 1.0 - p.data[c];
    double include = 1.0 - std::pow(std::max(0.0, miss), static_cast<double>(n_trials));
    if (rng.uniform_at(static_cast<uint32_t>(c)) < include) set.indices.push_back(c);
  }
  if (set.indices.empty()) {
    // Deterministic fallback: single argmax cell (lowest index on ties).
    int best = 0;
    for (int c = 1; c < cells; ++c)
      if (p.data[c] > p.data[best]) best = c;
    set.indices.push_back(best);
    return set;
  }
  if (static_cast<int>(set.indices.size()) > n_trials) {
    // The Bernoulli approximation can overshoot |A| <= N; keep the N
    // highest-probability sampled cells (lowest index wins ties).
    std::stable_sort(set.indices.begin(), set.indices.end(),
                     [&p](int a, int b) { return p.data[a] > p.data[b]; });
    set.indices.resize(n_trials);
    std::sort(set.indices.begin(), set.indices.end());
  }
  return set;
}

AttentionSet full_attention_set(int height, int width) {
  AttentionSet set;
  set.level_height = height;
  set.level_width = width;
  set.indices.resize(static_cast<size_t>(height) * width);
  for (size_t i = 0; i < set.indices.size(); ++i) set.indices[i] = static_cast<int>(i);
  return set;
}

AttentionSet baseline_attention_set(SamplerPolicy policy,
                                    const SpatialField* previous_mask_logits,
                                    int height, int width, double threshold) {
  if (policy == SamplerPolicy::kFull || previous_mask_logits == nullptr)
    return full_attention_set(height, width);
  if (policy != SamplerPolicy::kThreshold)
    throw InvalidArgument("baseline_attention_set: policy must be full or threshold");
  const SpatialField& m = *previous_mask_logits;
  m.validate();
  if (m.height != height || m.width != width || m.channels != 1)
    throw InvalidArgument("baseline_attention_set: mask dims mismatch");
  AttentionSet set;
  set.level_height = height;
  set.level_width = width;
  for (int c = 0; c < m.cells(); ++c) {
    double prob = 1.0 / (1.0 + std::exp(-m.data[c]));
    if (prob >= threshold) set.indices.push_back(c);
  }
  if (set.indices.empty()) return full_attention_set(height, width);
  return set;
}

}  // namespace boltzseg
