#pragma once

#include <string>
#include <vector>

#include "boltzseg/model.hpp"
#include "boltzseg/train.hpp"

namespace boltzseg {

// Fully resolved run configuration. The on-disk format is flat
// "key = value" lines under [section] headers; unknown sections or keys are
// hard errors with line numbers. Every key has a default, and the canonical
// echo (to_text) lists all of them.
struct RunConfig {
  // [encoder]
  int feature_dim = 64;
  std::vector<int> level_sizes = {8, 16, 32};
  int semantic_size = 32;
  // [decoder]
  int layers = 9;
  int queries = 10;
  int heads = 8;
  int mlp_hidden = 0;  // 0 -> 2 * feature_dim
  int ffn_hidden = 0;
  std::string score_scale = "d";  // "d" (as printed) or "sqrt_d"
  bool text_update = true;
  bool text_prior = true;
  std::string schedule = "auto";  // or comma-separated level indices
  // [sampler]
  std::string policy = "boltzmann";
  double tau0 = 1.0;
  double sample_ratio = 0.10;
  double threshold = 0.5;
  uint64_t sampler_seed = 0;
  // [pigma]
  bool pigma_correction = true;
  int pigma_channels = 16;
  // [train]
  double lr = 2e-4;
  double weight_decay = 1e-2;
  int batch_size = 16;
  int max_epochs = 30;
  int patience = 4;
  double augment_prob = 0.5;
  int threads = 2;
  uint64_t train_seed = 0;
  int train_count = 8000;
  int val_count = 1000;
  int test_count = 1000;
  // [data]
  int image_size = 64;
  int classes = 4;
  int tokens_per_class = 4;
  int max_distractors = 3;
  double noise_sigma = 0.05;
  double area_min = 2e-5;
  double area_max = 0.2;
  uint64_t data_seed = 0;

  static RunConfig defaults() { return RunConfig{}; }
  static RunConfig from_file(const std::string& path);
  static RunConfig from_text(const std::string& text, const std::string& origin);

  // "section.key=value" override (CLI --set).
  void apply_override(const std::string& spec);
  // Sets every *_seed key at once (CLI --seed).
  void set_global_seed(uint64_t seed);

  std::string to_text() const;

  // Derived typed configs (validated).
  ModelConfig model_config() const;
  TrainConfig train_config() const;
  SceneConfig scene_config() const;
  void validate() const;
};

}  // namespace boltzseg
