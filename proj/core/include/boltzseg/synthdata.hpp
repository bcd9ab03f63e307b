#pragma once

#include <cstdint>
#include <vector>

#include "boltzseg/attention.hpp"
#include "boltzseg/grid.hpp"
#include "boltzseg/params.hpp"

namespace boltzseg {

class Tape;

// Synthetic scenes: one prompted target (ellipse or rectangle, class-coded
// intensity) plus distractors from other classes and additive Gaussian noise.
// Everything is a pure function of (config, index).
struct SceneConfig {
  int image_size = 64;
  double area_min = 2e-5;  // log-uniform target area ratio range
  double area_max = 0.2;
  int max_distractors = 3;
  double noise_sigma = 0.05;
  int classes = 4;  // (ellipse | rectangle) x (low | high intensity)
  uint64_t seed = 0;

  void validate() const;
};

struct Example {
  SpatialField image;        // 1-channel
  SpatialField target_mask;  // 1-channel binary
  int prompt_id = 0;
  double area_ratio = 0.0;   // achieved mask area / image area
  bool area_floored = false; // sub-pixel request floored to 1 pixel
};

// Canonical split bases: train indices start at 0, validation at 8000,
// test at 9000.
constexpr uint32_t kValBase = 8000;
constexpr uint32_t kTestBase = 9000;

Example generate_example(const SceneConfig& cfg, uint32_t index);
std::vector<Example> generate(const SceneConfig& cfg, uint32_t first_index, int count);

void declare_prompt_params(ParamStore& store, int classes, int tokens_per_class,
                           int feature_dim);

// Learned token sequence for a prompt class; gradients flow into the table.
TextSequence prompt_embedding(Tape& tape, const ParamStore& store, int prompt_id,
                              int classes, int tokens_per_class, int feature_dim);

}  // namespace boltzseg
