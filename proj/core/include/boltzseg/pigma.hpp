#pragma once

#include <vector>

#include "boltzseg/params.hpp"
#include "boltzseg/tensor.hpp"

namespace boltzseg {

class Tape;

struct PigmaConfig {
  int channels = 16;       // intermediate convolution dimension c
  bool correction = true;  // off -> query-ensemble arm only

  void validate() const;
};

// Two transposed-conv stages (kernel 4, stride 2 each): output resolution is
// 4x the mask input resolution.
void declare_pigma_params(ParamStore& store, const PigmaConfig& cfg, int queries,
                          int image_channels);

// Pointwise mean of the per-query logit fields, upsampled to 4x resolution.
TensorPtr ensemble_mean(Tape& tape, const std::vector<TensorPtr>& mask_logits);

// Stacks the m logit fields as channels, concatenates the resized image at
// each stage, and deconvolves twice into a 1-channel 4x correction field.
TensorPtr pixel_grounded_correction(Tape& tape, const ParamStore& store,
                                    const PigmaConfig& cfg,
                                    const std::vector<TensorPtr>& mask_logits,
                                    const TensorPtr& image);

// sigmoid((ensemble_mean + correction) / 2); with correction disabled,
// sigmoid(ensemble_mean).
TensorPtr pigma_aggregate(Tape& tape, const ParamStore& store,
                          const PigmaConfig& cfg,
                          const std::vector<TensorPtr>& mask_logits,
                          const TensorPtr& image);

}  // namespace boltzseg
