#pragma once

#include <utility>
#include <vector>

#include "boltzseg/grid.hpp"
#include "boltzseg/params.hpp"
#include "boltzseg/tensor.hpp"

namespace boltzseg {

class Tape;

struct EncoderConfig {
  int image_size = 64;
  int image_channels = 1;
  int feature_dim = 64;
  // Level grid sizes listed coarse -> fine; each must be image_size / 2^k.
  std::vector<int> level_sizes = {8, 16, 32};
  int semantic_size = 32;  // must equal the finest level

  void validate() const;
  int stages() const;  // number of stride-2 conv stages
};

// Differentiable pyramid: (stride, features) per level, coarse -> fine, plus
// the semantic map. Feeds the decoder directly so gradients reach the
// encoder weights.
struct EncodedImage {
  std::vector<std::pair<int, TensorPtr>> levels;  // (stride, (h, w, d))
  TensorPtr semantic;                             // (hs, ws, d)
};

void declare_encoder_params(ParamStore& store, const EncoderConfig& cfg);

EncodedImage encode_t(Tape& tape, const ParamStore& store, const EncoderConfig& cfg,
                      const TensorPtr& image);

// Detached snapshot for inspection and serialization.
FeaturePyramid encode(const ParamStore& store, const EncoderConfig& cfg,
                      const SpatialField& image);

// Lifts a plain pyramid into constant tensors (for decoding without an
// encoder in tests and tools).
EncodedImage lift_pyramid(const FeaturePyramid& pyramid);

}  // namespace boltzseg
