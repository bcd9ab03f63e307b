#pragma once

#include <memory>
#include <string>

#include "boltzseg/decoder.hpp"
#include "boltzseg/encoder.hpp"
#include "boltzseg/pigma.hpp"
#include "boltzseg/synthdata.hpp"

namespace boltzseg {

struct ModelConfig {
  EncoderConfig encoder;
  DecoderConfig decoder;
  PigmaConfig pigma;
  int prompt_classes = 4;
  int prompt_tokens = 4;

  void validate() const;
  // Mask resolution after PiGMA's two 2x stages.
  int output_size() const { return 4 * encoder.semantic_size; }
};

struct ModelForward {
  TensorPtr probs;      // (4hs, 4ws, 1) probabilities
  TensorPtr loss;       // dice + bce, scalar (null when no target)
  double loss_dice = 0.0;
  double loss_bce = 0.0;
  DecoderResult decoder;
};

// Full system: conv pyramid encoder, prompt embedding table, sampling
// decoder, PiGMA aggregation.
class Model {
 public:
  Model(ModelConfig cfg, uint64_t param_seed);
  // Copying would alias parameter storage; build a fresh Model and
  // copy_values_from instead.
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  const ModelConfig& config() const { return cfg_; }
  ParamStore& store() { return store_; }
  const ParamStore& store() const { return store_; }

  ModelForward forward(Tape& tape, const SpatialField& image, int prompt_id,
                       uint32_t forward_id, bool record_fields = false) const;
  // Adds dice+bce against a binary target (resized nearest to the output
  // resolution if needed).
  ModelForward forward_loss(Tape& tape, const SpatialField& image, int prompt_id,
                            const SpatialField& target, uint32_t forward_id,
                            bool record_fields = false) const;

 private:
  ModelConfig cfg_;
  mutable ParamStore store_;
};

}  // namespace boltzseg
