#include "boltzseg/model.hpp"

#include <cmath>

#include "boltzseg/errors.hpp"
#include "boltzseg/losses.hpp"
#include "boltzseg/nn.hpp"

namespace boltzseg {

void ModelConfig::validate() const {
  encoder.validate();
  decoder.validate();
  pigma.validate();
  if (encoder.feature_dim != decoder.feature_dim)
    throw ConfigError("model: encoder and decoder feature_dim must match");
  if (prompt_classes < 1 || prompt_tokens < 1)
    throw ConfigError("model: prompt_classes and prompt_tokens must be >= 1");
  decoder.resolved_schedule(static_cast<int>(encoder.level_sizes.size()));
}

Model::Model(ModelConfig cfg, uint64_t param_seed)
    : cfg_(std::move(cfg)), store_(param_seed) {
  cfg_.validate();
  declare_encoder_params(store_, cfg_.encoder);
  declare_prompt_params(store_, cfg_.prompt_classes, cfg_.prompt_tokens,
                        cfg_.decoder.feature_dim);
  declare_decoder_params(store_, cfg_.decoder);
  declare_pigma_params(store_, cfg_.pigma, cfg_.decoder.queries,
                       cfg_.encoder.image_channels);
}

ModelForward Model::forward(Tape& tape, const SpatialField& image, int prompt_id,
                            uint32_t forward_id, bool record_fields) const {
  ModelForward out;
  TensorPtr img = tensor_from_field(image);
  EncodedImage enc = encode_t(tape, store_, cfg_.encoder, img);
  TextSequence text = prompt_embedding(tape, store_, prompt_id, cfg_.prompt_classes,
                                       cfg_.prompt_tokens, cfg_.decoder.feature_dim);
  out.decoder = decoder_forward(tape, store_, cfg_.decoder, enc, text.embeddings,
                                cfg_.decoder.sampler.seed, forward_id, record_fields);
  out.probs = pigma_aggregate(tape, store_, cfg_.pigma, out.decoder.mask_logits, img);
  return out;
}

ModelForward Model::forward_loss(Tape& tape, const SpatialField& image,
                                 int prompt_id, const SpatialField& target,
                                 uint32_t forward_id, bool record_fields) const {
  ModelForward out = forward(tape, image, prompt_id, forward_id, record_fields);
  int oh = out.probs->dim(0), ow = out.probs->dim(1);
  SpatialField tgt = (target.height == oh && target.width == ow)
                         ? target
                         : resize_nearest(target, oh, ow);
  TensorPtr dice = dice_loss_t(tape, out.probs, tgt);
  TensorPtr bce = bce_loss_t(tape, out.probs, tgt);
  out.loss_dice = dice->v[0];
  out.loss_bce = bce->v[0];
  out.loss = add(tape, dice, bce);
  if (!std::isfinite(out.loss->v[0]))
    throw NumericalError("model: non-finite loss");
  return out;
}

}  // namespace boltzseg
