#include "boltzseg/encoder.hpp"

#include <algorithm>

#include "boltzseg/errors.hpp"
#include "boltzseg/nn.hpp"

namespace boltzseg {

void EncoderConfig::validate() const {
  if (image_size < 2) throw ConfigError("encoder: image_size must be >= 2");
  if (image_channels < 1) throw ConfigError("encoder: image_channels must be >= 1");
  if (feature_dim < 1) throw ConfigError("encoder: feature_dim must be >= 1");
  if (level_sizes.empty()) throw ConfigError("encoder: need at least one level");
  int prev = 0;
  for (int s : level_sizes) {
    if (s <= prev) throw ConfigError("encoder: level sizes must strictly increase");
    int size = image_size;
    while (size > s) {
      if (size % 2 != 0) throw ConfigError("encoder: level size must divide image_size by powers of 2");
      size /= 2;
    }
    if (size != s) throw ConfigError("encoder: level size must be image_size / 2^k");
    prev = s;
  }
  if (semantic_size != level_sizes.back())
    throw ConfigError("encoder: semantic_size must equal finest level size");
}

int EncoderConfig::stages() const {
  int n = 0, size = image_size;
  while (size > level_sizes.front()) {
    size /= 2;
    ++n;
  }
  return n;
}

void declare_encoder_params(ParamStore& store, const EncoderConfig& cfg) {
  cfg.validate();
  int d = cfg.feature_dim;
  int cin = cfg.image_channels;
  for (int s = 0; s < cfg.stages(); ++s) {
    int ci = s == 0 ? cin : d;
    store.declare("enc.stage" + std::to_string(s) + ".w", {3, 3, ci, d},
                  Init::kUniformFanIn, 9 * ci);
    store.declare("enc.stage" + std::to_string(s) + ".b", {d}, Init::kZero);
  }
  store.declare("enc.semantic.w", {3, 3, d, d}, Init::kUniformFanIn, 9 * d);
  store.declare("enc.semantic.b", {d}, Init::kZero);
}

EncodedImage encode_t(Tape& tape, const ParamStore& store, const EncoderConfig& cfg,
                      const TensorPtr& image) {
  cfg.validate();
  if (image->rank() != 3 || image->dim(0) != cfg.image_size ||
      image->dim(1) != cfg.image_size || image->dim(2) != cfg.image_channels)
    throw ConfigError("encode: image dims do not match config");

  int n_stages = cfg.stages();
  // Stage s halves resolution; outputs are collected at every configured
  // level size, finest to coarsest as the stages run.
  std::vector<TensorPtr> by_size(n_stages);
  TensorPtr x = image;
  for (int s = 0; s < n_stages; ++s) {
    auto w = store.get("enc.stage" + std::to_string(s) + ".w");
    auto b = store.get("enc.stage" + std::to_string(s) + ".b");
    x = gelu(tape, conv2d(tape, x, w, b, /*stride=*/2, /*pad=*/1));
    by_size[s] = x;
  }

  auto stage_of = [&cfg](int level_size) {
    int stage = 0, size = cfg.image_size;
    while (size > level_size) {
      size /= 2;
      ++stage;
    }
    return stage - 1;
  };

  EncodedImage out;
  for (int level_size : cfg.level_sizes)
    out.levels.emplace_back(cfg.image_size / level_size, by_size[stage_of(level_size)]);
  auto sw = store.get("enc.semantic.w");
  auto sb = store.get("enc.semantic.b");
  out.semantic =
      conv2d(tape, by_size[stage_of(cfg.level_sizes.back())], sw, sb, 1, 1);
  return out;
}

FeaturePyramid encode(const ParamStore& store, const EncoderConfig& cfg,
                      const SpatialField& image) {
  Tape tape;
  EncodedImage enc = encode_t(tape, store, cfg, tensor_from_field(image));
  FeaturePyramid pyr;
  for (auto& [stride, t] : enc.levels)
    pyr.levels.push_back({stride, field_from_tensor(*t)});
  pyr.semantic = field_from_tensor(*enc.semantic);
  pyr.validate();
  return pyr;
}

EncodedImage lift_pyramid(const FeaturePyramid& pyramid) {
  pyramid.validate();
  EncodedImage enc;
  for (const auto& level : pyramid.levels)
    enc.levels.emplace_back(level.stride, tensor_from_field(level.field));
  enc.semantic = tensor_from_field(pyramid.semantic);
  return enc;
}

}  // namespace boltzseg
