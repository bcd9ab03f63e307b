#include "boltzseg/pigma.hpp"

#include "boltzseg/errors.hpp"
#include "boltzseg/nn.hpp"

namespace boltzseg {

void PigmaConfig::validate() const {
  if (channels < 1) throw ConfigError("pigma: channels must be >= 1");
}

void declare_pigma_params(ParamStore& store, const PigmaConfig& cfg, int queries,
                          int image_channels) {
  cfg.validate();
  int ci1 = queries + image_channels;
  store.declare("pigma.t1.w", {4, 4, ci1, cfg.channels}, Init::kUniformFanIn,
                16 * ci1);
  store.declare("pigma.t1.b", {cfg.channels}, Init::kZero);
  int ci2 = cfg.channels + image_channels;
  store.declare("pigma.t2.w", {4, 4, ci2, 1}, Init::kUniformFanIn, 16 * ci2);
  store.declare("pigma.t2.b", {1}, Init::kZero);
}

namespace {

void check_logits(const std::vector<TensorPtr>& mask_logits) {
  if (mask_logits.empty()) throw InvalidArgument("pigma: empty mask list");
  const auto& first = mask_logits.front();
  if (first->rank() != 3 || first->dim(2) != 1)
    throw ConfigError("pigma: mask logits must be (h, w, 1)");
  for (const auto& t : mask_logits)
    if (t->shape != first->shape) throw ConfigError("pigma: mask dims mismatch");
}

}  // namespace

TensorPtr ensemble_mean(Tape& tape, const std::vector<TensorPtr>& mask_logits) {
  check_logits(mask_logits);
  auto mean = scale(tape, add_n(tape, mask_logits),
                    1.0 / static_cast<double>(mask_logits.size()));
  int h = mean->dim(0), w = mean->dim(1);
  return resample_bilinear(tape, mean, 4 * h, 4 * w);
}

TensorPtr pixel_grounded_correction(Tape& tape, const ParamStore& store,
                                    const PigmaConfig& cfg,
                                    const std::vector<TensorPtr>& mask_logits,
                                    const TensorPtr& image) {
  cfg.validate();
  check_logits(mask_logits);
  if (image->rank() != 3) throw ConfigError("pigma: image must be (h, w, c)");
  int h = mask_logits.front()->dim(0), w = mask_logits.front()->dim(1);

  auto stacked = stack_channels(tape, mask_logits);
  auto img1 = resample_bilinear(tape, image, h, w);
  auto in1 = concat_channels(tape, stacked, img1);
  auto mid = gelu(tape, tconv2d_x2(tape, in1, store.get("pigma.t1.w"),
                                   store.get("pigma.t1.b")));
  auto img2 = resample_bilinear(tape, image, 2 * h, 2 * w);
  auto in2 = concat_channels(tape, mid, img2);
  return tconv2d_x2(tape, in2, store.get("pigma.t2.w"), store.get("pigma.t2.b"));
}

TensorPtr pigma_aggregate(Tape& tape, const ParamStore& store,
                          const PigmaConfig& cfg,
                          const std::vector<TensorPtr>& mask_logits,
                          const TensorPtr& image) {
  auto mean_up = ensemble_mean(tape, mask_logits);
  if (!cfg.correction) return sigmoid(tape, mean_up);
  auto corr = pixel_grounded_correction(tape, store, cfg, mask_logits, image);
  if (corr->shape != mean_up->shape)
    throw ConfigError("pigma: correction/mean shape mismatch");
  return sigmoid(tape, scale(tape, add(tape, mean_up, corr), 0.5));
}

}  // namespace boltzseg
