#pragma once

#include <utility>

#include "boltzseg/grid.hpp"
#include "boltzseg/rng.hpp"
#include "boltzseg/tensor.hpp"

namespace boltzseg {

class Tape;

// Soft Dice loss 1 - (2 sum(p t) + eps) / (sum p + sum t + eps); eps = 1
// keeps empty-empty pairs at exactly 0.
double dice_loss(const SpatialField& pred, const SpatialField& target,
                 double eps = 1.0);
// Mean pixelwise binary cross-entropy; predictions clamped to
// [1e-7, 1 - 1e-7].
double bce_loss(const SpatialField& pred, const SpatialField& target);

// Differentiable versions against a constant target.
TensorPtr dice_loss_t(Tape& tape, const TensorPtr& pred, const SpatialField& target,
                      double eps = 1.0);
TensorPtr bce_loss_t(Tape& tape, const TensorPtr& pred, const SpatialField& target);

// Dice overlap score 2|P n T| / (|P| + |T|) on a binarized prediction.
double dice_score(const SpatialField& pred_probs, const SpatialField& target,
                  double threshold = 0.5);

// With probability `prob`: rotation from {0, 90, 180, 270} degrees, center
// shift +-10% per axis, scale +-10%; the identical transform hits image and
// mask, and the mask is re-binarized at 0.5. Square inputs only.
std::pair<SpatialField, SpatialField> augment(const SpatialField& image,
                                              const SpatialField& mask,
                                              RngStream& rng, double prob);

// Exact quarter-turn rotation (square fields).
SpatialField rotate90(const SpatialField& field, int quarter_turns);
// Shift/scale about the field center with bilinear sampling, edge clamped.
SpatialField affine_resample(const SpatialField& field, double shift_x,
                             double shift_y, double scl);

// Nearest-neighbor resize for binary targets (exact block replication for
// integer upscale factors).
SpatialField resize_nearest(const SpatialField& field, int out_h, int out_w);

}  // namespace boltzseg
