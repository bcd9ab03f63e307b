#include "boltzseg/losses.hpp"

#include <algorithm>
#include <cmath>

#include "boltzseg/errors.hpp"

namespace boltzseg {

namespace {

constexpr double kProbClamp = 1e-7;

void check_pair(const SpatialField& a, const SpatialField& b, const char* op) {
  a.validate();
  b.validate();
  if (a.height != b.height || a.width != b.width || a.channels != 1 ||
      b.channels != 1)
    throw InvalidArgument(std::string(op) + ": fields must be matching 1-channel");
}

}  // namespace

double dice_loss(const SpatialField& pred, const SpatialField& target, double eps) {
  check_pair(pred, target, "dice_loss");
  double inter = 0.0, psum = 0.0, tsum = 0.0;
  for (size_t i = 0; i < pred.data.size(); ++i) {
    inter += pred.data[i] * target.data[i];
    psum += pred.data[i];
    tsum += target.data[i];
  }
  return 1.0 - (2.0 * inter + eps) / (psum + tsum + eps);
}

double bce_loss(const SpatialField& pred, const SpatialField& target) {
  check_pair(pred, target, "bce_loss");
  double acc = 0.0;
  for (size_t i = 0; i < pred.data.size(); ++i) {
    double p = std::clamp(pred.data[i], kProbClamp, 1.0 - kProbClamp);
    double t = target.data[i];
    acc -= t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
  }
  return acc / static_cast<double>(pred.data.size());
}

TensorPtr dice_loss_t(Tape& tape, const TensorPtr& pred, const SpatialField& target,
                      double eps) {
  target.validate();
  if (pred->numel() != static_cast<int64_t>(target.data.size()))
    throw InvalidArgument("dice_loss_t: size mismatch");
  double inter = 0.0, psum = 0.0, tsum = 0.0;
  for (int64_t i = 0; i < pred->numel(); ++i) {
    inter += pred->v[i] * target.data[i];
    psum += pred->v[i];
    tsum += target.data[i];
  }
  double denom = psum + tsum + eps;
  auto out = make_tensor({1}, pred->needs_grad);
  out->v[0] = 1.0 - (2.0 * inter + eps) / denom;
  if (out->needs_grad) {
    auto tgt = std::make_shared<std::vector<double>>(target.data);
    double numer = 2.0 * inter + eps;
    tape.record([pred, out, tgt, denom, numer] {
      double go = out->g[0];
      double inv2 = 1.0 / (denom * denom);
      for (int64_t i = 0; i < pred->numel(); ++i)
        pred->g[i] -= go * (2.0 * (*tgt)[i] * denom - numer) * inv2;
    });
  }
  return out;
}

TensorPtr bce_loss_t(Tape& tape, const TensorPtr& pred, const SpatialField& target) {
  target.validate();
  if (pred->numel() != static_cast<int64_t>(target.data.size()))
    throw InvalidArgument("bce_loss_t: size mismatch");
  int64_t n = pred->numel();
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    double p = std::clamp(pred->v[i], kProbClamp, 1.0 - kProbClamp);
    double t = target.data[i];
    acc -= t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
  }
  auto out = make_tensor({1}, pred->needs_grad);
  out->v[0] = acc / static_cast<double>(n);
  if (out->needs_grad) {
    auto tgt = std::make_shared<std::vector<double>>(target.data);
    tape.record([pred, out, tgt, n] {
      double go = out->g[0] / static_cast<double>(n);
      for (int64_t i = 0; i < n; ++i) {
        double raw = pred->v[i];
        if (raw <= kProbClamp || raw >= 1.0 - kProbClamp) continue;
        double t = (*tgt)[i];
        pred->g[i] += go * (-t / raw + (1.0 - t) / (1.0 - raw));
      }
    });
  }
  return out;
}

double dice_score(const SpatialField& pred_probs, const SpatialField& target,
                  double threshold) {
  check_pair(pred_probs, target, "dice_score");
  int64_t inter = 0, psum = 0, tsum = 0;
  for (size_t i = 0; i < pred_probs.data.size(); ++i) {
    bool p = pred_probs.data[i] >= threshold;
    bool t = target.data[i] != 0.0;
    inter += p && t;
    psum += p;
    tsum += t;
  }
  if (psum + tsum == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(psum + tsum);
}

SpatialField rotate90(const SpatialField& field, int quarter_turns) {
  field.validate();
  if (field.height != field.width)
    throw InvalidArgument("rotate90: square fields only");
  int k = ((quarter_turns % 4) + 4) % 4;
  if (k == 0) return field;
  int s = field.height;
  SpatialField out(s, s, field.channels);
  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x) {
      int sy, sx;
      switch (k) {
        case 1: sy = s - 1 - x; sx = y; break;
        case 2: sy = s - 1 - y; sx = s - 1 - x; break;
        default: sy = x; sx = s - 1 - y; break;
      }
      for (int c = 0; c < field.channels; ++c)
        out.at(y, x, c) = field.at(sy, sx, c);
    }
  return out;
}

SpatialField affine_resample(const SpatialField& field, double shift_x,
                             double shift_y, double scl) {
  field.validate();
  int h = field.height, w = field.width;
  SpatialField out(h, w, field.channels);
  double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double sy = cy + (y - cy - shift_y) / scl;
      double sx = cx + (x - cx - shift_x) / scl;
      sy = std::clamp(sy, 0.0, static_cast<double>(h - 1));
      sx = std::clamp(sx, 0.0, static_cast<double>(w - 1));
      int y0 = std::min(static_cast<int>(sy), h - 2 >= 0 ? h - 2 : 0);
      int x0 = std::min(static_cast<int>(sx), w - 2 >= 0 ? w - 2 : 0);
      double fy = sy - y0, fx = sx - x0;
      int y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
      for (int c = 0; c < field.channels; ++c) {
        double v = (1 - fy) * ((1 - fx) * field.at(y0, x0, c) + fx * field.at(y0, x1, c)) +
                   fy * ((1 - fx) * field.at(y1, x0, c) + fx * field.at(y1, x1, c));
        out.at(y, x, c) = v;
      }
    }
  return out;
}

std::pair<SpatialField, SpatialField> augment(const SpatialField& image,
                                              const SpatialField& mask,
                                              RngStream& rng, double prob) {
  image.validate();
  mask.validate();
  if (image.height != image.width || mask.height != mask.width)
    throw InvalidArgument("augment: square inputs only");
  if (rng.uniform() >= prob) return {image, mask};

  int k = static_cast<int>(rng.uniform_index(4));
  double shift_x = rng.uniform(-0.1, 0.1) * image.width;
  double shift_y = rng.uniform(-0.1, 0.1) * image.height;
  double scl = 1.0 + rng.uniform(-0.1, 0.1);

  SpatialField img = affine_resample(rotate90(image, k), shift_x, shift_y, scl);
  SpatialField msk = affine_resample(rotate90(mask, k), shift_x, shift_y, scl);
  for (double& v : msk.data) v = v >= 0.5 ? 1.0 : 0.0;
  return {img, msk};
}

SpatialField resize_nearest(const SpatialField& field, int out_h, int out_w) {
  field.validate();
  if (out_h < 1 || out_w < 1) throw InvalidArgument("resize_nearest: bad dims");
  SpatialField out(out_h, out_w, field.channels);
  for (int y = 0; y < out_h; ++y) {
    int sy = std::min(static_cast<int>((y + 0.5) * field.height / out_h),
                      field.height - 1);
    for (int x = 0; x < out_w; ++x) {
      int sx = std::min(static_cast<int>((x + 0.5) * field.width / out_w),
                        field.width - 1);
      for (int c = 0; c < field.channels; ++c) out.at(y, x, c) = field.at(sy, sx, c);
    }
  }
  return out;
}

}  // namespace boltzseg
