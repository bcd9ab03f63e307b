#pragma once

#include <utility>
#include <vector>

namespace boltzseg {

// Dense H x W x C array of doubles, row-major (y, x, c). The one spatial
// container used repo-wide: features, confidence maps, probability fields,
// mask logits.
struct SpatialField {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> data;

  SpatialField() = default;
  SpatialField(int h, int w, int c, double fill = 0.0);

  double& at(int y, int x, int c) { return data[(static_cast<size_t>(y) * width + x) * channels + c]; }
  double at(int y, int x, int c) const { return data[(static_cast<size_t>(y) * width + x) * channels + c]; }

  size_t size() const { return data.size(); }
  int cells() const { return height * width; }

  void validate() const;  // throws InvalidArgument on shape/data mismatch
};

// Ordered multiscale feature levels plus the semantic map at the finest
// decoder resolution. Levels are listed coarse -> fine (strides strictly
// decreasing), the order one repeat of the decoder loop walks them.
struct FeaturePyramid {
  struct Level {
    int stride = 0;
    SpatialField field;
  };
  std::vector<Level> levels;
  SpatialField semantic;

  void validate() const;
};

// Corner-aligned bilinear resampling: sample positions sit on cell corners so
// that out==in reproduces the field exactly and probability mass lines up
// across scales.
SpatialField bilinear_resample(const SpatialField& field, int out_height, int out_width);

// Scales a nonnegative 1-channel field so it sums to 1.
SpatialField renormalize_probability(const SpatialField& field);

// Source coordinate for corner-aligned sampling (out_size >= 1).
double resample_coord(int out_index, int out_size, int in_size);

}  // namespace boltzseg
