#include "boltzseg/grid.hpp"

#include <cmath>

#include "boltzseg/errors.hpp"

namespace boltzseg {

SpatialField::SpatialField(int h, int w, int c, double fill)
    : height(h), width(w), channels(c) {
  if (h < 1 || w < 1 || c < 1)
    throw InvalidArgument("SpatialField: dims must be >= 1");
  data.assign(static_cast<size_t>(h) * w * c, fill);
}

void SpatialField::validate() const {
  if (height < 1 || width < 1 || channels < 1)
    throw InvalidArgument("SpatialField: dims must be >= 1");
  if (data.size() != static_cast<size_t>(height) * width * channels)
    throw InvalidArgument("SpatialField: data length != h*w*c");
}

void FeaturePyramid::validate() const {
  if (levels.empty()) throw InvalidArgument("FeaturePyramid: no levels");
  semantic.validate();
  int d = semantic.channels;
  int prev_stride = 0;
  for (size_t i = 0; i < levels.size(); ++i) {
    levels[i].field.validate();
    if (levels[i].field.channels != d)
      throw InvalidArgument("FeaturePyramid: level channel count != semantic d");
    if (i > 0 && levels[i].stride >= prev_stride)
      throw InvalidArgument("FeaturePyramid: strides must strictly decrease coarse->fine");
    prev_stride = levels[i].stride;
  }
}

double resample_coord(int out_index, int out_size, int in_size) {
  if (out_size == 1) return 0.5 * (in_size - 1);
  return static_cast<double>(out_index) * (in_size - 1) / (out_size - 1);
}

SpatialField bilinear_resample(const SpatialField& field, int out_height, int out_width) {
  field.validate();
  if (out_height < 1 || out_width < 1)
    throw InvalidArgument("bilinear_resample: output dims must be >= 1");

  const int C = field.channels;
  SpatialField out(out_height, out_width, C);
  for (int oy = 0; oy < out_height; ++oy) {
    double sy = resample_coord(oy, out_height, field.height);
    int y0 = static_cast<int>(std::floor(sy));
    if (y0 > field.height - 2) y0 = field.height - 2;
    if (y0 < 0) y0 = 0;
    double fy = field.height == 1 ? 0.0 : sy - y0;
    int y1 = field.height == 1 ? 0 : y0 + 1;
    for (int ox = 0; ox < out_width; ++ox) {
      double sx = resample_coord(ox, out_width, field.width);
      int x0 = static_cast<int>(std::floor(sx));
      if (x0 > field.width - 2) x0 = field.width - 2;
      if (x0 < 0) x0 = 0;
      double fx = field.width == 1 ? 0.0 : sx - x0;
      int x1 = field.width == 1 ? 0 : x0 + 1;
      for (int c = 0; c < C; ++c) {
        double v00 = field.at(y0, x0, c);
        double v01 = field.at(y0, x1, c);
        double v10 = field.at(y1, x0, c);
        double v11 = field.at(y1, x1, c);
        out.at(oy, ox, c) = (1 - fy) * ((1 - fx) * v00 + fx * v01) +
                            fy * ((1 - fx) * v10 + fx * v11);
      }
    }
  }
  return out;
}

SpatialField renormalize_probability(const SpatialField& field) {
  field.validate();
  if (field.channels != 1)
    throw InvalidArgument("renormalize_probability: field must be 1-channel");
  double sum = 0.0;
  for (double v : field.data) {
    if (v < 0.0)
      throw InvalidArgument("renormalize_probability: negative value");
    sum += v;
  }
  if (sum <= 0.0)
    throw DegenerateDistribution("renormalize_probability: all-zero field");
  SpatialField out = field;
  for (double& v : out.data) v /= sum;
  return out;
}

}  // namespace boltzseg
