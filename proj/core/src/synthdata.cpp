#include "boltzseg/synthdata.hpp"

#include <algorithm>
#include <cmath>

#include "boltzseg/errors.hpp"
#include "boltzseg/nn.hpp"
#include "boltzseg/rng.hpp"

namespace boltzseg {

namespace {

constexpr double kBackground = 0.10;
constexpr double kDistractorAreaMin = 0.002;
constexpr double kDistractorAreaMax = 0.05;
constexpr double kMaxTargetOverlap = 0.30;

struct Shape {
  bool ellipse = true;
  double cx = 0, cy = 0;   // center, pixel units
  double ax = 1, ay = 1;   // semi-axes (ellipse) or half side lengths (rect)
  double angle = 0;

  bool contains(double px, double py) const {
    double dx = px - cx, dy = py - cy;
    double ca = std::cos(angle), sa = std::sin(angle);
    double u = ca * dx + sa * dy;
    double v = -sa * dx + ca * dy;
    if (ellipse) return (u * u) / (ax * ax) + (v * v) / (ay * ay) <= 1.0;
    return std::fabs(u) <= ax && std::fabs(v) <= ay;
  }
};

double class_intensity(int cls, int classes) {
  int level = cls / 2;
  int n_levels = (classes + 1) / 2;
  if (n_levels <= 1) return 0.9;
  return 0.4 + 0.5 * static_cast<double>(level) / (n_levels - 1);
}

bool class_is_ellipse(int cls) { return cls % 2 == 0; }

// Rasterizes by pixel-center inclusion; returns painted pixel count.
int rasterize(const Shape& s, int size, std::vector<char>& mask) {
  mask.assign(static_cast<size_t>(size) * size, 0);
  int count = 0;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      if (s.contains(x + 0.5, y + 0.5)) {
        mask[static_cast<size_t>(y) * size + x] = 1;
        ++count;
      }
  return count;
}

Shape sample_shape(RngStream& rng, int size, bool ellipse, double area_px) {
  Shape s;
  s.ellipse = ellipse;
  double aspect = std::exp(rng.uniform(std::log(0.5), std::log(2.0)));
  if (ellipse) {
    double b = std::sqrt(area_px / (M_PI * aspect));
    s.ax = aspect * b;
    s.ay = b;
  } else {
    double h = std::sqrt(area_px / aspect);
    s.ax = 0.5 * aspect * h;
    s.ay = 0.5 * h;
  }
  s.angle = rng.uniform(0.0, M_PI);
  double extent = s.ellipse ? std::max(s.ax, s.ay) : std::hypot(s.ax, s.ay);
  double margin = std::min(extent, size / 2.0 - 1.0);
  s.cx = rng.uniform(margin, size - margin);
  s.cy = rng.uniform(margin, size - margin);
  return s;
}

// Scales a shape in place until the rasterized area lands within +-20% of the
// request; pixel quantization makes this unreachable below a few pixels.
int fit_area(Shape& s, int size, double area_px, std::vector<char>& mask) {
  int achieved = rasterize(s, size, mask);
  for (int iter = 0; iter < 6 && area_px >= 3.0; ++iter) {
    if (achieved > 0 &&
        std::fabs(achieved / area_px - 1.0) <= 0.2)
      break;
    double f = std::sqrt(area_px / std::max(1.0, static_cast<double>(achieved)));
    f = std::clamp(f, 0.5, 2.0);
    s.ax *= f;
    s.ay *= f;
    achieved = rasterize(s, size, mask);
  }
  return achieved;
}

}  // namespace

void SceneConfig::validate() const {
  if (image_size < 8) throw ConfigError("data: image_size must be >= 8");
  if (!(area_min > 0.0 && area_max < 1.0 && area_min < area_max))
    throw ConfigError("data: area range must satisfy 0 < min < max < 1");
  if (max_distractors < 0) throw ConfigError("data: max_distractors must be >= 0");
  if (noise_sigma < 0.0) throw ConfigError("data: noise_sigma must be >= 0");
  if (classes < 1) throw ConfigError("data: classes must be >= 1");
}

Example generate_example(const SceneConfig& cfg, uint32_t index) {
  cfg.validate();
  const int size = cfg.image_size;
  const double total_px = static_cast<double>(size) * size;
  RngStream rng(cfg.seed, RngTag::kDataGen, index);

  Example ex;
  ex.prompt_id = static_cast<int>(rng.uniform_index(static_cast<uint32_t>(cfg.classes)));
  ex.image = SpatialField(size, size, 1, kBackground);
  ex.target_mask = SpatialField(size, size, 1, 0.0);

  double ratio = std::exp(rng.uniform(std::log(cfg.area_min), std::log(cfg.area_max)));
  double area_px = ratio * total_px;
  if (area_px < 1.0) {
    area_px = 1.0;
    ex.area_floored = true;
  }

  Shape target = sample_shape(rng, size, class_is_ellipse(ex.prompt_id), area_px);
  std::vector<char> tmask;
  int tcount = fit_area(target, size, area_px, tmask);
  if (tcount == 0) {
    // Sub-pixel shape: paint the pixel under the center.
    int x = std::clamp(static_cast<int>(target.cx), 0, size - 1);
    int y = std::clamp(static_cast<int>(target.cy), 0, size - 1);
    tmask[static_cast<size_t>(y) * size + x] = 1;
    tcount = 1;
  }

  // Distractors from other classes, capped at 30% overlap with the target.
  int n_distractors =
      cfg.max_distractors > 0
          ? static_cast<int>(rng.uniform_index(static_cast<uint32_t>(cfg.max_distractors + 1)))
          : 0;
  std::vector<char> dmask;
  for (int k = 0; k < n_distractors && cfg.classes > 1; ++k) {
    int dcls = static_cast<int>(rng.uniform_index(static_cast<uint32_t>(cfg.classes - 1)));
    if (dcls >= ex.prompt_id) ++dcls;
    double intensity = class_intensity(dcls, cfg.classes);
    for (int attempt = 0; attempt < 10; ++attempt) {
      double dratio = std::exp(
          rng.uniform(std::log(kDistractorAreaMin), std::log(kDistractorAreaMax)));
      Shape ds = sample_shape(rng, size, class_is_ellipse(dcls), dratio * total_px);
      int dcount = rasterize(ds, size, dmask);
      if (dcount == 0) continue;
      int overlap = 0;
      for (size_t p = 0; p < dmask.size(); ++p)
        if (dmask[p] && tmask[p]) ++overlap;
      if (overlap > kMaxTargetOverlap * tcount) continue;
      for (size_t p = 0; p < dmask.size(); ++p)
        if (dmask[p]) ex.image.data[p] = intensity;
      break;
    }
  }

  // Target painted last: never occluded.
  double target_intensity = class_intensity(ex.prompt_id, cfg.classes);
  for (size_t p = 0; p < tmask.size(); ++p)
    if (tmask[p]) {
      ex.image.data[p] = target_intensity;
      ex.target_mask.data[p] = 1.0;
    }

  if (cfg.noise_sigma > 0.0)
    for (double& v : ex.image.data) v += cfg.noise_sigma * rng.normal();

  ex.area_ratio = tcount / total_px;
  return ex;
}

std::vector<Example> generate(const SceneConfig& cfg, uint32_t first_index, int count) {
  if (count < 1) throw InvalidArgument("generate: count must be >= 1");
  std::vector<Example> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i)
    out.push_back(generate_example(cfg, first_index + static_cast<uint32_t>(i)));
  return out;
}

void declare_prompt_params(ParamStore& store, int classes, int tokens_per_class,
                           int feature_dim) {
  if (classes < 1 || tokens_per_class < 1)
    throw ConfigError("prompt: classes and tokens_per_class must be >= 1");
  store.declare("prompt.table", {classes, tokens_per_class * feature_dim},
                Init::kUniformFanIn, feature_dim);
}

TextSequence prompt_embedding(Tape& tape, const ParamStore& store, int prompt_id,
                              int classes, int tokens_per_class, int feature_dim) {
  if (prompt_id < 0 || prompt_id >= classes)
    throw InvalidArgument("prompt_embedding: unknown prompt id");
  auto table = store.get("prompt.table");
  if (table->rows() != classes || table->cols() != tokens_per_class * feature_dim)
    throw ConfigError("prompt_embedding: table shape mismatch");
  auto row = slice_rows(tape, table, prompt_id, prompt_id + 1);
  TextSequence seq;
  seq.embeddings = reshape(tape, row, {tokens_per_class, feature_dim});
  seq.tokens = tokens_per_class;
  return seq;
}

}  // namespace boltzseg
