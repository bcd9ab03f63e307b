#include "boltzseg/decoder.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "boltzseg/errors.hpp"
#include "boltzseg/nn.hpp"

namespace boltzseg {

void DecoderConfig::validate() const {
  if (layers < 1) throw ConfigError("decoder: layers must be >= 1");
  if (queries < 1) throw ConfigError("decoder: queries must be >= 1");
  if (feature_dim < 2) throw ConfigError("decoder: feature_dim must be >= 2");
  if (heads < 1 || feature_dim % heads != 0)
    throw ConfigError("decoder: heads must divide feature_dim");
  sampler.validate();
  if (!schedule.empty() && static_cast<int>(schedule.size()) != layers)
    throw ConfigError("decoder: schedule length must equal layers");
}

std::vector<int> DecoderConfig::resolved_schedule(int n_levels) const {
  std::vector<int> out;
  if (!schedule.empty()) {
    for (int idx : schedule)
      if (idx < 0 || idx >= n_levels)
        throw ConfigError("decoder: schedule level index out of range");
    return schedule;
  }
  out.reserve(layers);
  for (int l = 0; l < layers; ++l) out.push_back(l % n_levels);
  return out;
}

double DecoderConfig::inv_scale() const {
  return score_scale == ScoreScale::kDim
             ? 1.0 / feature_dim
             : 1.0 / std::sqrt(static_cast<double>(feature_dim));
}

int64_t SamplingTrace::total_attended_pairs() const {
  int64_t n = 0;
  for (const auto& e : entries) n += e.attended_pairs;
  return n;
}

std::vector<int64_t> SamplingTrace::attended_pairs_per_layer(int layers) const {
  std::vector<int64_t> out(layers, 0);
  for (const auto& e : entries) out[e.layer] += e.attended_pairs;
  return out;
}

namespace {

struct MlpHandles {
  TensorPtr w1, b1, w2, b2;
};

MlpHandles mask_mlp(const ParamStore& store) {
  return {store.get("dec.mask_mlp.w1"), store.get("dec.mask_mlp.b1"),
          store.get("dec.mask_mlp.w2"), store.get("dec.mask_mlp.b2")};
}

MultiHeadParams attn_params(const ParamStore& store, const std::string& prefix,
                            int heads, double inv_scale) {
  return {store.get(prefix + ".wq"), store.get(prefix + ".wk"),
          store.get(prefix + ".wv"), store.get(prefix + ".wo"), heads, inv_scale};
}

JointBlockParams joint_params(const ParamStore& store, const std::string& prefix,
                              int heads, double inv_scale) {
  JointBlockParams p;
  p.attn = attn_params(store, prefix + ".attn", heads, inv_scale);
  p.ln_gain = store.get(prefix + ".ln.g");
  p.ln_bias = store.get(prefix + ".ln.b");
  p.ffn_w1 = store.get(prefix + ".ffn.w1");
  p.ffn_b1 = store.get(prefix + ".ffn.b1");
  p.ffn_w2 = store.get(prefix + ".ffn.w2");
  p.ffn_b2 = store.get(prefix + ".ffn.b2");
  return p;
}

void declare_attn(ParamStore& store, const std::string& prefix, int d) {
  for (const char* n : {".wq", ".wk", ".wv", ".wo"})
    store.declare(prefix + n, {d, d}, Init::kUniformFanIn, d);
}

void declare_joint(ParamStore& store, const std::string& prefix, int d, int hidden) {
  declare_attn(store, prefix + ".attn", d);
  store.declare(prefix + ".ln.g", {d}, Init::kOne);
  store.declare(prefix + ".ln.b", {d}, Init::kZero);
  store.declare(prefix + ".ffn.w1", {hidden, d}, Init::kUniformFanIn, d);
  store.declare(prefix + ".ffn.b1", {hidden}, Init::kZero);
  store.declare(prefix + ".ffn.w2", {d, hidden}, Init::kUniformFanIn, hidden);
  store.declare(prefix + ".ffn.b2", {d}, Init::kZero);
}

// Plain (off-tape) shared-MLP application for the sampling path; gradients
// never flow through set selection.
void mlp_apply_plain(const MlpHandles& h, const double* q, int d, int hidden,
                     std::vector<double>& mu) {
  using RM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::VectorXd mid = Eigen::Map<const RM>(h.w1->v.data(), hidden, d) *
                            Eigen::Map<const Eigen::VectorXd>(q, d) +
                        Eigen::Map<const Eigen::VectorXd>(h.b1->v.data(), hidden);
  for (int i = 0; i < hidden; ++i) mid[i] = gelu_scalar(mid[i]);
  mu.resize(d);
  Eigen::Map<Eigen::VectorXd>(mu.data(), d).noalias() =
      Eigen::Map<const RM>(h.w2->v.data(), d, hidden) * mid +
      Eigen::Map<const Eigen::VectorXd>(h.b2->v.data(), d);
}

SpatialField logit_field_plain(const std::vector<double>& mu,
                               const SpatialField& semantic) {
  using RM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  SpatialField out(semantic.height, semantic.width, 1);
  int d = semantic.channels;
  Eigen::Map<Eigen::VectorXd>(out.data.data(), out.cells()).noalias() =
      Eigen::Map<const RM>(semantic.data.data(), semantic.cells(), d) *
      Eigen::Map<const Eigen::VectorXd>(mu.data(), d);
  return out;
}

SpatialField uniform_over_set(int h, int w, const std::vector<int>& idx) {
  SpatialField f(h, w, 1);
  double val = 1.0 / static_cast<double>(idx.size());
  for (int c : idx) f.data[c] = val;
  return f;
}

}  // namespace

void declare_decoder_params(ParamStore& store, const DecoderConfig& cfg) {
  cfg.validate();
  int d = cfg.feature_dim;
  int mlp_hidden = cfg.mlp_hidden > 0 ? cfg.mlp_hidden : 2 * d;
  int ffn_hidden = cfg.ffn_hidden > 0 ? cfg.ffn_hidden : 2 * d;

  store.declare("dec.query_init", {cfg.queries, d}, Init::kUniformFanIn, d);
  // One shared MLP (sampling confidence and final mask head use the same
  // parameter set).
  store.declare("dec.mask_mlp.w1", {mlp_hidden, d}, Init::kUniformFanIn, d);
  store.declare("dec.mask_mlp.b1", {mlp_hidden}, Init::kZero);
  store.declare("dec.mask_mlp.w2", {d, mlp_hidden}, Init::kUniformFanIn, mlp_hidden);
  store.declare("dec.mask_mlp.b2", {d}, Init::kZero);

  declare_joint(store, "dec.prior", d, ffn_hidden);
  for (int l = 0; l < cfg.layers; ++l) {
    std::string prefix = "dec.layer" + std::to_string(l);
    declare_attn(store, prefix + ".xattn", d);
    store.declare(prefix + ".xattn_ln.g", {d}, Init::kOne);
    store.declare(prefix + ".xattn_ln.b", {d}, Init::kZero);
    declare_joint(store, prefix + ".self", d, ffn_hidden);
  }
}

TensorPtr init_text_conditioned(Tape& tape, const ParamStore& store,
                                const DecoderConfig& cfg, const TensorPtr& text) {
  auto q0 = store.get("dec.query_init");
  auto prior = joint_params(store, "dec.prior", cfg.heads, cfg.inv_scale());
  auto [q, t] = joint_self_attention_block(tape, q0, text, prior, false);
  (void)t;  // Eq-4 output is the query prior only; layer 0 sees the raw text.
  return q;
}

TensorPtr per_query_mask(Tape& tape, const ParamStore& store,
                         const DecoderConfig& cfg, const TensorPtr& q,
                         const TensorPtr& semantic) {
  if (semantic->rank() != 3 || semantic->dim(2) != cfg.feature_dim)
    throw ConfigError("per_query_mask: semantic channels != feature_dim");
  auto h = mask_mlp(store);
  auto mu = mlp2(tape, h.w1, h.b1, h.w2, h.b2, q);
  int hs = semantic->dim(0), ws = semantic->dim(1);
  auto flat = reshape(tape, semantic, {hs * ws, cfg.feature_dim});
  auto logits = matvec(tape, flat, mu);
  return reshape(tape, logits, {hs, ws, 1});
}

DecoderResult decoder_forward(Tape& tape, const ParamStore& store,
                              const DecoderConfig& cfg, const EncodedImage& enc,
                              const TensorPtr& text, uint64_t seed,
                              uint32_t forward_id, bool record_fields) {
  cfg.validate();
  if (enc.levels.empty()) throw ConfigError("decoder_forward: empty pyramid");
  const int d = cfg.feature_dim;
  const int m = cfg.queries;
  const int mlp_hidden = cfg.mlp_hidden > 0 ? cfg.mlp_hidden : 2 * d;
  std::vector<int> schedule = cfg.resolved_schedule(static_cast<int>(enc.levels.size()));

  if (enc.semantic->rank() != 3 || enc.semantic->dim(2) != d)
    throw ConfigError("decoder_forward: semantic channels != feature_dim");
  SpatialField semantic_snap = field_from_tensor(*enc.semantic);
  MlpHandles mlp_h = mask_mlp(store);

  TensorPtr queries = init_text_conditioned(tape, store, cfg,
                                            cfg.text_prior ? text : nullptr);
  TensorPtr cur_text = text;

  DecoderResult result;
  result.trace.entries.reserve(static_cast<size_t>(cfg.layers) * m);

  // Flattened level views, shared across the repeats of the schedule.
  std::vector<TensorPtr> flat_levels(enc.levels.size());
  for (size_t i = 0; i < enc.levels.size(); ++i) {
    const TensorPtr& lv = enc.levels[i].second;
    flat_levels[i] = reshape(tape, lv, {lv->dim(0) * lv->dim(1), d});
  }

  for (int l = 0; l < cfg.layers; ++l) {
    const auto& [stride, level] = enc.levels[schedule[l]];
    (void)stride;
    int lh = level->dim(0), lw = level->dim(1);
    int cells = lh * lw;
    int n_trials = sample_count(cfg.sampler.sample_ratio, cells);
    double tau = temperature_at(cfg.sampler.tau0, l);

    // Stop-gradient sampling path: plain arrays, reading current values.
    std::vector<AttentionSet> sets(m);
    std::vector<double> mu(d);
    for (int i = 0; i < m; ++i) {
      TraceEntry entry;
      entry.layer = l;
      entry.query = i;
      entry.temperature = tau;
      switch (cfg.sampler.policy) {
        case SamplerPolicy::kBoltzmann: {
          mlp_apply_plain(mlp_h, queries->v.data() + static_cast<int64_t>(i) * d, d,
                          mlp_hidden, mu);
          SpatialField conf = confidence_map(mu, semantic_snap);
          BoltzmannField sem_field = boltzmann_distribution(conf, tau);
          BoltzmannField lvl_field;
          lvl_field.temperature = tau;
          if (sem_field.probabilities.height == lh &&
              sem_field.probabilities.width == lw) {
            lvl_field.probabilities = sem_field.probabilities;
          } else {
            lvl_field.probabilities = renormalize_probability(
                bilinear_resample(sem_field.probabilities, lh, lw));
          }
          RngStream rng(seed, RngTag::kSampling, forward_id,
                        static_cast<uint32_t>(l), static_cast<uint32_t>(i));
          sets[i] = sample_attention_set(lvl_field, n_trials, rng);
          if (record_fields) entry.field = std::move(lvl_field);
          break;
        }
        case SamplerPolicy::kFull: {
          sets[i] = full_attention_set(lh, lw);
          if (record_fields) {
            entry.field.temperature = tau;
            entry.field.probabilities =
                SpatialField(lh, lw, 1, 1.0 / static_cast<double>(cells));
          }
          break;
        }
        case SamplerPolicy::kThreshold: {
          if (l == 0) {
            sets[i] = full_attention_set(lh, lw);
          } else {
            mlp_apply_plain(mlp_h, queries->v.data() + static_cast<int64_t>(i) * d,
                            d, mlp_hidden, mu);
            SpatialField logits = logit_field_plain(mu, semantic_snap);
            SpatialField lvl_logits =
                (logits.height == lh && logits.width == lw)
                    ? logits
                    : bilinear_resample(logits, lh, lw);
            sets[i] = baseline_attention_set(SamplerPolicy::kThreshold, &lvl_logits,
                                             lh, lw, cfg.sampler.threshold_value);
          }
          if (record_fields) {
            entry.field.temperature = tau;
            entry.field.probabilities = uniform_over_set(lh, lw, sets[i].indices);
          }
          break;
        }
      }
      entry.set = sets[i];
      entry.attended_pairs = sets[i].size();
      result.trace.entries.push_back(std::move(entry));
    }

    // Project keys/values once over the union of sampled cells.
    std::vector<int> uni;
    for (const auto& s : sets) uni.insert(uni.end(), s.indices.begin(), s.indices.end());
    std::sort(uni.begin(), uni.end());
    uni.erase(std::unique(uni.begin(), uni.end()), uni.end());

    auto flat = reshape(tape, level, {cells, d});
    auto union_rows = gather_rows(tape, flat, uni);
    std::string prefix = "dec.layer" + std::to_string(l);
    auto xattn = attn_params(store, prefix + ".xattn", cfg.heads, cfg.inv_scale());
    auto keys = linear_rows(tape, union_rows, xattn.wk, nullptr);
    auto values = linear_rows(tape, union_rows, xattn.wv, nullptr);

    std::vector<TensorPtr> updated(m);
    for (int i = 0; i < m; ++i) {
      std::vector<int> rows(sets[i].indices.size());
      for (size_t c = 0; c < rows.size(); ++c) {
        auto it = std::lower_bound(uni.begin(), uni.end(), sets[i].indices[c]);
        rows[c] = static_cast<int>(it - uni.begin());
      }
      auto qi = row_vec(tape, queries, i);
      updated[i] = cross_attention_pooled(tape, qi, keys, values, rows, xattn.wq,
                                          xattn.wo, cfg.heads, cfg.inv_scale());
    }
    auto stacked = stack_rows(tape, updated);
    queries = ensemble_layer_norm(tape, stacked, store.get(prefix + ".xattn_ln.g"),
                                  store.get(prefix + ".xattn_ln.b"));

    auto self = joint_params(store, prefix + ".self", cfg.heads, cfg.inv_scale());
    auto [q_next, t_next] =
        joint_self_attention_block(tape, queries, cur_text, self, cfg.text_update);
    queries = q_next;
    if (cfg.text_update && t_next) cur_text = t_next;
  }

  result.final_queries = queries;
  result.mask_logits.reserve(m);
  for (int i = 0; i < m; ++i) {
    auto qi = row_vec(tape, queries, i);
    result.mask_logits.push_back(per_query_mask(tape, store, cfg, qi, enc.semantic));
  }
  return result;
}

}  // namespace boltzseg
