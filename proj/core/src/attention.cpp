#include "boltzseg/attention.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "boltzseg/errors.hpp"
#include "boltzseg/nn.hpp"

namespace boltzseg {

namespace {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<Mat>;
using CMapM = Eigen::Map<const Mat>;
using MapV = Eigen::Map<Eigen::VectorXd>;
using CMapV = Eigen::Map<const Eigen::VectorXd>;

void check_mh_params(const MultiHeadParams& p, int d, const char* op) {
  for (const TensorPtr& w : {p.wq, p.wk, p.wv, p.wo})
    if (!w || w->rank() != 2 || w->rows() != d || w->cols() != d)
      throw ConfigError(std::string(op) + ": projection weights must be d x d");
  if (p.heads < 1 || d % p.heads != 0)
    throw ConfigError(std::string(op) + ": d must be divisible by heads");
}

}  // namespace

TensorPtr self_attention_rows(Tape& tape, const TensorPtr& x,
                              const MultiHeadParams& params) {
  if (x->rank() != 2) throw ConfigError("self_attention_rows: x must be rank 2");
  int n = x->rows(), d = x->cols();
  check_mh_params(params, d, "self_attention_rows");
  int h = params.heads, dh = d / h;
  double inv_scale = params.inv_scale;

  auto qp = std::make_shared<Mat>(n, d);
  auto kp = std::make_shared<Mat>(n, d);
  auto vp = std::make_shared<Mat>(n, d);
  auto probs = std::make_shared<std::vector<double>>(static_cast<size_t>(h) * n * n);
  auto pooled = std::make_shared<Mat>(n, d);

  CMapM xm = CMapM(x->v.data(), n, d);
  qp->noalias() = xm * CMapM(params.wq->v.data(), d, d).transpose();
  kp->noalias() = xm * CMapM(params.wk->v.data(), d, d).transpose();
  vp->noalias() = xm * CMapM(params.wv->v.data(), d, d).transpose();
  // Rows are few; raw loops beat gemm dispatch for the per-head parts.
  for (int j = 0; j < h; ++j) {
    double* p = probs->data() + static_cast<size_t>(j) * n * n;
    for (int r = 0; r < n; ++r) {
      const double* qr = qp->data() + static_cast<int64_t>(r) * d + j * dh;
      double* pr = p + static_cast<int64_t>(r) * n;
      double mx = -std::numeric_limits<double>::infinity();
      for (int c = 0; c < n; ++c) {
        const double* kc = kp->data() + static_cast<int64_t>(c) * d + j * dh;
        double s = 0.0;
        for (int t = 0; t < dh; ++t) s += qr[t] * kc[t];
        pr[c] = s * inv_scale;
        mx = std::max(mx, pr[c]);
      }
      double z = 0.0;
      for (int c = 0; c < n; ++c) {
        pr[c] = std::exp(pr[c] - mx);
        z += pr[c];
      }
      double* orow = pooled->data() + static_cast<int64_t>(r) * d + j * dh;
      for (int t = 0; t < dh; ++t) orow[t] = 0.0;
      for (int c = 0; c < n; ++c) {
        pr[c] /= z;
        const double* vc = vp->data() + static_cast<int64_t>(c) * d + j * dh;
        for (int t = 0; t < dh; ++t) orow[t] += pr[c] * vc[t];
      }
    }
  }

  bool ng = x->needs_grad || params.wq->needs_grad || params.wk->needs_grad ||
            params.wv->needs_grad || params.wo->needs_grad;
  auto out = make_tensor({n, d}, ng);
  MapM(out->v.data(), n, d).noalias() =
      *pooled * CMapM(params.wo->v.data(), d, d).transpose();

  if (ng) {
    auto wq = params.wq, wk = params.wk, wv = params.wv, wo = params.wo;
    tape.record([x, wq, wk, wv, wo, out, qp, kp, vp, probs, pooled, n, d, h, dh,
                 inv_scale] {
      CMapM go(out->g.data(), n, d);
      Mat dpooled = go * CMapM(wo->v.data(), d, d);
      if (wo->needs_grad)
        MapM(wo->g.data(), d, d).noalias() += go.transpose() * *pooled;

      Mat dqp = Mat::Zero(n, d), dkp = Mat::Zero(n, d), dvp = Mat::Zero(n, d);
      for (int j = 0; j < h; ++j) {
        const double* p = probs->data() + static_cast<size_t>(j) * n * n;
        for (int r = 0; r < n; ++r) {
          const double* pr = p + static_cast<int64_t>(r) * n;
          const double* dor = dpooled.data() + static_cast<int64_t>(r) * d + j * dh;
          // dalpha and the softmax pullback for this row.
          double dot_pa = 0.0;
          std::vector<double> dalpha(n);
          for (int c = 0; c < n; ++c) {
            const double* vc = vp->data() + static_cast<int64_t>(c) * d + j * dh;
            double acc = 0.0;
            for (int t = 0; t < dh; ++t) {
              acc += dor[t] * vc[t];
              dvp(c, j * dh + t) += pr[c] * dor[t];
            }
            dalpha[c] = acc;
            dot_pa += pr[c] * acc;
          }
          double* dqr = dqp.data() + static_cast<int64_t>(r) * d + j * dh;
          const double* qr = qp->data() + static_cast<int64_t>(r) * d + j * dh;
          for (int c = 0; c < n; ++c) {
            double ds = pr[c] * (dalpha[c] - dot_pa) * inv_scale;
            const double* kc = kp->data() + static_cast<int64_t>(c) * d + j * dh;
            double* dkc = dkp.data() + static_cast<int64_t>(c) * d + j * dh;
            for (int t = 0; t < dh; ++t) {
              dqr[t] += ds * kc[t];
              dkc[t] += ds * qr[t];
            }
          }
        }
      }
      CMapM xm(x->v.data(), n, d);
      if (x->needs_grad) {
        MapM gx(x->g.data(), n, d);
        gx.noalias() += dqp * CMapM(wq->v.data(), d, d);
        gx.noalias() += dkp * CMapM(wk->v.data(), d, d);
        gx.noalias() += dvp * CMapM(wv->v.data(), d, d);
      }
      if (wq->needs_grad)
        MapM(wq->g.data(), d, d).noalias() += dqp.transpose() * xm;
      if (wk->needs_grad)
        MapM(wk->g.data(), d, d).noalias() += dkp.transpose() * xm;
      if (wv->needs_grad)
        MapM(wv->g.data(), d, d).noalias() += dvp.transpose() * xm;
    });
  }
  return out;
}

TensorPtr cross_attention_pooled(Tape& tape, const TensorPtr& q,
                                 const TensorPtr& keys, const TensorPtr& values,
                                 const std::vector<int>& rows,
                                 const TensorPtr& wq, const TensorPtr& wo,
                                 int heads, double inv_scale) {
  if (q->rank() != 1) throw ConfigError("cross_attention_pooled: q must be rank 1");
  int d = q->dim(0);
  if (keys->rank() != 2 || keys->cols() != d || values->shape != keys->shape)
    throw ConfigError("cross_attention_pooled: key/value shapes mismatch");
  if (wq->rank() != 2 || wq->rows() != d || wq->cols() != d || wo->rank() != 2 ||
      wo->rows() != d || wo->cols() != d)
    throw ConfigError("cross_attention_pooled: wq/wo must be d x d");
  if (heads < 1 || d % heads != 0)
    throw ConfigError("cross_attention_pooled: d must be divisible by heads");
  if (rows.empty())
    throw EmptyAttentionSet("cross_attention_pooled: empty attention set");
  int s = static_cast<int>(rows.size());
  for (int r : rows)
    if (r < 0 || r >= keys->rows())
      throw InvalidArgument("cross_attention_pooled: row index out of range");
  int dh = d / heads;

  auto qp = std::make_shared<Eigen::VectorXd>(d);
  auto alpha = std::make_shared<Mat>(heads, s);
  auto hvec = std::make_shared<Eigen::VectorXd>(d);
  auto idx = std::make_shared<std::vector<int>>(rows);

  qp->noalias() = CMapM(wq->v.data(), d, d) * CMapV(q->v.data(), d);
  for (int j = 0; j < heads; ++j) {
    Eigen::VectorXd scores(s);
    for (int c = 0; c < s; ++c) {
      const double* krow = keys->v.data() + static_cast<int64_t>(rows[c]) * d + j * dh;
      double dot = 0.0;
      const double* qj = qp->data() + j * dh;
      for (int t = 0; t < dh; ++t) dot += qj[t] * krow[t];
      scores[c] = dot * inv_scale;
    }
    double mx = scores.maxCoeff();
    Eigen::VectorXd e = (scores.array() - mx).exp();
    e /= e.sum();
    alpha->row(j) = e.transpose();
    double* hj = hvec->data() + j * dh;
    for (int t = 0; t < dh; ++t) hj[t] = 0.0;
    for (int c = 0; c < s; ++c) {
      const double* vrow = values->v.data() + static_cast<int64_t>(rows[c]) * d + j * dh;
      double a = e[c];
      for (int t = 0; t < dh; ++t) hj[t] += a * vrow[t];
    }
  }

  bool ng = q->needs_grad || keys->needs_grad || values->needs_grad ||
            wq->needs_grad || wo->needs_grad;
  auto out = make_tensor({d}, ng);
  MapV ov(out->v.data(), d);
  ov.noalias() = CMapM(wo->v.data(), d, d) * *hvec;
  ov += CMapV(q->v.data(), d);

  if (ng)
    tape.record([q, keys, values, wq, wo, out, qp, alpha, hvec, idx, d, heads, dh,
                 inv_scale, s] {
      CMapV go(out->g.data(), d);
      if (q->needs_grad) MapV(q->g.data(), d) += go;
      if (wo->needs_grad)
        MapM(wo->g.data(), d, d).noalias() += go * hvec->transpose();
      Eigen::VectorXd dh_vec = CMapM(wo->v.data(), d, d).transpose() * go;

      Eigen::VectorXd dqp = Eigen::VectorXd::Zero(d);
      for (int j = 0; j < heads; ++j) {
        const double* dhj = dh_vec.data() + j * dh;
        Eigen::VectorXd dalpha(s);
        for (int c = 0; c < s; ++c) {
          const double* vrow =
              values->v.data() + static_cast<int64_t>((*idx)[c]) * d + j * dh;
          double dot = 0.0;
          for (int t = 0; t < dh; ++t) dot += dhj[t] * vrow[t];
          dalpha[c] = dot;
          if (values->needs_grad) {
            double* gv = values->g.data() + static_cast<int64_t>((*idx)[c]) * d + j * dh;
            double a = (*alpha)(j, c);
            for (int t = 0; t < dh; ++t) gv[t] += a * dhj[t];
          }
        }
        double dot_pa = alpha->row(j).dot(dalpha.transpose());
        for (int c = 0; c < s; ++c) {
          double dscore = (*alpha)(j, c) * (dalpha[c] - dot_pa) * inv_scale;
          const double* krow =
              keys->v.data() + static_cast<int64_t>((*idx)[c]) * d + j * dh;
          double* dqpj = dqp.data() + j * dh;
          for (int t = 0; t < dh; ++t) dqpj[t] += dscore * krow[t];
          if (keys->needs_grad) {
            double* gk = keys->g.data() + static_cast<int64_t>((*idx)[c]) * d + j * dh;
            const double* qj = qp->data() + j * dh;
            for (int t = 0; t < dh; ++t) gk[t] += dscore * qj[t];
          }
        }
      }
      if (q->needs_grad)
        MapV(q->g.data(), d).noalias() += CMapM(wq->v.data(), d, d).transpose() * dqp;
      if (wq->needs_grad)
        MapM(wq->g.data(), d, d).noalias() += dqp * CMapV(q->v.data(), d).transpose();
    });
  return out;
}

TensorPtr masked_cross_attention(Tape& tape, const TensorPtr& q,
                                 const TensorPtr& level, const AttentionSet& set,
                                 const MultiHeadParams& params) {
  if (q->rank() != 1) throw ConfigError("masked_cross_attention: q must be rank 1");
  int d = q->dim(0);
  if (level->rank() != 3 || level->dim(2) != d)
    throw ConfigError("masked_cross_attention: level channels != d");
  if (set.indices.empty())
    throw EmptyAttentionSet("masked_cross_attention: empty attention set");
  if (set.level_height != level->dim(0) || set.level_width != level->dim(1))
    throw ConfigError("masked_cross_attention: set dims != level dims");
  check_mh_params(params, d, "masked_cross_attention");

  auto flat = reshape(tape, level, {level->dim(0) * level->dim(1), d});
  auto cells = gather_rows(tape, flat, set.indices);
  auto keys = linear_rows(tape, cells, params.wk, nullptr);
  auto values = linear_rows(tape, cells, params.wv, nullptr);
  std::vector<int> all(set.indices.size());
  for (size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  return cross_attention_pooled(tape, q, keys, values, all, params.wq, params.wo,
                                params.heads, params.inv_scale);
}

TensorPtr ensemble_layer_norm(Tape& tape, const TensorPtr& queries,
                              const TensorPtr& gain, const TensorPtr& bias) {
  return layer_norm_rows(tape, queries, gain, bias);
}

std::pair<TensorPtr, TensorPtr> joint_self_attention_block(
    Tape& tape, const TensorPtr& queries, const TensorPtr& text,
    const JointBlockParams& params, bool update_text) {
  int m = queries->rows();
  TensorPtr x = text && text->rows() > 0 ? concat_rows(tape, queries, text) : queries;
  TensorPtr attended = self_attention_rows(tape, x, params.attn);
  TensorPtr residual = add(tape, x, attended);
  TensorPtr normed = layer_norm_rows(tape, residual, params.ln_gain, params.ln_bias);
  TensorPtr q_rows = text && text->rows() > 0 ? slice_rows(tape, normed, 0, m) : normed;
  TensorPtr q_out = mlp2_rows(tape, params.ffn_w1, params.ffn_b1, params.ffn_w2,
                              params.ffn_b2, q_rows);
  TensorPtr t_out;
  if (text && text->rows() > 0)
    t_out = update_text ? slice_rows(tape, normed, m, x->rows()) : text;
  return {q_out, t_out};
}

}  // namespace boltzseg
