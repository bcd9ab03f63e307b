#include "boltzseg/nn.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "boltzseg/errors.hpp"

namespace boltzseg {

namespace {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<Mat>;
using CMapM = Eigen::Map<const Mat>;
using MapV = Eigen::Map<Eigen::VectorXd>;
using CMapV = Eigen::Map<const Eigen::VectorXd>;
using StrideM = Eigen::Map<Mat, 0, Eigen::OuterStride<>>;
using CStrideM = Eigen::Map<const Mat, 0, Eigen::OuterStride<>>;

MapM mat(TensorPtr& t, int r, int c) { return MapM(t->v.data(), r, c); }
CMapM cmat(const TensorPtr& t, int r, int c) { return CMapM(t->v.data(), r, c); }
MapM gmat(const TensorPtr& t, int r, int c) { return MapM(t->g.data(), r, c); }
CMapM cgmat(const TensorPtr& t, int r, int c) { return CMapM(t->g.data(), r, c); }

bool any_grad(std::initializer_list<TensorPtr> ts) {
  for (const auto& t : ts)
    if (t && t->needs_grad) return true;
  return false;
}

void check_same_shape(const TensorPtr& a, const TensorPtr& b, const char* op) {
  if (a->shape != b->shape) throw ConfigError(std::string(op) + ": shape mismatch");
}

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

}  // namespace

double gelu_scalar(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

TensorPtr add(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
  check_same_shape(a, b, "add");
  auto out = make_tensor(a->shape, any_grad({a, b}));
  for (int64_t i = 0; i < out->numel(); ++i) out->v[i] = a->v[i] + b->v[i];
  if (out->needs_grad)
    tape.record([a, b, out] {
      for (int64_t i = 0; i < out->numel(); ++i) {
        if (a->needs_grad) a->g[i] += out->g[i];
        if (b->needs_grad) b->g[i] += out->g[i];
      }
    });
  return out;
}

TensorPtr add_n(Tape& tape, const std::vector<TensorPtr>& xs) {
  if (xs.empty()) throw InvalidArgument("add_n: empty input list");
  bool ng = false;
  for (const auto& x : xs) {
    check_same_shape(xs[0], x, "add_n");
    ng = ng || x->needs_grad;
  }
  auto out = make_tensor(xs[0]->shape, ng);
  for (const auto& x : xs)
    for (int64_t i = 0; i < out->numel(); ++i) out->v[i] += x->v[i];
  if (ng)
    tape.record([xs, out] {
      for (const auto& x : xs)
        if (x->needs_grad)
          for (int64_t i = 0; i < out->numel(); ++i) x->g[i] += out->g[i];
    });
  return out;
}

TensorPtr scale(Tape& tape, const TensorPtr& x, double s) {
  auto out = make_tensor(x->shape, x->needs_grad);
  for (int64_t i = 0; i < out->numel(); ++i) out->v[i] = s * x->v[i];
  if (out->needs_grad)
    tape.record([x, out, s] {
      for (int64_t i = 0; i < out->numel(); ++i) x->g[i] += s * out->g[i];
    });
  return out;
}

TensorPtr gelu(Tape& tape, const TensorPtr& x) {
  auto out = make_tensor(x->shape, x->needs_grad);
  for (int64_t i = 0; i < out->numel(); ++i) out->v[i] = gelu_scalar(x->v[i]);
  if (out->needs_grad)
    tape.record([x, out] {
      for (int64_t i = 0; i < out->numel(); ++i) {
        double xi = x->v[i];
        double phi = 0.5 * (1.0 + std::erf(xi * kInvSqrt2));
        double pdf = kInvSqrt2Pi * std::exp(-0.5 * xi * xi);
        x->g[i] += out->g[i] * (phi + xi * pdf);
      }
    });
  return out;
}

TensorPtr sigmoid(Tape& tape, const TensorPtr& x) {
  auto out = make_tensor(x->shape, x->needs_grad);
  for (int64_t i = 0; i < out->numel(); ++i)
    out->v[i] = 1.0 / (1.0 + std::exp(-x->v[i]));
  if (out->needs_grad)
    tape.record([x, out] {
      for (int64_t i = 0; i < out->numel(); ++i) {
        double y = out->v[i];
        x->g[i] += out->g[i] * y * (1.0 - y);
      }
    });
  return out;
}

TensorPtr sum_all(Tape& tape, const TensorPtr& x) {
  auto out = make_tensor({1}, x->needs_grad);
  double s = 0.0;
  for (int64_t i = 0; i < x->numel(); ++i) s += x->v[i];
  out->v[0] = s;
  if (out->needs_grad)
    tape.record([x, out] {
      for (int64_t i = 0; i < x->numel(); ++i) x->g[i] += out->g[0];
    });
  return out;
}

TensorPtr matmul(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
  if (a->rank() != 2 || b->rank() != 2 || a->cols() != b->rows())
    throw ConfigError("matmul: incompatible shapes");
  int m = a->rows(), k = a->cols(), n = b->cols();
  auto out = make_tensor({m, n}, any_grad({a, b}));
  mat(out, m, n).noalias() = cmat(a, m, k) * cmat(b, k, n);
  if (out->needs_grad)
    tape.record([a, b, out, m, k, n] {
      if (a->needs_grad)
        gmat(a, m, k).noalias() += cgmat(out, m, n) * cmat(b, k, n).transpose();
      if (b->needs_grad)
        gmat(b, k, n).noalias() += cmat(a, m, k).transpose() * cgmat(out, m, n);
    });
  return out;
}

TensorPtr matvec(Tape& tape, const TensorPtr& a, const TensorPtr& x) {
  if (a->rank() != 2 || x->rank() != 1 || a->cols() != x->dim(0))
    throw ConfigError("matvec: incompatible shapes");
  int m = a->rows(), n = a->cols();
  auto out = make_tensor({m}, any_grad({a, x}));
  MapV(out->v.data(), m).noalias() = cmat(a, m, n) * CMapV(x->v.data(), n);
  if (out->needs_grad)
    tape.record([a, x, out, m, n] {
      CMapV go(out->g.data(), m);
      if (a->needs_grad)
        gmat(a, m, n).noalias() += go * CMapV(x->v.data(), n).transpose();
      if (x->needs_grad)
        MapV(x->g.data(), n).noalias() += cmat(a, m, n).transpose() * go;
    });
  return out;
}

TensorPtr linear_vec(Tape& tape, const TensorPtr& w, const TensorPtr& x,
                     const TensorPtr& b) {
  if (w->rank() != 2 || x->rank() != 1 || w->cols() != x->dim(0))
    throw ConfigError("linear_vec: incompatible shapes");
  if (b && (b->rank() != 1 || b->dim(0) != w->rows()))
    throw ConfigError("linear_vec: bias shape mismatch");
  int m = w->rows(), n = w->cols();
  auto out = make_tensor({m}, any_grad({w, x, b}));
  MapV ov(out->v.data(), m);
  ov.noalias() = cmat(w, m, n) * CMapV(x->v.data(), n);
  if (b) ov += CMapV(b->v.data(), m);
  if (out->needs_grad)
    tape.record([w, x, b, out, m, n] {
      CMapV go(out->g.data(), m);
      if (w->needs_grad)
        gmat(w, m, n).noalias() += go * CMapV(x->v.data(), n).transpose();
      if (x->needs_grad)
        MapV(x->g.data(), n).noalias() += cmat(w, m, n).transpose() * go;
      if (b && b->needs_grad) MapV(b->g.data(), m) += go;
    });
  return out;
}

TensorPtr linear_rows(Tape& tape, const TensorPtr& x, const TensorPtr& w,
                      const TensorPtr& b) {
  if (x->rank() != 2 || w->rank() != 2 || x->cols() != w->cols())
    throw ConfigError("linear_rows: incompatible shapes");
  if (b && (b->rank() != 1 || b->dim(0) != w->rows()))
    throw ConfigError("linear_rows: bias shape mismatch");
  int n = x->rows(), din = x->cols(), dout = w->rows();
  auto out = make_tensor({n, dout}, any_grad({x, w, b}));
  MapM om = mat(out, n, dout);
  om.noalias() = cmat(x, n, din) * cmat(w, dout, din).transpose();
  if (b) om.rowwise() += CMapV(b->v.data(), dout).transpose();
  if (out->needs_grad)
    tape.record([x, w, b, out, n, din, dout] {
      CMapM go = cgmat(out, n, dout);
      if (x->needs_grad)
        gmat(x, n, din).noalias() += go * cmat(w, dout, din);
      if (w->needs_grad)
        gmat(w, dout, din).noalias() += go.transpose() * cmat(x, n, din);
      if (b && b->needs_grad)
        MapV(b->g.data(), dout) += go.colwise().sum().transpose();
    });
  return out;
}

TensorPtr layer_norm_rows(Tape& tape, const TensorPtr& x, const TensorPtr& gain,
                          const TensorPtr& bias, double eps) {
  if (x->rank() != 2) throw ConfigError("layer_norm_rows: x must be rank 2");
  int n = x->rows(), d = x->cols();
  if (d < 2) throw ConfigError("layer_norm_rows: needs d >= 2");
  if (gain->numel() != d || bias->numel() != d)
    throw ConfigError("layer_norm_rows: gain/bias must have length d");

  auto out = make_tensor({n, d}, any_grad({x, gain, bias}));
  auto xhat = std::make_shared<std::vector<double>>(static_cast<size_t>(n) * d);
  auto inv_sigma = std::make_shared<std::vector<double>>(n);
  for (int r = 0; r < n; ++r) {
    const double* xr = x->v.data() + static_cast<size_t>(r) * d;
    double mu = 0.0;
    for (int i = 0; i < d; ++i) mu += xr[i];
    mu /= d;
    double var = 0.0;
    for (int i = 0; i < d; ++i) var += (xr[i] - mu) * (xr[i] - mu);
    var /= d;
    double is = 1.0 / std::sqrt(var + eps);
    (*inv_sigma)[r] = is;
    double* xh = xhat->data() + static_cast<size_t>(r) * d;
    double* yr = out->v.data() + static_cast<size_t>(r) * d;
    for (int i = 0; i < d; ++i) {
      xh[i] = (xr[i] - mu) * is;
      yr[i] = gain->v[i] * xh[i] + bias->v[i];
    }
  }
  if (out->needs_grad)
    tape.record([x, gain, bias, out, xhat, inv_sigma, n, d] {
      for (int r = 0; r < n; ++r) {
        const double* go = out->g.data() + static_cast<size_t>(r) * d;
        const double* xh = xhat->data() + static_cast<size_t>(r) * d;
        if (gain->needs_grad || bias->needs_grad) {
          for (int i = 0; i < d; ++i) {
            if (gain->needs_grad) gain->g[i] += go[i] * xh[i];
            if (bias->needs_grad) bias->g[i] += go[i];
          }
        }
        if (x->needs_grad) {
          double m1 = 0.0, m2 = 0.0;
          for (int i = 0; i < d; ++i) {
            double gy = go[i] * gain->v[i];
            m1 += gy;
            m2 += gy * xh[i];
          }
          m1 /= d;
          m2 /= d;
          double* gx = x->g.data() + static_cast<size_t>(r) * d;
          double is = (*inv_sigma)[r];
          for (int i = 0; i < d; ++i) {
            double gy = go[i] * gain->v[i];
            gx[i] += (gy - m1 - xh[i] * m2) * is;
          }
        }
      }
    });
  return out;
}

TensorPtr masked_softmax(Tape& tape, const TensorPtr& scores,
                         const std::vector<char>& mask) {
  if (scores->rank() != 1) throw ConfigError("masked_softmax: scores must be rank 1");
  int n = scores->dim(0);
  if (static_cast<int>(mask.size()) != n)
    throw ConfigError("masked_softmax: mask length mismatch");
  double mx = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i)
    if (mask[i]) mx = std::max(mx, scores->v[i]);
  if (!std::isfinite(mx)) throw EmptyAttentionSet("masked_softmax: all entries masked");

  auto out = make_tensor({n}, scores->needs_grad);
  double z = 0.0;
  for (int i = 0; i < n; ++i) {
    if (mask[i]) {
      out->v[i] = std::exp(scores->v[i] - mx);
      z += out->v[i];
    }
  }
  for (int i = 0; i < n; ++i)
    if (mask[i]) out->v[i] /= z;
  if (out->needs_grad) {
    auto m = std::make_shared<std::vector<char>>(mask);
    tape.record([scores, out, m, n] {
      double dot = 0.0;
      for (int i = 0; i < n; ++i)
        if ((*m)[i]) dot += out->v[i] * out->g[i];
      for (int i = 0; i < n; ++i)
        if ((*m)[i]) scores->g[i] += out->v[i] * (out->g[i] - dot);
    });
  }
  return out;
}

TensorPtr concat_rows(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
  if (a->rank() != 2 || b->rank() != 2 || a->cols() != b->cols())
    throw ConfigError("concat_rows: incompatible shapes");
  int na = a->rows(), nb = b->rows(), d = a->cols();
  auto out = make_tensor({na + nb, d}, any_grad({a, b}));
  std::copy(a->v.begin(), a->v.end(), out->v.begin());
  std::copy(b->v.begin(), b->v.end(), out->v.begin() + a->numel());
  if (out->needs_grad)
    tape.record([a, b, out, na, nb, d] {
      (void)nb;
      if (a->needs_grad)
        for (int64_t i = 0; i < a->numel(); ++i) a->g[i] += out->g[i];
      if (b->needs_grad) {
        int64_t off = static_cast<int64_t>(na) * d;
        for (int64_t i = 0; i < b->numel(); ++i) b->g[i] += out->g[off + i];
      }
    });
  return out;
}

TensorPtr slice_rows(Tape& tape, const TensorPtr& x, int row0, int row1) {
  if (x->rank() != 2 || row0 < 0 || row1 > x->rows() || row0 >= row1)
    throw ConfigError("slice_rows: bad range");
  int d = x->cols(), n = row1 - row0;
  auto out = make_tensor({n, d}, x->needs_grad);
  std::copy(x->v.begin() + static_cast<int64_t>(row0) * d,
            x->v.begin() + static_cast<int64_t>(row1) * d, out->v.begin());
  if (out->needs_grad)
    tape.record([x, out, row0, n, d] {
      int64_t off = static_cast<int64_t>(row0) * d;
      for (int64_t i = 0; i < static_cast<int64_t>(n) * d; ++i)
        x->g[off + i] += out->g[i];
    });
  return out;
}

TensorPtr row_vec(Tape& tape, const TensorPtr& x, int row) {
  if (x->rank() != 2 || row < 0 || row >= x->rows())
    throw ConfigError("row_vec: bad row");
  int d = x->cols();
  auto out = make_tensor({d}, x->needs_grad);
  std::copy(x->v.begin() + static_cast<int64_t>(row) * d,
            x->v.begin() + static_cast<int64_t>(row + 1) * d, out->v.begin());
  if (out->needs_grad)
    tape.record([x, out, row, d] {
      double* gx = x->g.data() + static_cast<int64_t>(row) * d;
      for (int i = 0; i < d; ++i) gx[i] += out->g[i];
    });
  return out;
}

TensorPtr stack_rows(Tape& tape, const std::vector<TensorPtr>& rows) {
  if (rows.empty()) throw InvalidArgument("stack_rows: empty list");
  int d = rows[0]->dim(0);
  bool ng = false;
  for (const auto& r : rows) {
    if (r->rank() != 1 || r->dim(0) != d)
      throw ConfigError("stack_rows: rows must be equal-length vectors");
    ng = ng || r->needs_grad;
  }
  int n = static_cast<int>(rows.size());
  auto out = make_tensor({n, d}, ng);
  for (int r = 0; r < n; ++r)
    std::copy(rows[r]->v.begin(), rows[r]->v.end(),
              out->v.begin() + static_cast<int64_t>(r) * d);
  if (ng)
    tape.record([rows, out, n, d] {
      for (int r = 0; r < n; ++r)
        if (rows[r]->needs_grad) {
          const double* go = out->g.data() + static_cast<int64_t>(r) * d;
          for (int i = 0; i < d; ++i) rows[r]->g[i] += go[i];
        }
    });
  return out;
}

TensorPtr gather_rows(Tape& tape, const TensorPtr& x, const std::vector<int>& idx) {
  if (x->rank() != 2) throw ConfigError("gather_rows: x must be rank 2");
  int d = x->cols();
  int n = static_cast<int>(idx.size());
  auto out = make_tensor({n, d}, x->needs_grad);
  for (int r = 0; r < n; ++r) {
    if (idx[r] < 0 || idx[r] >= x->rows()) throw InvalidArgument("gather_rows: index out of range");
    std::copy(x->v.begin() + static_cast<int64_t>(idx[r]) * d,
              x->v.begin() + static_cast<int64_t>(idx[r] + 1) * d,
              out->v.begin() + static_cast<int64_t>(r) * d);
  }
  if (out->needs_grad) {
    auto id = std::make_shared<std::vector<int>>(idx);
    tape.record([x, out, id, n, d] {
      for (int r = 0; r < n; ++r) {
        double* gx = x->g.data() + static_cast<int64_t>((*id)[r]) * d;
        const double* go = out->g.data() + static_cast<int64_t>(r) * d;
        for (int i = 0; i < d; ++i) gx[i] += go[i];
      }
    });
  }
  return out;
}

TensorPtr reshape(Tape& tape, const TensorPtr& x, std::vector<int> shape) {
  auto out = make_tensor(std::move(shape), x->needs_grad);
  if (out->numel() != x->numel()) throw ConfigError("reshape: element count mismatch");
  out->v = x->v;
  if (out->needs_grad)
    tape.record([x, out] {
      for (int64_t i = 0; i < x->numel(); ++i) x->g[i] += out->g[i];
    });
  return out;
}

TensorPtr stack_channels(Tape& tape, const std::vector<TensorPtr>& fields) {
  if (fields.empty()) throw InvalidArgument("stack_channels: empty list");
  int h = fields[0]->dim(0), w = fields[0]->dim(1);
  bool ng = false;
  for (const auto& f : fields) {
    if (f->rank() != 3 || f->dim(0) != h || f->dim(1) != w || f->dim(2) != 1)
      throw ConfigError("stack_channels: fields must be (h, w, 1) with equal dims");
    ng = ng || f->needs_grad;
  }
  int m = static_cast<int>(fields.size());
  auto out = make_tensor({h, w, m}, ng);
  for (int c = 0; c < m; ++c)
    for (int64_t p = 0; p < static_cast<int64_t>(h) * w; ++p)
      out->v[p * m + c] = fields[c]->v[p];
  if (ng)
    tape.record([fields, out, h, w, m] {
      for (int c = 0; c < m; ++c)
        if (fields[c]->needs_grad)
          for (int64_t p = 0; p < static_cast<int64_t>(h) * w; ++p)
            fields[c]->g[p] += out->g[p * m + c];
    });
  return out;
}

TensorPtr concat_channels(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
  if (a->rank() != 3 || b->rank() != 3 || a->dim(0) != b->dim(0) ||
      a->dim(1) != b->dim(1))
    throw ConfigError("concat_channels: spatial dims mismatch");
  int h = a->dim(0), w = a->dim(1), ca = a->dim(2), cb = b->dim(2);
  auto out = make_tensor({h, w, ca + cb}, any_grad({a, b}));
  int64_t pix = static_cast<int64_t>(h) * w;
  for (int64_t p = 0; p < pix; ++p) {
    for (int c = 0; c < ca; ++c) out->v[p * (ca + cb) + c] = a->v[p * ca + c];
    for (int c = 0; c < cb; ++c) out->v[p * (ca + cb) + ca + c] = b->v[p * cb + c];
  }
  if (out->needs_grad)
    tape.record([a, b, out, pix, ca, cb] {
      for (int64_t p = 0; p < pix; ++p) {
        if (a->needs_grad)
          for (int c = 0; c < ca; ++c) a->g[p * ca + c] += out->g[p * (ca + cb) + c];
        if (b->needs_grad)
          for (int c = 0; c < cb; ++c)
            b->g[p * cb + c] += out->g[p * (ca + cb) + ca + c];
      }
    });
  return out;
}

TensorPtr conv2d(Tape& tape, const TensorPtr& x, const TensorPtr& w,
                 const TensorPtr& b, int stride, int pad) {
  if (x->rank() != 3 || w->rank() != 4) throw ConfigError("conv2d: bad ranks");
  int h = x->dim(0), wd = x->dim(1), ci = x->dim(2);
  int kh = w->dim(0), kw = w->dim(1);
  if (w->dim(2) != ci) throw ConfigError("conv2d: channel mismatch");
  int co = w->dim(3);
  if (b && b->numel() != co) throw ConfigError("conv2d: bias mismatch");
  int oh = (h + 2 * pad - kh) / stride + 1;
  int ow = (wd + 2 * pad - kw) / stride + 1;
  if (oh < 1 || ow < 1) throw ConfigError("conv2d: empty output");

  int64_t npix = static_cast<int64_t>(oh) * ow;
  int k = kh * kw * ci;
  auto patches = std::make_shared<std::vector<double>>(npix * k, 0.0);
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      double* row = patches->data() + (static_cast<int64_t>(oy) * ow + ox) * k;
      for (int ky = 0; ky < kh; ++ky) {
        int iy = oy * stride - pad + ky;
        if (iy < 0 || iy >= h) continue;
        for (int kx = 0; kx < kw; ++kx) {
          int ix = ox * stride - pad + kx;
          if (ix < 0 || ix >= wd) continue;
          const double* src = x->v.data() + (static_cast<int64_t>(iy) * wd + ix) * ci;
          double* dst = row + (ky * kw + kx) * ci;
          for (int c = 0; c < ci; ++c) dst[c] = src[c];
        }
      }
    }
  }

  auto out = make_tensor({oh, ow, co}, any_grad({x, w, b}));
  {
    CMapM pm(patches->data(), npix, k);
    CMapM wm(w->v.data(), k, co);
    MapM om(out->v.data(), npix, co);
    om.noalias() = pm * wm;
    if (b) om.rowwise() += CMapV(b->v.data(), co).transpose();
  }
  if (out->needs_grad)
    tape.record([x, w, b, out, patches, npix, k, oh, ow, co, h, wd, ci, kh, kw,
                 stride, pad] {
      CMapM go(out->g.data(), npix, co);
      if (w->needs_grad) {
        CMapM pm(patches->data(), npix, k);
        MapM gw(w->g.data(), k, co);
        gw.noalias() += pm.transpose() * go;
      }
      if (b && b->needs_grad)
        MapV(b->g.data(), co) += go.colwise().sum().transpose();
      if (x->needs_grad) {
        Mat dp = go * CMapM(w->v.data(), k, co).transpose();  // npix x k
        for (int oy = 0; oy < oh; ++oy) {
          for (int ox = 0; ox < ow; ++ox) {
            const double* row = dp.data() + (static_cast<int64_t>(oy) * ow + ox) * k;
            for (int ky = 0; ky < kh; ++ky) {
              int iy = oy * stride - pad + ky;
              if (iy < 0 || iy >= h) continue;
              for (int kx = 0; kx < kw; ++kx) {
                int ix = ox * stride - pad + kx;
                if (ix < 0 || ix >= wd) continue;
                double* gx = x->g.data() + (static_cast<int64_t>(iy) * wd + ix) * ci;
                const double* src = row + (ky * kw + kx) * ci;
                for (int c = 0; c < ci; ++c) gx[c] += src[c];
              }
            }
          }
        }
      }
    });
  return out;
}

TensorPtr tconv2d_x2(Tape& tape, const TensorPtr& x, const TensorPtr& w,
                     const TensorPtr& b) {
  // kernel 4, stride 2, pad 1: out = 2 * in exactly.
  if (x->rank() != 3 || w->rank() != 4) throw ConfigError("tconv2d_x2: bad ranks");
  constexpr int kK = 4, kS = 2, kP = 1;
  int h = x->dim(0), wd = x->dim(1), ci = x->dim(2);
  if (w->dim(0) != kK || w->dim(1) != kK || w->dim(2) != ci)
    throw ConfigError("tconv2d_x2: weight shape must be (4, 4, ci, co)");
  int co = w->dim(3);
  if (b && b->numel() != co) throw ConfigError("tconv2d_x2: bias mismatch");
  int oh = kS * h, ow = kS * wd;

  auto out = make_tensor({oh, ow, co}, any_grad({x, w, b}));
  if (b) {
    MapM om(out->v.data(), static_cast<int64_t>(oh) * ow, co);
    om.rowwise() = CMapV(b->v.data(), co).transpose();
  }
  // For each kernel offset the valid input positions form a rectangle; each
  // row run maps to an output run with stride 2 on x.
  auto run_bounds = [](int k_off, int n) {
    int lo = k_off == 0 ? 1 : 0;
    int hi = k_off == 3 ? n - 1 : n;
    return std::pair<int, int>(lo, hi);
  };
  for (int ky = 0; ky < kK; ++ky) {
    auto [ylo, yhi] = run_bounds(ky, h);
    for (int kx = 0; kx < kK; ++kx) {
      auto [xlo, xhi] = run_bounds(kx, wd);
      int run = xhi - xlo;
      if (run <= 0) continue;
      CMapM wm(w->v.data() + (static_cast<int64_t>(ky) * kK + kx) * ci * co, ci, co);
      for (int iy = ylo; iy < yhi; ++iy) {
        int oy = kS * iy - kP + ky;
        int ox0 = kS * xlo - kP + kx;
        CMapM xr(x->v.data() + (static_cast<int64_t>(iy) * wd + xlo) * ci, run, ci);
        StrideM yr(out->v.data() + (static_cast<int64_t>(oy) * ow + ox0) * co, run,
                   co, Eigen::OuterStride<>(kS * co));
        yr.noalias() += xr * wm;
      }
    }
  }
  if (out->needs_grad)
    tape.record([x, w, b, out, h, wd, ci, co, ow, run_bounds] {
      if (b && b->needs_grad) {
        CMapM go(out->g.data(), static_cast<int64_t>(out->dim(0)) * out->dim(1), co);
        MapV(b->g.data(), co) += go.colwise().sum().transpose();
      }
      for (int ky = 0; ky < kK; ++ky) {
        auto [ylo, yhi] = run_bounds(ky, h);
        for (int kx = 0; kx < kK; ++kx) {
          auto [xlo, xhi] = run_bounds(kx, wd);
          int run = xhi - xlo;
          if (run <= 0) continue;
          int64_t woff = (static_cast<int64_t>(ky) * kK + kx) * ci * co;
          CMapM wm(w->v.data() + woff, ci, co);
          for (int iy = ylo; iy < yhi; ++iy) {
            int oy = kS * iy - kP + ky;
            int ox0 = kS * xlo - kP + kx;
            CStrideM gyr(out->g.data() + (static_cast<int64_t>(oy) * ow + ox0) * co,
                         run, co, Eigen::OuterStride<>(kS * co));
            if (x->needs_grad) {
              MapM gxr(x->g.data() + (static_cast<int64_t>(iy) * wd + xlo) * ci, run, ci);
              gxr.noalias() += gyr * wm.transpose();
            }
            if (w->needs_grad) {
              CMapM xr(x->v.data() + (static_cast<int64_t>(iy) * wd + xlo) * ci, run, ci);
              MapM gw(w->g.data() + woff, ci, co);
              gw.noalias() += xr.transpose() * gyr;
            }
          }
        }
      }
    });
  return out;
}

TensorPtr resample_bilinear(Tape& tape, const TensorPtr& x, int out_h, int out_w) {
  if (x->rank() != 3) throw ConfigError("resample_bilinear: x must be (h, w, c)");
  if (out_h < 1 || out_w < 1) throw InvalidArgument("resample_bilinear: output dims must be >= 1");
  int h = x->dim(0), wd = x->dim(1), c = x->dim(2);

  struct Tap {
    int idx[4];
    double wgt[4];
  };
  auto taps = std::make_shared<std::vector<Tap>>(static_cast<size_t>(out_h) * out_w);
  for (int oy = 0; oy < out_h; ++oy) {
    double sy = resample_coord(oy, out_h, h);
    int y0 = static_cast<int>(std::floor(sy));
    if (y0 > h - 2) y0 = h - 2;
    if (y0 < 0) y0 = 0;
    double fy = h == 1 ? 0.0 : sy - y0;
    int y1 = h == 1 ? 0 : y0 + 1;
    for (int ox = 0; ox < out_w; ++ox) {
      double sx = resample_coord(ox, out_w, wd);
      int x0 = static_cast<int>(std::floor(sx));
      if (x0 > wd - 2) x0 = wd - 2;
      if (x0 < 0) x0 = 0;
      double fx = wd == 1 ? 0.0 : sx - x0;
      int x1 = wd == 1 ? 0 : x0 + 1;
      Tap& t = (*taps)[static_cast<size_t>(oy) * out_w + ox];
      t.idx[0] = y0 * wd + x0;
      t.idx[1] = y0 * wd + x1;
      t.idx[2] = y1 * wd + x0;
      t.idx[3] = y1 * wd + x1;
      t.wgt[0] = (1 - fy) * (1 - fx);
      t.wgt[1] = (1 - fy) * fx;
      t.wgt[2] = fy * (1 - fx);
      t.wgt[3] = fy * fx;
    }
  }
  auto out = make_tensor({out_h, out_w, c}, x->needs_grad);
  int64_t opix = static_cast<int64_t>(out_h) * out_w;
  for (int64_t p = 0; p < opix; ++p) {
    const Tap& t = (*taps)[p];
    double* dst = out->v.data() + p * c;
    for (int k = 0; k < 4; ++k) {
      const double* src = x->v.data() + static_cast<int64_t>(t.idx[k]) * c;
      double wgt = t.wgt[k];
      for (int ch = 0; ch < c; ++ch) dst[ch] += wgt * src[ch];
    }
  }
  if (out->needs_grad)
    tape.record([x, out, taps, opix, c] {
      for (int64_t p = 0; p < opix; ++p) {
        const Tap& t = (*taps)[p];
        const double* go = out->g.data() + p * c;
        for (int k = 0; k < 4; ++k) {
          double* gx = x->g.data() + static_cast<int64_t>(t.idx[k]) * c;
          double wgt = t.wgt[k];
          for (int ch = 0; ch < c; ++ch) gx[ch] += wgt * go[ch];
        }
      }
    });
  return out;
}

TensorPtr mlp2(Tape& tape, const TensorPtr& w1, const TensorPtr& b1,
               const TensorPtr& w2, const TensorPtr& b2, const TensorPtr& x) {
  return linear_vec(tape, w2, gelu(tape, linear_vec(tape, w1, x, b1)), b2);
}

TensorPtr mlp2_rows(Tape& tape, const TensorPtr& w1, const TensorPtr& b1,
                    const TensorPtr& w2, const TensorPtr& b2, const TensorPtr& x) {
  return linear_rows(tape, gelu(tape, linear_rows(tape, x, w1, b1)), w2, b2);
}

}  // namespace boltzseg
