#pragma once

#include <vector>

#include "boltzseg/tensor.hpp"

namespace boltzseg {

class Tape;

// Elementwise and reduction ops -------------------------------------------

TensorPtr add(Tape& tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr add_n(Tape& tape, const std::vector<TensorPtr>& xs);
TensorPtr scale(Tape& tape, const TensorPtr& x, double s);
TensorPtr gelu(Tape& tape, const TensorPtr& x);
TensorPtr sigmoid(Tape& tape, const TensorPtr& x);
TensorPtr sum_all(Tape& tape, const TensorPtr& x);

// Linear algebra ------------------------------------------------------------

// C[m x n] = A[m x k] * B[k x n]
TensorPtr matmul(Tape& tape, const TensorPtr& a, const TensorPtr& b);
// y[m] = A[m x n] * x[n]
TensorPtr matvec(Tape& tape, const TensorPtr& a, const TensorPtr& x);
// y = W x + b, W[out x in], b[out] (b may be null)
TensorPtr linear_vec(Tape& tape, const TensorPtr& w, const TensorPtr& x,
                     const TensorPtr& b);
// Y[n x out] = X[n x in] W^T + b, rowwise
TensorPtr linear_rows(Tape& tape, const TensorPtr& x, const TensorPtr& w,
                      const TensorPtr& b);

// Normalization and softmax ---------------------------------------------------

// Rowwise layer norm over the last axis: zero mean, unit variance
// (eps inside the square root), then affine gain/bias.
TensorPtr layer_norm_rows(Tape& tape, const TensorPtr& x, const TensorPtr& gain,
                          const TensorPtr& bias, double eps = 1e-5);

// Softmax over the unmasked entries of a score vector; masked entries are
// exactly 0 in the output. Throws EmptyAttentionSet when everything is masked.
TensorPtr masked_softmax(Tape& tape, const TensorPtr& scores,
                         const std::vector<char>& mask);

// Shape plumbing --------------------------------------------------------------

TensorPtr concat_rows(Tape& tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr slice_rows(Tape& tape, const TensorPtr& x, int row0, int row1);
// Row r of X[n x d] as a rank-1 vector.
TensorPtr row_vec(Tape& tape, const TensorPtr& x, int row);
// k vectors of length d -> (k x d).
TensorPtr stack_rows(Tape& tape, const std::vector<TensorPtr>& rows);
TensorPtr gather_rows(Tape& tape, const TensorPtr& x, const std::vector<int>& idx);
TensorPtr reshape(Tape& tape, const TensorPtr& x, std::vector<int> shape);
// m fields of shape (h, w, 1) -> (h, w, m)
TensorPtr stack_channels(Tape& tape, const std::vector<TensorPtr>& fields);
TensorPtr concat_channels(Tape& tape, const TensorPtr& a, const TensorPtr& b);

// Spatial ops -----------------------------------------------------------------

// x(h, w, ci) conv w(kh, kw, ci, co) + b -> (oh, ow, co), zero padding.
TensorPtr conv2d(Tape& tape, const TensorPtr& x, const TensorPtr& w,
                 const TensorPtr& b, int stride, int pad);
// Transposed conv, kernel 4 stride 2 pad 1: exact 2x upsampling.
TensorPtr tconv2d_x2(Tape& tape, const TensorPtr& x, const TensorPtr& w,
                     const TensorPtr& b);
// Corner-aligned bilinear resize of an (h, w, c) tensor, differentiable.
TensorPtr resample_bilinear(Tape& tape, const TensorPtr& x, int out_h, int out_w);

// Two-layer MLP: W2 gelu(W1 x + b1) + b2.
TensorPtr mlp2(Tape& tape, const TensorPtr& w1, const TensorPtr& b1,
               const TensorPtr& w2, const TensorPtr& b2, const TensorPtr& x);
// Rowwise variant for (n x d) inputs.
TensorPtr mlp2_rows(Tape& tape, const TensorPtr& w1, const TensorPtr& b1,
                    const TensorPtr& w2, const TensorPtr& b2, const TensorPtr& x);

double gelu_scalar(double x);

}  // namespace boltzseg
