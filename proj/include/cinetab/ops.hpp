// Differentiable operations over Tensor<T>.
//
// Dense 2-D math, conv, and the transformer building blocks. Everything is
// recorded on the tape; heavy inner loops route through kernels.hpp.
#pragma once

#include <vector>

#include "cinetab/tensor.hpp"

namespace cinetab::ops {

// --- elementwise ---
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& x, T c);
template <typename T> Tensor<T> mul_scalar(const Tensor<T>& x, T c);
template <typename T> Tensor<T> gelu(const Tensor<T>& x);
template <typename T> Tensor<T> relu(const Tensor<T>& x);
template <typename T> Tensor<T> softplus(const Tensor<T>& x);
template <typename T> Tensor<T> sqrt_elem(const Tensor<T>& x);

// --- structure ---
template <typename T> Tensor<T> reshape(const Tensor<T>& x, Shape shape);
template <typename T> Tensor<T> transpose(const Tensor<T>& x);
template <typename T> Tensor<T> slice_cols(const Tensor<T>& x, std::size_t start, std::size_t count);
template <typename T> Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts);
template <typename T> Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts);
template <typename T> Tensor<T> gather_rows(const Tensor<T>& x, std::vector<std::size_t> indices);
template <typename T> Tensor<T> tile_rows(const Tensor<T>& row, std::size_t n);

// --- broadcasting helpers over rows of [L x D] ---
template <typename T> Tensor<T> add_rows(const Tensor<T>& x, const Tensor<T>& bias);
template <typename T> Tensor<T> scale_rows(const Tensor<T>& x, const Tensor<T>& s);
template <typename T> Tensor<T> div_rows(const Tensor<T>& x, const Tensor<T>& s);

// --- reductions ---
template <typename T> Tensor<T> sum_all(const Tensor<T>& x);
template <typename T> Tensor<T> mean_all(const Tensor<T>& x);
template <typename T> Tensor<T> row_sums(const Tensor<T>& x);   // [L x D] -> [L]
template <typename T> Tensor<T> col_sums(const Tensor<T>& x);   // [L x D] -> [D]
template <typename T> Tensor<T> mean_rows(const Tensor<T>& x);  // [L x D] -> [D]

// --- matrix products ---
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
// a [m x k] * b[n x k]^T -> [m x n]
template <typename T> Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b);

// --- rowwise softmax family ([L x D], along the last axis) ---
template <typename T> Tensor<T> softmax_rows(const Tensor<T>& x);
template <typename T> Tensor<T> log_softmax_rows(const Tensor<T>& x);
template <typename T> Tensor<T> logsumexp_rows(const Tensor<T>& x);  // -> [L]
template <typename T> Tensor<T> diag(const Tensor<T>& x);            // [B x B] -> [B]

// Per-row mean/variance normalization with affine gain/bias on the last axis.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps);

// Mean over rows of -logp[i, label[i]]; label < C enforced.
template <typename T>
Tensor<T> nll_rows(const Tensor<T>& logp, const std::vector<std::size_t>& labels);

// --- convolution ---
// x [C x D x H x W], kernel [F x C x kd x kh x kw], stride per spatial axis,
// no padding: out [F x D' x H' x W'] with D' = (D-kd)/sd + 1 etc.
template <typename T>
Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& kernel, std::size_t sd, std::size_t sh,
                 std::size_t sw);
template <typename T> Tensor<T> pad_hw(const Tensor<T>& x, std::size_t pad);
template <typename T> Tensor<T> upsample2x_hw(const Tensor<T>& x);

// --- attention ---
template <typename T>
struct AttentionWeights {
    Tensor<T> wq, wk, wv, wo;  // each [dim x dim]
    Tensor<T> bq, bk, bv, bo;  // each [dim]
};

// Scaled dot-product attention over x [L x dim] with no causal mask; output
// rows permute together with input rows.
template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& x, const AttentionWeights<T>& w,
                               std::size_t heads);

}  // namespace cinetab::ops
