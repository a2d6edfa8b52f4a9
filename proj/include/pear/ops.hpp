#pragma once

// The differentiable op set used by the forecasting network.

#include <cstdint>
#include <span>
#include <vector>

#include "pear/tensor.hpp"

namespace pear::ad {

inline constexpr double kLayerNormEps = 1e-5;

/// Additive attention mask broadcast over heads: logits viewed as
/// (groups, heads, rows, width) receive data[g, r, w].
struct MaskView {
    std::span<const float> data;
    std::int64_t groups = 0;
    std::int64_t rows = 0;
    std::int64_t width = 0;

    bool empty() const { return data.empty(); }
};

template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T factor);
/// x + b where b's shape equals the trailing dimensions of x.
template <typename T> Tensor<T> add_trailing(const Tensor<T>& x, const Tensor<T>& b);

template <typename T> Tensor<T> sum(const Tensor<T>& x);
template <typename T> Tensor<T> mean(const Tensor<T>& x);

template <typename T> Tensor<T> reshape(const Tensor<T>& x, Shape shape);
template <typename T> Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& axes);
/// Rows along axis 0: out[i, ...] = x[index[i], ...].
template <typename T> Tensor<T> gather_rows(const Tensor<T>& x, std::span<const std::int64_t> index);
template <typename T> Tensor<T> concat(const std::vector<Tensor<T>>& xs, std::size_t axis);
template <typename T> Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::int64_t start, std::int64_t length);
template <typename T>
std::vector<Tensor<T>> split(const Tensor<T>& x, std::size_t axis, const std::vector<std::int64_t>& sizes);

/// (M, K) x (K, N)
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
/// x (..., in) W (in, out) + bias (out); bias may be undefined.
template <typename T> Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);
/// Batched (B, M, K) x (B, K, N), or x (B, N, K)^T when transpose_b.
template <typename T> Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b, bool transpose_b = false);

/// Normalizes the last axis.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, double eps = kLayerNormEps);
/// Exact (erf) GELU.
template <typename T> Tensor<T> gelu(const Tensor<T>& x);
/// Softmax over the last axis of (logits + mask). An empty mask means none.
template <typename T> Tensor<T> softmax_with_mask(const Tensor<T>& logits, const MaskView& mask = {});
/// mean |x - y|; the subgradient at ties is 0.
template <typename T> Tensor<T> l1(const Tensor<T>& x, const Tensor<T>& y);

/// SoftMax(Q K^T / sqrt(d) + B + mask) V for Q, K, V of shape
/// (windows, heads, W, d), bias of shape (heads, W * W) shared by all
/// windows and a mask of shape (windows, W, W) shared by all heads.
template <typename T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, const Tensor<T>& bias,
                    const MaskView& mask = {});

}  // namespace pear::ad
