#pragma once

#include <cstddef>
#include <type_traits>
#include <vector>

#include "fieldgen/tensor.hpp"

// Differentiable tensor operations. Every op checks its output for NaN/Inf
// and throws NumericError rather than letting a bad value propagate.
namespace fieldgen::ops {

// Additive mask value for excluded attention logits.
inline constexpr double kMaskedLogit = -1e9;

template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
// x[..., n] + b[n], broadcast over leading extents.
template <typename T> Tensor<T> add_rows(const Tensor<T>& x, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& x, T s);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& x, T s);

// a[m,k] . b[k,n]
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> transpose(const Tensor<T>& x);

template <typename T> Tensor<T> relu(const Tensor<T>& x);
template <typename T> Tensor<T> silu(const Tensor<T>& x);
// tanh approximation
template <typename T> Tensor<T> gelu(const Tensor<T>& x);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& x);
template <typename T> Tensor<T> exp(const Tensor<T>& x);
template <typename T> Tensor<T> sqrt(const Tensor<T>& x);
template <typename T> Tensor<T> square(const Tensor<T>& x);

// Row softmax over the last extent with max subtraction. `mask`, when given,
// is a constant additive tensor of x's shape (0 keeps, kMaskedLogit drops).
template <typename T>
Tensor<T> softmax_lastdim(const Tensor<T>& x, const std::type_identity_t<Tensor<T>>* mask = nullptr);

// Per-row normalization over the last extent followed by gamma/beta.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     double eps = 1e-5);

// Direct cross-correlation. x[Cin,H,W], kernel[Cout,Cin,kh,kw], optional bias[Cout].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernel, const std::type_identity_t<Tensor<T>>* bias,
                 std::size_t stride, std::size_t pad);

// [C,H,W] -> [C,2H,2W]
template <typename T> Tensor<T> upsample_nearest2x(const Tensor<T>& x);
// 2x2 mean pooling, [C,H,W] -> [C,H/2,W/2]; H and W must be even.
template <typename T> Tensor<T> avg_pool2x(const Tensor<T>& x);

template <typename T> Tensor<T> reshape(const Tensor<T>& x, const Shape& shape);
// Contiguous slab along the leading extent.
template <typename T> Tensor<T> slice_dim0(const Tensor<T>& x, std::size_t start, std::size_t count);
template <typename T> Tensor<T> concat_dim0(const std::vector<Tensor<T>>& parts);
// Column block of a matrix.
template <typename T> Tensor<T> slice_cols(const Tensor<T>& x, std::size_t start, std::size_t count);
template <typename T> Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts);
// out[i,:] = table[indices[i],:]
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& table, const std::vector<std::size_t>& indices);

// out.flat[i] = x.flat[indices[i]], reshaped to `shape`. Repeated indices accumulate gradient.
template <typename T>
Tensor<T> take(const Tensor<T>& x, const std::vector<std::size_t>& indices, const Shape& shape);

// [C,H,W] -> [C]
template <typename T> Tensor<T> spatial_mean(const Tensor<T>& x);
template <typename T> Tensor<T> sum(const Tensor<T>& x);
template <typename T> Tensor<T> mean(const Tensor<T>& x);
template <typename T> Tensor<T> mse_loss(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> l1_loss(const Tensor<T>& a, const Tensor<T>& b);

}  // namespace fieldgen::ops
