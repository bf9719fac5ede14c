#pragma once

#include "fusenet/autograd.hpp"

namespace fusenet::nd {

/// 2-D cross-correlation over NCHW input. `bias` may be undefined.
/// Kernel is [C_out, C_in, k, k]; output extents are
/// (H + 2*padding - k) / stride + 1 and likewise for W.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& kernel, const Var<T>& bias, int stride, int padding);

/// Batch normalization over every axis except 1 (channels). Works on [N, C]
/// point features and [B, C, H, W] maps. In training mode batch statistics are
/// used and the running estimates are updated in place with the unbiased
/// variance; otherwise the running estimates are used.
template <typename T>
Var<T> batchnorm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, Tensor<T>& running_mean,
                 Tensor<T>& running_var, bool training, T momentum, T eps);

template <typename T>
Var<T> relu(const Var<T>& x);

/// Bilinear 2x upsampling, half-pixel centers (align_corners = false).
template <typename T>
Var<T> upsample2x_bilinear(const Var<T>& x);

/// Row-wise affine map: x[M, D_in] * weight[D_out, D_in]^T + bias[D_out].
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias);

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);

/// Concatenates along axis 1; every other extent must agree.
template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> scale(const Var<T>& x, T factor);

/// Sum of all elements as a one-element tensor.
template <typename T>
Var<T> sum(const Var<T>& x);

/// sum(x * weights) with constant weights; used to probe Jacobians.
template <typename T>
Var<T> dot_constant(const Var<T>& x, const Tensor<T>& weights);

}  // namespace fusenet::nd
