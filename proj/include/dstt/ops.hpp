// Copyright 2026 The DSTT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

#include "dstt/tensor.hpp"

// Differentiable primitives. Every function records a graph edge when any
// operand requires grad, and every scalar multiply-accumulate it performs in
// the forward direction is added to the OpCounter.

namespace dstt {

// Element-wise; operands must have identical shapes.
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T> Tensor<T> scale(const Tensor<T>& x, T factor);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& x, T value);

/// Adds a 1-d `bias` along `axis` of `x` (bias length == x.size(axis)).
template <typename T> Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias, std::size_t axis);

/// Multiplies `x` by `factor` broadcast along `axis`, where factor has
/// x's shape except extent 1 on `axis` (e.g. a 1-channel mask over RGB).
template <typename T> Tensor<T> mul_broadcast(const Tensor<T>& x, const Tensor<T>& factor, std::size_t axis);

template <typename T> Tensor<T> relu(const Tensor<T>& x);
template <typename T> Tensor<T> leaky_relu(const Tensor<T>& x, T slope);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& x);
template <typename T> Tensor<T> tanh(const Tensor<T>& x);
template <typename T> Tensor<T> log(const Tensor<T>& x);
/// log(sigmoid(x)) evaluated without overflow for any finite x.
template <typename T> Tensor<T> log_sigmoid(const Tensor<T>& x);
template <typename T> Tensor<T> abs(const Tensor<T>& x);

/// Softmax over the last axis.
template <typename T> Tensor<T> softmax(const Tensor<T>& x);

// Reductions to a shape-(1) tensor.
template <typename T> Tensor<T> sum(const Tensor<T>& x);
template <typename T> Tensor<T> mean(const Tensor<T>& x);
template <typename T> Tensor<T> abs_sum(const Tensor<T>& x);

/// (m,k)x(k,n) -> (m,n), or batched (b,m,k)x(b,k,n) -> (b,m,n), or
/// (b,m,k)x(k,n) with the right operand shared across the batch.
/// Records batch*m*k*n MACs.
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T> Tensor<T> reshape(const Tensor<T>& x, Shape shape);
/// out.shape[i] = x.shape[axes[i]].
template <typename T> Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& axes);
/// Swaps the last two axes.
template <typename T> Tensor<T> transpose(const Tensor<T>& x);
template <typename T> Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis);
/// Half-open range [begin, end) along `axis`.
template <typename T> Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::size_t begin, std::size_t end);
/// Equal-size pieces along `axis`.
template <typename T> std::vector<Tensor<T>> split(const Tensor<T>& x, std::size_t axis, std::size_t pieces);

/// Sliding-window geometry for 2-d or 3-d convolution lowering.
struct ConvGeometry {
  Shape input;   // spatial extents
  Shape kernel;
  Shape stride;
  Shape padding;

  Shape output() const;
  std::size_t kernel_volume() const;
};

/// (N, C, spatial...) -> (C * prod(kernel), N * prod(output)). Row index is
/// c * K + kernel offset; column index is n * P + output position.
template <typename T> Tensor<T> im2col(const Tensor<T>& x, const ConvGeometry& geom);
/// Adjoint of im2col: scatters-adds columns back onto an (N, C, spatial...)
/// tensor of extent `geom.input`.
template <typename T> Tensor<T> col2im(const Tensor<T>& cols, std::size_t batch, std::size_t channels,
                                       const ConvGeometry& geom);

/// x: (N, Cin, H, W), weight: (Cout, Cin/groups, kh, kw), bias: (Cout) or undefined.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 std::size_t stride, std::size_t padding, std::size_t groups = 1);

/// x: (N, Cin, D, H, W), weight: (Cout, Cin, kd, kh, kw).
template <typename T>
Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 const Shape& stride, const Shape& padding);

/// Transposed convolution onto an explicit output extent.
/// x: (N, Cin, H, W), weight: (Cin, Cout, kh, kw).
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                           std::size_t stride, std::size_t padding, std::size_t out_h, std::size_t out_w);

/// Nearest-neighbour upsampling of the last two axes by an integer factor.
template <typename T> Tensor<T> upsample_nearest(const Tensor<T>& x, std::size_t factor);

}  // namespace dstt
