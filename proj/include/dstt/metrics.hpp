// Copyright 2026 The DSTT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>

#include "dstt/tensor.hpp"

namespace dstt {

/// Peak-to-peak range of images stored in [-1, 1].
inline constexpr double kUnitPeak = 2.0;

template <typename T>
double mean_squared_error(const Tensor<T>& a, const Tensor<T>& b);

/// 10 log10(peak^2 / MSE) over every element. Identical inputs give +inf.
template <typename T>
double psnr(const Tensor<T>& a, const Tensor<T>& b, double peak = kUnitPeak);

/// PSNR after quantizing both [-1, 1] images to 8-bit levels, peak 255.
template <typename T>
double psnr_8bit(const Tensor<T>& a, const Tensor<T>& b);

struct SsimOptions {
  std::size_t window = 8;
  double k1 = 0.01;
  double k2 = 0.03;
  double range = kUnitPeak;
};

/// Mean SSIM over every window position (stride 1) of every plane. The last
/// two axes are spatial; all leading axes index independent planes.
template <typename T>
double ssim(const Tensor<T>& a, const Tensor<T>& b, const SsimOptions& options = {});

}  // namespace dstt
