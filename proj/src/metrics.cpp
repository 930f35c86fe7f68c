// Copyright 2026 The DSTT Authors
// SPDX-License-Identifier: Apache-2.0

#include "dstt/metrics.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "dstt/errors.hpp"
#include "dstt/video.hpp"

namespace dstt {

namespace {

template <typename T>
void check_same_shape(const char* what, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()) + " differ");
  }
}

double psnr_from_mse(double mse, double peak) {
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

// (h+1) x (w+1) summed-area table of f(a[i], b[i]) over one plane.
template <typename T, typename F>
void integral(const T* a, const T* b, std::size_t h, std::size_t w, F f, std::vector<double>& out) {
  out.assign((h + 1) * (w + 1), 0.0);
  for (std::size_t y = 0; y < h; ++y) {
    double row = 0.0;
    for (std::size_t x = 0; x < w; ++x) {
      row += f(static_cast<double>(a[y * w + x]), static_cast<double>(b[y * w + x]));
      out[(y + 1) * (w + 1) + x + 1] = out[y * (w + 1) + x + 1] + row;
    }
  }
}

double box(const std::vector<double>& s, std::size_t w, std::size_t y, std::size_t x, std::size_t k) {
  const std::size_t stride = w + 1;
  return s[(y + k) * stride + x + k] - s[y * stride + x + k] - s[(y + k) * stride + x] + s[y * stride + x];
}

}  // namespace

template <typename T>
double mean_squared_error(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape("mse", a, b);
  double acc = 0.0;
  const auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = static_cast<double>(x[i]) - static_cast<double>(y[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(x.size());
}

template <typename T>
double psnr(const Tensor<T>& a, const Tensor<T>& b, double peak) {
  if (!(peak > 0.0)) throw ConfigError("psnr: peak must be positive");
  return psnr_from_mse(mean_squared_error(a, b), peak);
}

template <typename T>
double psnr_8bit(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape("psnr", a, b);
  double acc = 0.0;
  const auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = static_cast<double>(unit_to_pixel(static_cast<float>(x[i]))) -
                     static_cast<double>(unit_to_pixel(static_cast<float>(y[i])));
    acc += d * d;
  }
  return psnr_from_mse(acc / static_cast<double>(x.size()), 255.0);
}

template <typename T>
double ssim(const Tensor<T>& a, const Tensor<T>& b, const SsimOptions& options) {
  check_same_shape("ssim", a, b);
  if (a.dim() < 2) throw ShapeError("ssim: need at least two spatial axes, got " + shape_str(a.shape()));
  const std::size_t h = a.size(a.dim() - 2), w = a.size(a.dim() - 1), k = options.window;
  if (k == 0 || h < k || w < k) {
    throw ContractError("ssim: " + std::to_string(h) + "x" + std::to_string(w) +
                        " image is smaller than the " + std::to_string(k) + "x" + std::to_string(k) +
                        " window");
  }
  const double c1 = (options.k1 * options.range) * (options.k1 * options.range);
  const double c2 = (options.k2 * options.range) * (options.k2 * options.range);
  const double area = static_cast<double>(k * k);
  const std::size_t planes = a.numel() / (h * w);

  std::vector<double> sa, sb, saa, sbb, sab;
  double total = 0.0;
  for (std::size_t p = 0; p < planes; ++p) {
    const T* pa = a.data().data() + p * h * w;
    const T* pb = b.data().data() + p * h * w;
    integral(pa, pb, h, w, [](double u, double) { return u; }, sa);
    integral(pa, pb, h, w, [](double, double v) { return v; }, sb);
    integral(pa, pb, h, w, [](double u, double) { return u * u; }, saa);
    integral(pa, pb, h, w, [](double, double v) { return v * v; }, sbb);
    integral(pa, pb, h, w, [](double u, double v) { return u * v; }, sab);
    for (std::size_t y = 0; y + k <= h; ++y) {
      for (std::size_t x = 0; x + k <= w; ++x) {
        const double ma = box(sa, w, y, x, k) / area, mb = box(sb, w, y, x, k) / area;
        const double va = box(saa, w, y, x, k) / area - ma * ma;
        const double vb = box(sbb, w, y, x, k) / area - mb * mb;
        const double cov = box(sab, w, y, x, k) / area - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) /
                 ((ma * ma + mb * mb + c1) * (va + vb + c2));
      }
    }
  }
  const double windows = static_cast<double>(planes * (h - k + 1) * (w - k + 1));
  return total / windows;
}

#define DSTT_INSTANTIATE(T)                                                 \
  template double mean_squared_error(const Tensor<T>&, const Tensor<T>&);   \
  template double psnr(const Tensor<T>&, const Tensor<T>&, double);         \
  template double psnr_8bit(const Tensor<T>&, const Tensor<T>&);            \
  template double ssim(const Tensor<T>&, const Tensor<T>&, const SsimOptions&);
DSTT_INSTANTIATE(float)
DSTT_INSTANTIATE(double)
#undef DSTT_INSTANTIATE

}  // namespace dstt
