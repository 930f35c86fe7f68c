// Copyright 2026 The DSTT Authors
// SPDX-License-Identifier: Apache-2.0

#include "dstt/layers.hpp"

#include <cmath>

#include "dstt/errors.hpp"
#include "dstt/ops.hpp"

namespace dstt {

template <typename T>
Tensor<T> ParameterSet<T>::add(const std::string& name, Tensor<T> value) {
  if (find(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  value.set_requires_grad(true);
  items_.push_back({name, value});
  return value;
}

template <typename T>
const Tensor<T>* ParameterSet<T>::find(const std::string& name) const {
  for (const auto& item : items_) {
    if (item.name == name) return &item.value;
  }
  return nullptr;
}

template <typename T>
void ParameterSet<T>::zero_grad() {
  for (auto& item : items_) item.value.zero_grad();
}

template <typename T>
std::size_t ParameterSet<T>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& item : items_) n += item.value.numel();
  return n;
}

template <typename T>
Tensor<T> fan_in_uniform(const Shape& shape, std::size_t fan_in, SeededRng& rng) {
  Tensor<T> t(shape);
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& v : t.mutable_data()) v = static_cast<T>(rng.uniform(-bound, bound));
  return t;
}

template <typename T>
Linear<T>::Linear(ParameterSet<T>& params, const std::string& name, std::size_t in, std::size_t out,
                  SeededRng& rng)
    : weight(params.add(name + ".weight", fan_in_uniform<T>({in, out}, in, rng))),
      bias(params.add(name + ".bias", Tensor<T>({out}))) {}

template <typename T>
Tensor<T> Linear<T>::operator()(const Tensor<T>& x) const {
  return add_bias(matmul(x, weight), bias, x.dim() - 1);
}

template <typename T>
void Linear<T>::zero() {
  for (auto& v : weight.mutable_data()) v = T{0};
  for (auto& v : bias.mutable_data()) v = T{0};
}

template <typename T>
Conv2d<T>::Conv2d(ParameterSet<T>& params, const std::string& name, std::size_t in, std::size_t out,
                  std::size_t kernel, std::size_t stride_, std::size_t padding_, SeededRng& rng,
                  std::size_t groups_)
    : stride(stride_), padding(padding_), groups(groups_) {
  if (groups == 0 || in % groups != 0 || out % groups != 0) {
    throw ConfigError(name + ": " + std::to_string(groups) + " groups do not divide " +
                      std::to_string(in) + " -> " + std::to_string(out) + " channels");
  }
  const std::size_t fan_in = in / groups * kernel * kernel;
  weight = params.add(name + ".weight", fan_in_uniform<T>({out, in / groups, kernel, kernel}, fan_in, rng));
  bias = params.add(name + ".bias", Tensor<T>({out}));
}

template <typename T>
Tensor<T> Conv2d<T>::operator()(const Tensor<T>& x) const {
  return conv2d(x, weight, bias, stride, padding, groups);
}

template <typename T>
ConvTranspose2d<T>::ConvTranspose2d(ParameterSet<T>& params, const std::string& name, std::size_t in,
                                    std::size_t out, std::size_t kernel, std::size_t stride_,
                                    std::size_t padding_, SeededRng& rng)
    : stride(stride_), padding(padding_) {
  // Each output pixel sees about in * kernel^2 / stride^2 taps.
  const std::size_t fan_in = std::max<std::size_t>(1, in * kernel * kernel / (stride * stride));
  weight = params.add(name + ".weight", fan_in_uniform<T>({in, out, kernel, kernel}, fan_in, rng));
  bias = params.add(name + ".bias", Tensor<T>({out}));
}

template <typename T>
Tensor<T> ConvTranspose2d<T>::operator()(const Tensor<T>& x, std::size_t out_h, std::size_t out_w) const {
  return conv_transpose2d(x, weight, bias, stride, padding, out_h, out_w);
}

template <typename T>
Conv3d<T>::Conv3d(ParameterSet<T>& params, const std::string& name, std::size_t in, std::size_t out,
                  const Shape& kernel, const Shape& stride_, const Shape& padding_, SeededRng& rng)
    : stride(stride_), padding(padding_) {
  Shape shape{out, in};
  shape.insert(shape.end(), kernel.begin(), kernel.end());
  weight = params.add(name + ".weight", fan_in_uniform<T>(shape, in * shape_numel(kernel), rng));
  bias = params.add(name + ".bias", Tensor<T>({out}));
}

template <typename T>
Tensor<T> Conv3d<T>::operator()(const Tensor<T>& x) const {
  return conv3d(x, weight, bias, stride, padding);
}

template class ParameterSet<float>;
template class ParameterSet<double>;
template Tensor<float> fan_in_uniform(const Shape&, std::size_t, SeededRng&);
template Tensor<double> fan_in_uniform(const Shape&, std::size_t, SeededRng&);
template struct Linear<float>;
template struct Linear<double>;
template struct Conv2d<float>;
template struct Conv2d<double>;
template struct ConvTranspose2d<float>;
template struct ConvTranspose2d<double>;
template struct Conv3d<float>;
template struct Conv3d<double>;

}  // namespace dstt
