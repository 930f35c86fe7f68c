// Copyright 2026 The DSTT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "dstt/rng.hpp"
#include "dstt/tensor.hpp"

namespace dstt {

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> value;
};

/// Ordered, uniquely named trainable tensors. Entries share storage with the
/// layers that registered them.
template <typename T>
class ParameterSet {
 public:
  /// Registers `value` as trainable; throws ConfigError on duplicate names.
  Tensor<T> add(const std::string& name, Tensor<T> value);

  const std::vector<NamedTensor<T>>& items() const { return items_; }
  std::vector<NamedTensor<T>>& items() { return items_; }
  const Tensor<T>* find(const std::string& name) const;
  void zero_grad();
  std::size_t scalar_count() const;

 private:
  std::vector<NamedTensor<T>> items_;
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights.
template <typename T>
Tensor<T> fan_in_uniform(const Shape& shape, std::size_t fan_in, SeededRng& rng);

template <typename T>
struct Linear {
  Tensor<T> weight;  // (in, out)
  Tensor<T> bias;    // (out)

  Linear() = default;
  Linear(ParameterSet<T>& params, const std::string& name, std::size_t in, std::size_t out, SeededRng& rng);
  /// x: (rows, in) -> (rows, out).
  Tensor<T> operator()(const Tensor<T>& x) const;
  void zero();
};

template <typename T>
struct Conv2d {
  Tensor<T> weight;  // (out, in/groups, k, k)
  Tensor<T> bias;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t groups = 1;

  Conv2d() = default;
  Conv2d(ParameterSet<T>& params, const std::string& name, std::size_t in, std::size_t out,
         std::size_t kernel, std::size_t stride, std::size_t padding, SeededRng& rng,
         std::size_t groups = 1);
  Tensor<T> operator()(const Tensor<T>& x) const;
};

template <typename T>
struct ConvTranspose2d {
  Tensor<T> weight;  // (in, out, k, k)
  Tensor<T> bias;
  std::size_t stride = 1;
  std::size_t padding = 0;

  ConvTranspose2d() = default;
  ConvTranspose2d(ParameterSet<T>& params, const std::string& name, std::size_t in, std::size_t out,
                  std::size_t kernel, std::size_t stride, std::size_t padding, SeededRng& rng);
  Tensor<T> operator()(const Tensor<T>& x, std::size_t out_h, std::size_t out_w) const;
};

template <typename T>
struct Conv3d {
  Tensor<T> weight;  // (out, in, kd, kh, kw)
  Tensor<T> bias;
  Shape stride;
  Shape padding;

  Conv3d() = default;
  Conv3d(ParameterSet<T>& params, const std::string& name, std::size_t in, std::size_t out,
         const Shape& kernel, const Shape& stride, const Shape& padding, SeededRng& rng);
  Tensor<T> operator()(const Tensor<T>& x) const;
};

}  // namespace dstt
