// Copyright 2026 The DSTT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "dstt/layers.hpp"
#include "dstt/rng.hpp"
#include "dstt/tensor.hpp"
#include "json.hpp"

namespace dstt {

struct LossWeights {
  double hole = 1.0;
  double valid = 1.0;
  double adversarial = 0.01;

  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; negative weights throw ConfigError.
  static LossWeights from_json(const nlohmann::json& j);
};

/// Mean absolute error over hole pixels: sum|M * (pred - target)| divided by
/// the mask mass broadcast over the three colour channels. pred and target
/// are (t, 3, h, w), masks (t, 1, h, w) with 1 marking a hole. An empty mask
/// yields 0 (still attached to the graph).
template <typename T>
Tensor<T> loss_hole(const Tensor<T>& pred, const Tensor<T>& target, const Tensor<T>& masks);

/// Mirror of loss_hole over the valid region (1 - M); an all-hole mask yields 0.
template <typename T>
Tensor<T> loss_valid(const Tensor<T>& pred, const Tensor<T>& target, const Tensor<T>& masks);

/// Descent forms of the log GAN objectives, averaged over all logits:
/// -mean(log sigmoid(real)) - mean(log sigmoid(-fake)).
template <typename T>
Tensor<T> discriminator_loss(const Tensor<T>& real_logits, const Tensor<T>& fake_logits);

/// -mean(log sigmoid(fake)).
template <typename T>
Tensor<T> adversarial_loss(const Tensor<T>& fake_logits);

template <typename T>
struct GanLosses {
  Tensor<T> discriminator;
  Tensor<T> adversarial;
};

template <typename T>
GanLosses<T> gan_losses(const Tensor<T>& real_logits, const Tensor<T>& fake_logits);

template <typename T>
struct GeneratorLossTerms {
  Tensor<T> hole;
  Tensor<T> valid;
  Tensor<T> adversarial;  // may be undefined when the adversarial weight is 0
};

template <typename T>
Tensor<T> total_generator_loss(const GeneratorLossTerms<T>& terms, const LossWeights& weights);

/// Patch discriminator over a whole clip: three 3-d convolutions with
/// kernel (3,5,5), stride (1,2,2), padding (1,2,2), channels 3 -> 32 -> 64
/// -> 1, leaky relu 0.2 between layers. No final sigmoid.
template <typename T>
class Discriminator {
 public:
  static constexpr std::size_t kMinFrames = 2;

  explicit Discriminator(SeededRng& rng);
  Discriminator(const Discriminator&) = delete;
  Discriminator& operator=(const Discriminator&) = delete;

  /// (t, 3, h, w) -> logits (t, 1, ceil(h/8), ceil(w/8)).
  Tensor<T> operator()(const Tensor<T>& clip) const;

  ParameterSet<T>& parameters() { return params_; }
  const ParameterSet<T>& parameters() const { return params_; }

 private:
  ParameterSet<T> params_;
  Conv3d<T> layers_[3];
};

}  // namespace dstt
