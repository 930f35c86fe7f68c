// Copyright 2026 The DSTT Authors
// SPDX-License-Identifier: Apache-2.0

#include "dstt/losses.hpp"

#include <string>

#include "dstt/errors.hpp"
#include "dstt/ops.hpp"

namespace dstt {

namespace {

constexpr double kLeakySlope = 0.2;

template <typename T>
void check_loss_operands(const Tensor<T>& pred, const Tensor<T>& target, const Tensor<T>& masks) {
  if (pred.shape() != target.shape() || pred.dim() != 4 || pred.size(1) != 3) {
    throw ShapeError("loss: prediction " + shape_str(pred.shape()) + " and target " +
                     shape_str(target.shape()) + " must both be (t,3,h,w)");
  }
  const Shape expect{pred.size(0), 1, pred.size(2), pred.size(3)};
  if (masks.shape() != expect) {
    throw ShapeError("loss: masks " + shape_str(masks.shape()) + " expected " + shape_str(expect));
  }
  for (T m : masks.data()) {
    if (m != T{0} && m != T{1}) throw ContractError("loss: masks must be binary");
  }
}

template <typename T>
Tensor<T> masked_l1(const Tensor<T>& pred, const Tensor<T>& target, const Tensor<T>& region) {
  const Tensor<T> numerator = sum(mul_broadcast(abs(sub(pred, target)), region, 1));
  double mass = 0.0;
  for (T m : region.data()) mass += m;
  mass *= static_cast<double>(pred.size(1));
  if (mass == 0.0) return scale(numerator, T{0});
  return scale(numerator, static_cast<T>(1.0 / mass));
}

}  // namespace

nlohmann::json LossWeights::to_json() const {
  return {{"hole", hole}, {"valid", valid}, {"adversarial", adversarial}};
}

LossWeights LossWeights::from_json(const nlohmann::json& j) {
  LossWeights w;
  w.hole = j.value("hole", w.hole);
  w.valid = j.value("valid", w.valid);
  w.adversarial = j.value("adversarial", w.adversarial);
  if (w.hole < 0 || w.valid < 0 || w.adversarial < 0) {
    throw ConfigError("loss weights must be non-negative");
  }
  return w;
}

template <typename T>
Tensor<T> loss_hole(const Tensor<T>& pred, const Tensor<T>& target, const Tensor<T>& masks) {
  check_loss_operands(pred, target, masks);
  return masked_l1(pred, target, masks.detach());
}

template <typename T>
Tensor<T> loss_valid(const Tensor<T>& pred, const Tensor<T>& target, const Tensor<T>& masks) {
  check_loss_operands(pred, target, masks);
  std::vector<T> valid(masks.numel());
  for (std::size_t i = 0; i < valid.size(); ++i) valid[i] = T{1} - masks.data()[i];
  return masked_l1(pred, target, Tensor<T>(masks.shape(), std::move(valid)));
}

template <typename T>
Tensor<T> discriminator_loss(const Tensor<T>& real_logits, const Tensor<T>& fake_logits) {
  if (real_logits.shape() != fake_logits.shape()) {
    throw ShapeError("discriminator_loss: logit shapes " + shape_str(real_logits.shape()) +
                     " and " + shape_str(fake_logits.shape()) + " differ");
  }
  const Tensor<T> real_term = mean(log_sigmoid(real_logits));
  const Tensor<T> fake_term = mean(log_sigmoid(scale(fake_logits, T{-1})));
  return scale(add(real_term, fake_term), T{-1});
}

template <typename T>
Tensor<T> adversarial_loss(const Tensor<T>& fake_logits) {
  return scale(mean(log_sigmoid(fake_logits)), T{-1});
}

template <typename T>
GanLosses<T> gan_losses(const Tensor<T>& real_logits, const Tensor<T>& fake_logits) {
  return {discriminator_loss(real_logits, fake_logits), adversarial_loss(fake_logits)};
}

template <typename T>
Tensor<T> total_generator_loss(const GeneratorLossTerms<T>& terms, const LossWeights& weights) {
  Tensor<T> total = add(scale(terms.hole, static_cast<T>(weights.hole)),
                        scale(terms.valid, static_cast<T>(weights.valid)));
  if (weights.adversarial != 0.0) {
    if (!terms.adversarial.defined()) {
      throw ContractError("total_generator_loss: adversarial term missing for non-zero weight");
    }
    total = add(total, scale(terms.adversarial, static_cast<T>(weights.adversarial)));
  }
  return total;
}

template <typename T>
Discriminator<T>::Discriminator(SeededRng& rng) {
  const Shape kernel{3, 5, 5}, stride{1, 2, 2}, padding{1, 2, 2};
  const std::size_t channels[] = {3, 32, 64, 1};
  for (std::size_t i = 0; i < 3; ++i) {
    layers_[i] = Conv3d<T>(params_, "conv" + std::to_string(i), channels[i],
                           channels[i + 1], kernel, stride, padding, rng);
  }
}

template <typename T>
Tensor<T> Discriminator<T>::operator()(const Tensor<T>& clip) const {
  if (clip.dim() != 4 || clip.size(1) != 3) {
    throw ShapeError("discriminator: clip " + shape_str(clip.shape()) + " is not (t,3,h,w)");
  }
  const std::size_t t = clip.size(0);
  if (t < kMinFrames) {
    throw ConfigError("discriminator needs at least 2 frames, got " + std::to_string(t));
  }
  // (t,3,h,w) -> (1,3,t,h,w): time becomes the depth axis.
  Tensor<T> x = reshape(permute(clip, {1, 0, 2, 3}), {1, 3, t, clip.size(2), clip.size(3)});
  x = leaky_relu(layers_[0](x), static_cast<T>(kLeakySlope));
  x = leaky_relu(layers_[1](x), static_cast<T>(kLeakySlope));
  x = layers_[2](x);
  // (1,1,t,h',w') -> (t,1,h',w').
  return reshape(x, {t, 1, x.size(3), x.size(4)});
}

#define DSTT_INSTANTIATE(T)                                                                  \
  template Tensor<T> loss_hole(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);        \
  template Tensor<T> loss_valid(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);       \
  template Tensor<T> discriminator_loss(const Tensor<T>&, const Tensor<T>&);                 \
  template Tensor<T> adversarial_loss(const Tensor<T>&);                                     \
  template GanLosses<T> gan_losses(const Tensor<T>&, const Tensor<T>&);                      \
  template Tensor<T> total_generator_loss(const GeneratorLossTerms<T>&, const LossWeights&); \
  template class Discriminator<T>;

DSTT_INSTANTIATE(float)
DSTT_INSTANTIATE(double)

#undef DSTT_INSTANTIATE

}  // namespace dstt
