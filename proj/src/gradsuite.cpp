// Copyright 2026 The DSTT Authors
// SPDX-License-Identifier: Apache-2.0

#include "dstt/gradsuite.hpp"

#include <chrono>
#include <cmath>
#include <string>

#include "dstt/errors.hpp"
#include "dstt/ops.hpp"
#include "dstt/rng.hpp"
#include "dstt/video.hpp"

namespace dstt {

namespace {

Tensord uniform(const Shape& shape, SeededRng& rng, double lo = -1.0, double hi = 1.0) {
  Tensord t(shape);
  for (auto& v : t.mutable_data()) v = rng.uniform(lo, hi);
  return t;
}

// Values at least 0.05 from zero, so relu/abs probes stay on one side.
Tensord off_kink(const Shape& shape, SeededRng& rng) {
  Tensord t = uniform(shape, rng);
  for (auto& v : t.mutable_data()) v = v >= 0 ? v + 0.05 : v - 0.05;
  return t;
}

struct PrimitiveCase {
  std::string name;
  ScalarFn fn;
  std::vector<Tensord> inputs;
};

std::vector<PrimitiveCase> primitive_cases(SeededRng& rng) {
  auto u = [&](const Shape& s) { return uniform(s, rng); };
  auto k = [&](const Shape& s) { return off_kink(s, rng); };
  // Projects an op output onto fixed random weights to get a scalar.
  const std::uint64_t fold_seed = rng.next_u64();
  auto fold = [fold_seed](const Tensord& y) {
    SeededRng weights(fold_seed + y.numel());
    return sum(mul(y, uniform(y.shape(), weights)));
  };
  const ConvGeometry g1{{5, 4}, {3, 3}, {2, 1}, {1, 1}};
  const ConvGeometry g2{{4, 4}, {3, 3}, {2, 2}, {1, 1}};
  return {
      {"add", [=](auto& v) { return fold(add(v[0], v[1])); }, {u({3, 4}), u({3, 4})}},
      {"sub", [=](auto& v) { return fold(sub(v[0], v[1])); }, {u({3, 4}), u({3, 4})}},
      {"mul", [=](auto& v) { return fold(mul(v[0], v[1])); }, {u({3, 4}), u({3, 4})}},
      {"scale", [=](auto& v) { return fold(scale(v[0], 1.7)); }, {u({5})}},
      {"add_scalar", [=](auto& v) { return fold(add_scalar(v[0], 0.3)); }, {u({5})}},
      {"add_bias", [=](auto& v) { return fold(add_bias(v[0], v[1], 1)); }, {u({2, 3, 4}), u({3})}},
      {"mul_broadcast", [=](auto& v) { return fold(mul_broadcast(v[0], v[1], 1)); },
       {u({2, 3, 4}), u({2, 1, 4})}},
      {"relu", [=](auto& v) { return fold(relu(v[0])); }, {k({3, 4})}},
      {"leaky_relu", [=](auto& v) { return fold(leaky_relu(v[0], 0.2)); }, {k({3, 4})}},
      {"sigmoid", [=](auto& v) { return fold(sigmoid(v[0])); }, {u({3, 4})}},
      {"tanh", [=](auto& v) { return fold(tanh(v[0])); }, {u({3, 4})}},
      {"log", [=](auto& v) { return fold(log(v[0])); }, {uniform({3, 4}, rng, 0.1, 2.0)}},
      {"log_sigmoid", [=](auto& v) { return fold(log_sigmoid(scale(v[0], 8.0))); }, {u({3, 4})}},
      {"abs", [=](auto& v) { return fold(abs(v[0])); }, {k({3, 4})}},
      {"softmax", [=](auto& v) { return fold(softmax(v[0])); }, {u({3, 4})}},
      {"sum", [](auto& v) { return sum(mul(v[0], v[0])); }, {u({3, 4})}},
      {"mean", [](auto& v) { return mean(mul(v[0], v[0])); }, {u({3, 4})}},
      {"abs_sum", [](auto& v) { return abs_sum(v[0]); }, {k({3, 4})}},
      {"matmul", [=](auto& v) { return fold(matmul(v[0], v[1])); }, {u({2, 3}), u({3, 4})}},
      {"matmul_batched", [=](auto& v) { return fold(matmul(v[0], v[1])); },
       {u({2, 3, 4}), u({2, 4, 2})}},
      {"matmul_shared_rhs", [=](auto& v) { return fold(matmul(v[0], v[1])); },
       {u({2, 2, 3}), u({3, 4})}},
      {"reshape", [=](auto& v) { return fold(reshape(v[0], {4, 3})); }, {u({3, 4})}},
      {"permute", [=](auto& v) { return fold(permute(v[0], {2, 0, 1})); }, {u({2, 3, 4})}},
      {"transpose", [=](auto& v) { return fold(transpose(v[0])); }, {u({2, 3, 4})}},
      {"concat", [=](auto& v) { return fold(concat<double>({v[0], v[1]}, 1)); },
       {u({2, 3, 2}), u({2, 1, 2})}},
      {"slice", [=](auto& v) { return fold(slice(v[0], 1, 1, 3)); }, {u({2, 4, 2})}},
      {"split", [](auto& v) { auto p = split(v[0], 2, 2); return sum(mul(p[0], p[1])); }, {u({2, 3, 4})}},
      {"im2col", [=](auto& v) { return fold(im2col(v[0], g1)); }, {u({2, 2, 5, 4})}},
      {"col2im", [=](auto& v) { return fold(col2im(v[0], 1, 2, g2)); }, {u({18, 4})}},
      {"conv2d", [=](auto& v) { return fold(conv2d(v[0], v[1], v[2], 2, 1)); },
       {u({2, 3, 6, 6}), u({4, 3, 3, 3}), u({4})}},
      {"conv2d_grouped", [=](auto& v) { return fold(conv2d(v[0], v[1], v[2], 1, 1, 2)); },
       {u({1, 4, 5, 5}), u({2, 2, 3, 3}), u({2})}},
      {"conv3d", [=](auto& v) { return fold(conv3d(v[0], v[1], v[2], {1, 2, 2}, {1, 2, 2})); },
       {u({1, 2, 3, 6, 6}), u({2, 2, 3, 5, 5}), u({2})}},
      {"conv_transpose2d", [=](auto& v) { return fold(conv_transpose2d(v[0], v[1], v[2], 3, 3, 12, 12)); },
       {u({1, 2, 4, 4}), u({2, 3, 7, 7}), u({3})}},
      {"upsample_nearest", [=](auto& v) { return fold(upsample_nearest(v[0], 2)); }, {u({1, 2, 3, 3})}},
  };
}

// Zero-initialized biases put many pre-activations exactly on a kink. The
// check runs at a generic point instead: every bias gets magnitude in
// [0.05, 0.15] with a random sign.
std::vector<Tensord> generic_point(ParameterSet<double>& params, SeededRng& rng) {
  std::vector<Tensord> out;
  for (auto& [name, value] : params.items()) {
    if (name.ends_with(".bias")) {
      for (double& v : value.mutable_data()) v = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.05, 0.15);
    }
    out.push_back(value);
  }
  return out;
}

}  // namespace

ModelConfig GradSuiteConfig::small_model() {
  ModelConfig m;
  m.frame_h = m.frame_w = 24;
  m.base_channels = 4;
  m.token_dim = 8;
  m.heads = 2;
  m.ffn_hidden = 32;
  m.hierarchy_layers = 1;
  m.zone_split = 2;
  m.stacking = "ts";
  return m;
}

GradCheckOptions GradSuiteConfig::default_options() {
  GradCheckOptions o;
  o.max_entries = 16;
  return o;
}

void GradSuiteConfig::validate() const {
  model.validate();
  if (frames < Discriminator<double>::kMinFrames) {
    throw ConfigError("gradcheck: frames must be at least " + std::to_string(Discriminator<double>::kMinFrames));
  }
  if (!(options.epsilon > 0.0) || !(options.tolerance > 0.0) || options.max_entries == 0) {
    throw ConfigError("gradcheck: epsilon, tolerance and max_entries must be positive");
  }
}

nlohmann::json GradSuiteConfig::to_json() const {
  return {{"model", model.to_json()},
          {"loss", weights.to_json()},
          {"frames", frames},
          {"seed", seed},
          {"primitives", primitives},
          {"epsilon", options.epsilon},
          {"tolerance", options.tolerance},
          {"max_entries", options.max_entries},
          {"floor_fraction", options.floor_fraction},
          {"max_skipped_fraction", options.max_skipped_fraction}};
}

GradSuiteConfig GradSuiteConfig::from_json(const nlohmann::json& j) {
  GradSuiteConfig c;
  if (j.contains("model")) {
    nlohmann::json merged = c.model.to_json();
    merged.update(j.at("model"));
    c.model = ModelConfig::from_json(merged);
  }
  if (j.contains("loss")) c.weights = LossWeights::from_json(j.at("loss"));
  c.frames = j.value("frames", c.frames);
  c.seed = j.value("seed", c.seed);
  c.primitives = j.value("primitives", c.primitives);
  c.options.epsilon = j.value("epsilon", c.options.epsilon);
  c.options.tolerance = j.value("tolerance", c.options.tolerance);
  c.options.max_entries = j.value("max_entries", c.options.max_entries);
  c.options.floor_fraction = j.value("floor_fraction", c.options.floor_fraction);
  c.options.max_skipped_fraction = j.value("max_skipped_fraction", c.options.max_skipped_fraction);
  c.validate();
  return c;
}

bool GradSuiteReport::passed() const {
  if (results.empty()) return false;
  for (const auto& r : results) {
    if (!r.passed) return false;
  }
  return true;
}

GradSuiteReport run_gradient_suite(const GradSuiteConfig& cfg) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  GradSuiteReport report;
  SeededRng rng(cfg.seed);

  if (cfg.primitives) {
    SeededRng prim_rng = rng.fork();
    for (const auto& c : primitive_cases(prim_rng)) {
      report.results.push_back(check_gradients(c.name, c.fn, c.inputs, cfg.options));
    }
  }

  SeededRng model_rng = rng.fork();
  SeededRng data_rng = rng.fork();
  Generator<double> gen(cfg.model, model_rng);
  Discriminator<double> disc(model_rng);
  const auto gen_params = generic_point(gen.parameters(), model_rng);
  const auto disc_params = generic_point(disc.parameters(), model_rng);

  const std::size_t t = cfg.frames, h = static_cast<std::size_t>(cfg.model.frame_h),
                    w = static_cast<std::size_t>(cfg.model.frame_w);
  const Tensorf target_f = quantize_clip(cast<float>(uniform({t, 3, h, w}, data_rng)));
  const Tensorf masks_f = sample_masks(data_rng, t, h, w, MaskDistribution{});
  const Tensord target = cast<double>(target_f);
  const Tensord masks = cast<double>(masks_f);
  const Tensord corrupted = cast<double>(corrupt(target_f, masks_f));

  auto generator_objective = [&] {
    const auto pred = gen.forward(corrupted, masks);
    GeneratorLossTerms<double> terms{loss_hole(pred, target, masks), loss_valid(pred, target, masks), {}};
    if (cfg.weights.adversarial != 0.0) terms.adversarial = adversarial_loss(disc(pred));
    return total_generator_loss(terms, cfg.weights);
  };
  report.results.push_back(check_gradients("generator objective", generator_objective, gen_params, cfg.options));
  disc.parameters().zero_grad();

  Tensord fake;
  {
    NoGradGuard no_grad;
    fake = gen.forward(corrupted, masks);
  }
  auto discriminator_objective = [&] { return discriminator_loss(disc(target), disc(fake)); };
  report.results.push_back(
      check_gradients("discriminator objective", discriminator_objective, disc_params, cfg.options));

  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace dstt
