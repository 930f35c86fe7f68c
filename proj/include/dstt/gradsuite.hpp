// Copyright 2026 The DSTT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "dstt/gradcheck.hpp"
#include "dstt/losses.hpp"
#include "dstt/model.hpp"
#include "json.hpp"

namespace dstt {

/// The finite-difference verification run: every differentiable primitive,
/// then the generator objective and the discriminator objective end to end
/// in 64-bit on a small model.
struct GradSuiteConfig {
  ModelConfig model = small_model();
  LossWeights weights;
  std::size_t frames = 2;
  std::uint64_t seed = 1;
  bool primitives = true;
  GradCheckOptions options = default_options();

  static ModelConfig small_model();
  static GradCheckOptions default_options();

  void validate() const;
  nlohmann::json to_json() const;
  static GradSuiteConfig from_json(const nlohmann::json& j);
};

struct GradSuiteReport {
  std::vector<GradCheckResult> results;
  double seconds = 0.0;

  bool passed() const;
};

GradSuiteReport run_gradient_suite(const GradSuiteConfig& cfg);

}  // namespace dstt
