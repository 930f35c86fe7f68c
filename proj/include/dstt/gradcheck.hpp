// Copyright 2026 The DSTT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "dstt/tensor.hpp"

namespace dstt {

struct GradCheckOptions {
  double epsilon = 1e-4;
  double tolerance = 1e-5;
  // Entries checked per input; larger inputs are sampled at even spacing.
  std::size_t max_entries = 64;
  // Relative errors use max(|analytic|, |numeric|, floor_fraction * scale)
  // as denominator, where scale is the largest numeric derivative seen in
  // the whole check. Keeps near-zero entries from dividing by rounding noise.
  double floor_fraction = 1e-3;
  // Entries whose +-epsilon probe flips a relu/abs branch are skipped, since
  // a central difference straddling a kink is not a derivative. The check
  // fails if more than this fraction of sampled entries had to be skipped.
  double max_skipped_fraction = 0.25;
};

struct GradCheckResult {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t entries_checked = 0;
  std::size_t entries_skipped = 0;
  bool passed = false;
};

using ScalarFn = std::function<Tensord(const std::vector<Tensord>&)>;
using LossFn = std::function<Tensord()>;

/// Compares reverse-mode gradients of `fn` with respect to every input
/// against central finite differences. Inputs are copied; the caller's
/// tensors are not modified.
GradCheckResult check_gradients(const std::string& name, const ScalarFn& fn,
                                const std::vector<Tensord>& inputs,
                                const GradCheckOptions& options = {});

/// Same check for a closure over live leaf tensors (model parameters).
/// Each parameter is perturbed in place and restored; grads are cleared
/// before and after.
GradCheckResult check_gradients(const std::string& name, const LossFn& loss,
                                std::vector<Tensord> parameters,
                                const GradCheckOptions& options = {});

}  // namespace dstt
