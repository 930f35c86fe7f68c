// Copyright 2026 The DSTT Authors
// SPDX-License-Identifier: Apache-2.0

#include "dstt/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "dstt/errors.hpp"

namespace dstt {

namespace {

struct Probe {
  double value;
  std::uint64_t pattern;
};

Probe probe(const LossFn& loss) {
  NoGradGuard guard;
  KinkMonitor monitor;
  const double value = loss().item();
  return {value, monitor.fingerprint()};
}

}  // namespace

GradCheckResult check_gradients(const std::string& name, const LossFn& loss,
                                std::vector<Tensord> parameters,
                                const GradCheckOptions& options) {
  for (auto& p : parameters) {
    if (!p.is_leaf()) throw ContractError("check_gradients: parameters must be leaves");
    p.set_requires_grad(true);
    p.zero_grad();
  }
  loss().backward();
  const std::uint64_t base_pattern = probe(loss).pattern;

  GradCheckResult result{name, 0.0, 0, 0, true};
  std::vector<double> analytic, numeric;
  for (auto& leaf : parameters) {
    const std::size_t n = leaf.numel();
    const std::size_t count = std::min(n, options.max_entries);
    std::vector<double> grad(n, 0.0);
    if (leaf.has_grad()) std::copy(leaf.grad().begin(), leaf.grad().end(), grad.begin());

    auto values = leaf.mutable_data();
    for (std::size_t c = 0; c < count; ++c) {
      const std::size_t i = count == n ? c : (c * (n - 1)) / (count - 1);
      const double saved = values[i];
      values[i] = saved + options.epsilon;
      const Probe plus = probe(loss);
      values[i] = saved - options.epsilon;
      const Probe minus = probe(loss);
      values[i] = saved;
      if (plus.pattern != base_pattern || minus.pattern != base_pattern) {
        ++result.entries_skipped;
        continue;
      }
      analytic.push_back(grad[i]);
      numeric.push_back((plus.value - minus.value) / (2.0 * options.epsilon));
    }
    leaf.zero_grad();
  }
  double scale = 0.0;
  for (double v : numeric) scale = std::max(scale, std::abs(v));
  const double floor = options.floor_fraction * scale;
  for (std::size_t c = 0; c < numeric.size(); ++c) {
    const double denom = std::max({std::abs(analytic[c]), std::abs(numeric[c]), floor});
    const double err = denom == 0.0 ? 0.0 : std::abs(analytic[c] - numeric[c]) / denom;
    if (!std::isfinite(err)) result.max_rel_error = err;
    else result.max_rel_error = std::max(result.max_rel_error, err);
  }
  result.entries_checked = numeric.size();
  const double sampled = double(result.entries_checked + result.entries_skipped);
  result.passed = result.entries_checked > 0 &&
                  double(result.entries_skipped) <= options.max_skipped_fraction * sampled &&
                  std::isfinite(result.max_rel_error) &&
                  result.max_rel_error < options.tolerance;
  return result;
}

GradCheckResult check_gradients(const std::string& name, const ScalarFn& fn,
                                const std::vector<Tensord>& inputs,
                                const GradCheckOptions& options) {
  std::vector<Tensord> leaves;
  leaves.reserve(inputs.size());
  for (const auto& in : inputs) leaves.push_back(in.detach());
  return check_gradients(name, [&] { return fn(leaves); }, leaves, options);
}

}  // namespace dstt
