// Copyright 2026 The DSTT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace dstt {

enum class AttentionMode { kTemporal, kSpatial, kCoupled };

const char* mode_name(AttentionMode mode);

/// MACs of the two attention contractions (scores and weighted values) over
/// t frames split into s x s zones of n tokens each, at width d. Projections
/// are excluded.
///   temporal: 2 t^2 s^2 n^2 d   (each zone attends across frames)
///   spatial:  2 t s^4 n^2 d     (each frame attends across zones)
///   coupled:  2 t^2 s^4 n^2 d   (every token attends to every token)
std::uint64_t attention_mac_count(std::uint64_t t, std::uint64_t s, std::uint64_t n, std::uint64_t d,
                                  AttentionMode mode);

struct BenchConfig {
  std::uint64_t t = 5, s = 2, n = 4, d = 8;
  std::string note;  // free-form label carried into the report

  void validate() const;
};

void to_json(nlohmann::json& j, const BenchConfig& c);
void from_json(const nlohmann::json& j, BenchConfig& c);

/// t=5, s=2 on a 20x36 token grid (n=180), d=512. The grid assumes 240x432
/// input frames; the note says so.
BenchConfig full_scale_config();

/// The default sweep: a small grid plus the full-scale row.
std::vector<BenchConfig> default_bench_grid();

struct ModeMeasurement {
  std::uint64_t analytic = 0;
  std::uint64_t measured = 0;
  double milliseconds = 0.0;
};

struct BenchRow {
  BenchConfig config;
  ModeMeasurement temporal, spatial, coupled;
  // coupled / (temporal + spatial) from measured counts, reduced.
  std::uint64_t ratio_num = 0, ratio_den = 1;

  double ratio() const { return static_cast<double>(ratio_num) / static_cast<double>(ratio_den); }
  bool exact() const;
  /// Measured ratio equals t s^2 / (t + s^2) as a reduced fraction.
  bool ratio_matches_closed_form() const;
  bool decoupled_faster() const;
};

struct ComplexityReport {
  std::vector<BenchRow> rows;

  bool all_exact() const;
  std::string to_csv() const;
  nlohmann::json to_json() const;
};

struct BenchOptions {
  std::uint64_t seed = 7;
  /// Timed repetitions per mode; the fastest is reported.
  int repeats = 1;
};

/// Runs single-head attention on grouped random tokens for every mode of
/// every config while counting MACs.
ComplexityReport run_bench(const std::vector<BenchConfig>& grid, const BenchOptions& options = {});

}  // namespace dstt
