// Copyright 2026 The DSTT Authors
// SPDX-License-Identifier: Apache-2.0

#include "dstt/bench.hpp"

#include <chrono>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

#include "dstt/errors.hpp"
#include "dstt/model.hpp"
#include "dstt/ops.hpp"
#include "dstt/rng.hpp"

namespace dstt {

const char* mode_name(AttentionMode mode) {
  switch (mode) {
    case AttentionMode::kTemporal: return "temporal";
    case AttentionMode::kSpatial: return "spatial";
    case AttentionMode::kCoupled: return "coupled";
  }
  return "unknown";
}

std::uint64_t attention_mac_count(std::uint64_t t, std::uint64_t s, std::uint64_t n, std::uint64_t d,
                                  AttentionMode mode) {
  const std::uint64_t s2 = s * s;
  switch (mode) {
    case AttentionMode::kTemporal: return 2 * t * t * s2 * n * n * d;
    case AttentionMode::kSpatial: return 2 * t * s2 * s2 * n * n * d;
    case AttentionMode::kCoupled: return 2 * t * t * s2 * s2 * n * n * d;
  }
  return 0;
}

void BenchConfig::validate() const {
  if (t == 0 || s == 0 || n == 0 || d == 0) {
    throw ConfigError("bench: t, s, n and d must be positive");
  }
}

void to_json(nlohmann::json& j, const BenchConfig& c) {
  j = {{"t", c.t}, {"s", c.s}, {"n", c.n}, {"d", c.d}};
  if (!c.note.empty()) j["note"] = c.note;
}

void from_json(const nlohmann::json& j, BenchConfig& c) {
  c.t = j.at("t").get<std::uint64_t>();
  c.s = j.at("s").get<std::uint64_t>();
  c.n = j.at("n").get<std::uint64_t>();
  c.d = j.at("d").get<std::uint64_t>();
  c.note = j.value("note", std::string());
  c.validate();
}

BenchConfig full_scale_config() {
  return {5, 2, 180, 512, "assumed 240x432 frames: 20x36 token grid, 4 zones of 180 tokens"};
}

std::vector<BenchConfig> default_bench_grid() {
  return {{5, 2, 4, 8, ""},   {5, 1, 4, 8, ""},   {1, 2, 4, 8, ""},
          {3, 3, 6, 16, ""},  {5, 2, 36, 64, ""}, full_scale_config()};
}

bool BenchRow::exact() const {
  return temporal.analytic == temporal.measured && spatial.analytic == spatial.measured &&
         coupled.analytic == coupled.measured;
}

bool BenchRow::ratio_matches_closed_form() const {
  const std::uint64_t s2 = config.s * config.s;
  std::uint64_t num = config.t * s2, den = config.t + s2;
  const std::uint64_t g = std::gcd(num, den);
  num /= g;
  den /= g;
  return num == ratio_num && den == ratio_den;
}

bool BenchRow::decoupled_faster() const {
  return temporal.milliseconds + spatial.milliseconds < coupled.milliseconds;
}

bool ComplexityReport::all_exact() const {
  for (const auto& row : rows) {
    if (!row.exact() || !row.ratio_matches_closed_form()) return false;
  }
  return true;
}

std::string ComplexityReport::to_csv() const {
  std::ostringstream os;
  os << "t,s,n,d,temporal_macs,spatial_macs,coupled_macs,measured_temporal,measured_spatial,"
        "measured_coupled,ratio_num,ratio_den,ratio,temporal_ms,spatial_ms,coupled_ms,exact,note\n";
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const auto& r : rows) {
    const auto& c = r.config;
    os << c.t << ',' << c.s << ',' << c.n << ',' << c.d << ',' << r.temporal.analytic << ','
       << r.spatial.analytic << ',' << r.coupled.analytic << ',' << r.temporal.measured << ','
       << r.spatial.measured << ',' << r.coupled.measured << ',' << r.ratio_num << ',' << r.ratio_den << ','
       << r.ratio() << ',' << r.temporal.milliseconds << ',' << r.spatial.milliseconds << ','
       << r.coupled.milliseconds << ',' << (r.exact() ? "true" : "false") << ",\"" << c.note << "\"\n";
  }
  return os.str();
}

nlohmann::json ComplexityReport::to_json() const {
  auto mode = [](const ModeMeasurement& m) {
    return nlohmann::json{{"analytic_macs", m.analytic}, {"measured_macs", m.measured}, {"ms", m.milliseconds}};
  };
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) {
    out.push_back({{"config", r.config},
                   {"temporal", mode(r.temporal)},
                   {"spatial", mode(r.spatial)},
                   {"coupled", mode(r.coupled)},
                   {"ratio", {{"num", r.ratio_num}, {"den", r.ratio_den}, {"value", r.ratio()}}},
                   {"exact", r.exact()},
                   {"ratio_matches_closed_form", r.ratio_matches_closed_form()},
                   {"decoupled_faster", r.decoupled_faster()}});
  }
  return {{"rows", out}, {"all_exact", all_exact()}};
}

namespace {

ModeMeasurement measure(const Tensorf& groups, std::uint64_t analytic, int repeats) {
  ModeMeasurement m;
  m.analytic = analytic;
  m.milliseconds = std::numeric_limits<double>::infinity();
  for (int r = 0; r < repeats; ++r) {
    ScopedMacCount count;
    const auto start = std::chrono::steady_clock::now();
    const auto out = attention_core(groups, groups, groups);
    const auto stop = std::chrono::steady_clock::now();
    m.measured = count.elapsed();
    m.milliseconds =
        std::min(m.milliseconds, std::chrono::duration<double, std::milli>(stop - start).count());
  }
  return m;
}

}  // namespace

ComplexityReport run_bench(const std::vector<BenchConfig>& grid, const BenchOptions& options) {
  if (options.repeats < 1) throw ConfigError("bench: repeats must be at least 1");
  NoGradGuard no_grad;
  SeededRng rng(options.seed);
  ComplexityReport report;
  for (const auto& c : grid) {
    c.validate();
    const std::size_t t = c.t, zones = c.s * c.s, n = c.n, d = c.d;
    Tensorf tokens({t, zones, n, d});
    for (auto& v : tokens.mutable_data()) v = static_cast<float>(rng.uniform(-1.0, 1.0));

    BenchRow row;
    row.config = c;
    row.temporal = measure(group_temporal(tokens), attention_mac_count(c.t, c.s, c.n, c.d, AttentionMode::kTemporal),
                           options.repeats);
    row.spatial = measure(group_spatial(tokens), attention_mac_count(c.t, c.s, c.n, c.d, AttentionMode::kSpatial),
                          options.repeats);
    row.coupled = measure(reshape(tokens, {1, t * zones * n, d}),
                          attention_mac_count(c.t, c.s, c.n, c.d, AttentionMode::kCoupled), options.repeats);
    const std::uint64_t num = row.coupled.measured;
    const std::uint64_t den = row.temporal.measured + row.spatial.measured;
    const std::uint64_t g = std::gcd(num, den);
    row.ratio_num = g ? num / g : 0;
    row.ratio_den = g ? den / g : 1;
    report.rows.push_back(std::move(row));
  }
  return report;
}

}  // namespace dstt
