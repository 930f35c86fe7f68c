// Copyright 2026 The DSTT Authors
// SPDX-License-Identifier: Apache-2.0

#include "dstt/model.hpp"

#include <cmath>

#include "dstt/errors.hpp"
#include "dstt/ops.hpp"

namespace dstt {

namespace {

constexpr double kLeakySlope = 0.2;

std::string residual_name(ResidualMode m) {
  return m == ResidualMode::kInputSkip ? "input_skip" : "sequential";
}

}  // namespace

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("model config: " + msg); };
  if (base_channels <= 0) fail("base_channels must be positive");
  if (hierarchy_layers < 0) fail("hierarchy_layers must be non-negative");
  if (hierarchy_layers > 30) fail("hierarchy_layers is unreasonably large");
  if (zone_split <= 0) fail("zone_split must be positive");
  if (heads <= 0) fail("heads must be positive");
  if (ffn_hidden <= 0) fail("ffn_hidden must be positive");
  if (frame_h <= 0 || frame_w <= 0) fail("frame extents must be positive");
  if (token_dim != 2 * base_channels) {
    fail("token_dim (" + std::to_string(token_dim) + ") must equal 2 * base_channels (" +
         std::to_string(2 * base_channels) + ")");
  }
  if (token_dim % heads != 0) {
    fail("token_dim " + std::to_string(token_dim) + " is not divisible by heads " + std::to_string(heads));
  }
  if (hierarchy_layers > 0 && base_channels % (1 << (hierarchy_layers - 1)) != 0) {
    fail("base_channels " + std::to_string(base_channels) + " is not divisible by 2^(L-1) = " +
         std::to_string(1 << (hierarchy_layers - 1)));
  }
  const int unit = 12 * zone_split;
  if (frame_h % unit != 0 || frame_w % unit != 0) {
    fail("frame " + std::to_string(frame_h) + "x" + std::to_string(frame_w) + " is not divisible by 12*s = " +
         std::to_string(unit));
  }
  for (char ch : stacking) {
    if (ch != 't' && ch != 's') fail(std::string("stacking character '") + ch + "' is not 't' or 's'");
  }
}

std::size_t ModelConfig::zone_tokens() const {
  const auto s = static_cast<std::size_t>(zone_split);
  return (token_h() / s) * (token_w() / s);
}

nlohmann::json ModelConfig::to_json() const {
  return {{"base_channels", base_channels}, {"hierarchy_layers", hierarchy_layers},
          {"zone_split", zone_split},       {"token_dim", token_dim},
          {"heads", heads},                 {"ffn_hidden", ffn_hidden},
          {"stacking", stacking},           {"frame_h", frame_h},
          {"frame_w", frame_w},             {"residual", residual_name(residual)}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.base_channels = j.value("base_channels", c.base_channels);
  c.hierarchy_layers = j.value("hierarchy_layers", c.hierarchy_layers);
  c.zone_split = j.value("zone_split", c.zone_split);
  c.token_dim = j.value("token_dim", 2 * c.base_channels);
  c.heads = j.value("heads", c.heads);
  c.ffn_hidden = j.value("ffn_hidden", 4 * c.token_dim);
  c.stacking = j.value("stacking", c.stacking);
  c.frame_h = j.value("frame_h", c.frame_h);
  c.frame_w = j.value("frame_w", c.frame_w);
  const std::string residual = j.value("residual", residual_name(c.residual));
  if (residual == "input_skip") {
    c.residual = ResidualMode::kInputSkip;
  } else if (residual == "sequential") {
    c.residual = ResidualMode::kSequential;
  } else {
    throw ConfigError("model config: residual must be 'input_skip' or 'sequential', got '" + residual + "'");
  }
  return c;
}

template <typename T>
Tensor<T> zone_split(const TokenGrid<T>& grid, std::size_t s) {
  const std::size_t t = grid.frames(), h = grid.height(), w = grid.width(), d = grid.dim();
  if (s == 0 || h % s != 0 || w % s != 0) {
    throw ConfigError("zone_split: token grid " + std::to_string(h) + "x" + std::to_string(w) +
                      " is not divisible by s = " + std::to_string(s));
  }
  const std::size_t zh = h / s, zw = w / s;
  auto x = reshape(grid.tokens, {t, s, zh, s, zw, d});
  x = permute(x, {0, 1, 3, 2, 4, 5});
  return reshape(x, {t, s * s, zh * zw, d});
}

template <typename T>
TokenGrid<T> zone_merge(const Tensor<T>& zones, std::size_t s, std::size_t height, std::size_t width) {
  const std::size_t t = zones.size(0), d = zones.size(3);
  if (s == 0 || height % s != 0 || width % s != 0 || zones.size(1) != s * s ||
      zones.size(2) != (height / s) * (width / s)) {
    throw ShapeError("zone_merge: zones " + shape_str(zones.shape()) + " do not tile a " +
                     std::to_string(height) + "x" + std::to_string(width) + " grid with s = " +
                     std::to_string(s));
  }
  auto x = reshape(zones, {t, s, s, height / s, width / s, d});
  x = permute(x, {0, 1, 3, 2, 4, 5});
  return {reshape(x, {t, height, width, d})};
}

template <typename T>
Tensor<T> group_temporal(const Tensor<T>& zones) {
  const std::size_t t = zones.size(0), z = zones.size(1), n = zones.size(2), d = zones.size(3);
  return reshape(permute(zones, {1, 0, 2, 3}), {z, t * n, d});
}

template <typename T>
Tensor<T> ungroup_temporal(const Tensor<T>& groups, std::size_t frames) {
  const std::size_t z = groups.size(0), n = groups.size(1) / frames, d = groups.size(2);
  return permute(reshape(groups, {z, frames, n, d}), {1, 0, 2, 3});
}

template <typename T>
Tensor<T> group_spatial(const Tensor<T>& zones) {
  const std::size_t t = zones.size(0), z = zones.size(1), n = zones.size(2), d = zones.size(3);
  return reshape(zones, {t, z * n, d});
}

template <typename T>
Tensor<T> ungroup_spatial(const Tensor<T>& groups, std::size_t zones) {
  const std::size_t t = groups.size(0), n = groups.size(1) / zones, d = groups.size(2);
  return reshape(groups, {t, zones, n, d});
}

template <typename T>
Tensor<T> attention_core(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v) {
  const T scale_factor = static_cast<T>(1.0 / std::sqrt(static_cast<double>(q.size(2))));
  auto scores = matmul(scale(q, scale_factor), transpose(k));
  return matmul(softmax(scores), v);
}

template <typename T>
MultiHeadAttention<T>::MultiHeadAttention(ParameterSet<T>& params, const std::string& name, std::size_t dim,
                                          std::size_t heads_, SeededRng& rng)
    : query(params, name + ".query", dim, dim, rng),
      key(params, name + ".key", dim, dim, rng),
      value(params, name + ".value", dim, dim, rng),
      output(params, name + ".output", dim, dim, rng),
      heads(heads_) {}

template <typename T>
Tensor<T> MultiHeadAttention<T>::operator()(const Tensor<T>& x) const {
  const std::size_t g = x.size(0), n = x.size(1), d = x.size(2), dh = d / heads;
  auto rows = reshape(x, {g * n, d});
  auto split_heads = [&](const Tensor<T>& y) {
    return reshape(permute(reshape(y, {g, n, heads, dh}), {0, 2, 1, 3}), {g * heads, n, dh});
  };
  auto ctx = attention_core(split_heads(query(rows)), split_heads(key(rows)), split_heads(value(rows)));
  auto merged = reshape(permute(reshape(ctx, {g, heads, n, dh}), {0, 2, 1, 3}), {g * n, d});
  return reshape(output(merged), {g, n, d});
}

template <typename T>
FeedForward<T>::FeedForward(ParameterSet<T>& params, const std::string& name, std::size_t dim,
                            std::size_t width, SeededRng& rng)
    : hidden(params, name + ".hidden", dim, width, rng), output(params, name + ".output", width, dim, rng) {}

template <typename T>
Tensor<T> FeedForward<T>::operator()(const Tensor<T>& x) const {
  return output(relu(hidden(x)));
}

template <typename T>
Tensor<T> TransformerBlock<T>::apply_groups(const Tensor<T>& groups) const {
  const std::size_t g = groups.size(0), n = groups.size(1), d = groups.size(2);
  auto attended = add(attention(groups), groups);
  auto ff = reshape(ffn(reshape(attended, {g * n, d})), {g, n, d});
  return add(ff, residual == ResidualMode::kInputSkip ? groups : attended);
}

template <typename T>
void TransformerBlock<T>::zero_output_projections() {
  attention.output.zero();
  ffn.output.zero();
}

template <typename T>
TokenGrid<T> temporal_block(const TokenGrid<T>& grid, const TransformerBlock<T>& block, std::size_t s) {
  auto groups = group_temporal(zone_split(grid, s));
  auto out = ungroup_temporal(block.apply_groups(groups), grid.frames());
  return zone_merge(out, s, grid.height(), grid.width());
}

template <typename T>
TokenGrid<T> spatial_block(const TokenGrid<T>& grid, const TransformerBlock<T>& block, std::size_t s) {
  auto groups = group_spatial(zone_split(grid, s));
  auto out = ungroup_spatial(block.apply_groups(groups), s * s);
  return zone_merge(out, s, grid.height(), grid.width());
}

template <typename T>
HierarchicalEncoder<T>::HierarchicalEncoder(ParameterSet<T>& params, const ModelConfig& cfg, SeededRng& rng) {
  const auto c = static_cast<std::size_t>(cfg.base_channels);
  const std::size_t strides[4] = {2, 1, 2, 1};
  std::size_t in = 4;
  for (std::size_t i = 0; i < 4; ++i) {
    stem.emplace_back(params, "encoder.stem" + std::to_string(i), in, c, 3, strides[i], 1, rng);
    in = c;
  }
  for (int j = 1; j <= cfg.hierarchy_layers; ++j) {
    const std::size_t groups = std::size_t{1} << (j - 1);
    hierarchy.emplace_back(params, "encoder.level" + std::to_string(j + 1), in, c, 3, 1, 1, rng, groups);
    in = 2 * c;
  }
  embed = Conv2d<T>(params, "encoder.embed", in, 2 * c, 7, 3, 3, rng);
}

template <typename T>
Tensor<T> HierarchicalEncoder<T>::stem_features(const Tensor<T>& frames_with_mask) const {
  auto x = frames_with_mask;
  for (const auto& conv : stem) x = leaky_relu(conv(x), static_cast<T>(kLeakySlope));
  return x;
}

template <typename T>
Tensor<T> HierarchicalEncoder<T>::hierarchy_features(const Tensor<T>& first_level) const {
  auto feature = first_level;
  for (const auto& conv : hierarchy) feature = concat<T>({relu(conv(feature)), first_level}, 1);
  return feature;
}

template <typename T>
TokenGrid<T> HierarchicalEncoder<T>::operator()(const Tensor<T>& frames_with_mask) const {
  if (frames_with_mask.dim() != 4 || frames_with_mask.size(1) != 4) {
    throw ShapeError("encoder expects (t, 4, h, w) input, got " + shape_str(frames_with_mask.shape()));
  }
  auto tokens = embed(hierarchy_features(stem_features(frames_with_mask)));
  return {permute(tokens, {0, 2, 3, 1})};
}

template <typename T>
FrameDecoder<T>::FrameDecoder(ParameterSet<T>& params, const ModelConfig& cfg, SeededRng& rng)
    : expand(params, "decoder.expand", static_cast<std::size_t>(cfg.token_dim),
             static_cast<std::size_t>(cfg.base_channels), 7, 3, 3, rng),
      refine1(params, "decoder.refine1", cfg.base_channels, cfg.base_channels, 3, 1, 1, rng),
      refine2(params, "decoder.refine2", cfg.base_channels, cfg.base_channels, 3, 1, 1, rng),
      to_rgb(params, "decoder.to_rgb", cfg.base_channels, 3, 3, 1, 1, rng),
      frame_h(cfg.frame_h),
      frame_w(cfg.frame_w) {}

template <typename T>
Tensor<T> FrameDecoder<T>::operator()(const TokenGrid<T>& grid) const {
  const T slope = static_cast<T>(kLeakySlope);
  auto x = permute(grid.tokens, {0, 3, 1, 2});
  x = leaky_relu(expand(x, frame_h / 4, frame_w / 4), slope);
  x = leaky_relu(refine1(upsample_nearest(x, 2)), slope);
  x = leaky_relu(refine2(upsample_nearest(x, 2)), slope);
  return tanh(to_rgb(x));
}

template <typename T>
Generator<T>::Generator(const ModelConfig& cfg, SeededRng& rng) : config_(cfg) {
  config_.validate();
  encoder_ = HierarchicalEncoder<T>(params_, config_, rng);
  const auto d = static_cast<std::size_t>(config_.token_dim);
  for (std::size_t i = 0; i < config_.stacking.size(); ++i) {
    TransformerBlock<T> block;
    const std::string name = "blocks." + std::to_string(i);
    block.kind = config_.stacking[i] == 't' ? BlockKind::kTemporal : BlockKind::kSpatial;
    block.attention = MultiHeadAttention<T>(params_, name + ".attention", d, config_.heads, rng);
    block.ffn = FeedForward<T>(params_, name + ".ffn", d, config_.ffn_hidden, rng);
    block.residual = config_.residual;
    blocks_.push_back(std::move(block));
  }
  decoder_ = FrameDecoder<T>(params_, config_, rng);
}

template <typename T>
TokenGrid<T> Generator<T>::run_blocks(const TokenGrid<T>& grid) const {
  const auto s = static_cast<std::size_t>(config_.zone_split);
  TokenGrid<T> out = grid;
  for (const auto& block : blocks_) {
    out = block.kind == BlockKind::kTemporal ? temporal_block(out, block, s) : spatial_block(out, block, s);
  }
  return out;
}

template <typename T>
Tensor<T> Generator<T>::forward(const Tensor<T>& clip, const Tensor<T>& masks) const {
  const Shape expect_clip{clip.size(0), 3, static_cast<std::size_t>(config_.frame_h),
                          static_cast<std::size_t>(config_.frame_w)};
  if (clip.shape() != expect_clip) {
    throw ShapeError("generator expects clip " + shape_str(expect_clip) + ", got " + shape_str(clip.shape()));
  }
  const Shape expect_mask{clip.size(0), 1, expect_clip[2], expect_clip[3]};
  if (masks.shape() != expect_mask) {
    throw ShapeError("generator expects masks " + shape_str(expect_mask) + ", got " + shape_str(masks.shape()));
  }
  return decode(run_blocks(encode(concat<T>({clip, masks}, 1))));
}

template <typename T>
void Generator<T>::zero_output_projections() {
  for (auto& block : blocks_) block.zero_output_projections();
}

#define DSTT_INSTANTIATE_MODEL(T)                                                                 \
  template Tensor<T> zone_split(const TokenGrid<T>&, std::size_t);                                \
  template TokenGrid<T> zone_merge(const Tensor<T>&, std::size_t, std::size_t, std::size_t);      \
  template Tensor<T> group_temporal(const Tensor<T>&);                                            \
  template Tensor<T> ungroup_temporal(const Tensor<T>&, std::size_t);                             \
  template Tensor<T> group_spatial(const Tensor<T>&);                                             \
  template Tensor<T> ungroup_spatial(const Tensor<T>&, std::size_t);                              \
  template Tensor<T> attention_core(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);        \
  template struct MultiHeadAttention<T>;                                                          \
  template struct FeedForward<T>;                                                                 \
  template struct TransformerBlock<T>;                                                            \
  template TokenGrid<T> temporal_block(const TokenGrid<T>&, const TransformerBlock<T>&, std::size_t); \
  template TokenGrid<T> spatial_block(const TokenGrid<T>&, const TransformerBlock<T>&, std::size_t);  \
  template struct HierarchicalEncoder<T>;                                                         \
  template struct FrameDecoder<T>;                                                                \
  template class Generator<T>;

DSTT_INSTANTIATE_MODEL(float)
DSTT_INSTANTIATE_MODEL(double)

#undef DSTT_INSTANTIATE_MODEL

}  // namespace dstt
