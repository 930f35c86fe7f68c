// Copyright 2026 The DSTT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "dstt/layers.hpp"
#include "dstt/rng.hpp"
#include "dstt/tensor.hpp"
#include "json.hpp"

namespace dstt {

/// Residual wiring of a Transformer block. `kInputSkip` computes
/// FFN(MSA(P) + P) + P; `kSequential` adds the MSA branch output instead,
/// FFN(MSA(P) + P) + (MSA(P) + P).
enum class ResidualMode { kInputSkip, kSequential };

struct ModelConfig {
  int base_channels = 8;     // c
  int hierarchy_layers = 4;  // L
  int zone_split = 2;        // s
  int token_dim = 16;        // must equal 2c
  int heads = 4;
  int ffn_hidden = 64;
  std::string stacking = "tstststs";
  int frame_h = 48;
  int frame_w = 48;
  ResidualMode residual = ResidualMode::kInputSkip;

  /// Throws ConfigError naming the first violated constraint.
  void validate() const;

  std::size_t token_h() const { return static_cast<std::size_t>(frame_h) / 12; }
  std::size_t token_w() const { return static_cast<std::size_t>(frame_w) / 12; }
  /// Tokens per zone per frame.
  std::size_t zone_tokens() const;

  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; ffn_hidden defaults to 4 * token_dim.
  static ModelConfig from_json(const nlohmann::json& j);
};

/// t x H_tok x W_tok x d token field.
template <typename T>
struct TokenGrid {
  Tensor<T> tokens;

  std::size_t frames() const { return tokens.size(0); }
  std::size_t height() const { return tokens.size(1); }
  std::size_t width() const { return tokens.size(2); }
  std::size_t dim() const { return tokens.size(3); }
};

/// (t, H, W, d) -> (t, s*s, n, d); zone (j, k) of frame i is the contiguous
/// (H/s) x (W/s) sub-block at row j, column k, stored at index j*s + k.
template <typename T>
Tensor<T> zone_split(const TokenGrid<T>& grid, std::size_t s);

/// Inverse of zone_split.
template <typename T>
TokenGrid<T> zone_merge(const Tensor<T>& zones, std::size_t s, std::size_t height, std::size_t width);

/// Zones regrouped along time: (s*s, t*n, d), one group per zone index.
template <typename T>
Tensor<T> group_temporal(const Tensor<T>& zones);
template <typename T>
Tensor<T> ungroup_temporal(const Tensor<T>& groups, std::size_t frames);

/// Zones regrouped per frame: (t, s*s*n, d), one group per frame.
template <typename T>
Tensor<T> group_spatial(const Tensor<T>& zones);
template <typename T>
Tensor<T> ungroup_spatial(const Tensor<T>& groups, std::size_t zones);

/// Scaled dot-product attention for (B, N, dh) operands. The two
/// contractions record exactly 2 * B * N^2 * dh MACs.
template <typename T>
Tensor<T> attention_core(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v);

template <typename T>
struct MultiHeadAttention {
  Linear<T> query, key, value, output;
  std::size_t heads = 1;

  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterSet<T>& params, const std::string& name, std::size_t dim,
                     std::size_t heads, SeededRng& rng);
  /// Self-attention within each group of x: (G, N, d) -> (G, N, d).
  Tensor<T> operator()(const Tensor<T>& x) const;
};

template <typename T>
struct FeedForward {
  Linear<T> hidden, output;

  FeedForward() = default;
  FeedForward(ParameterSet<T>& params, const std::string& name, std::size_t dim, std::size_t width,
              SeededRng& rng);
  Tensor<T> operator()(const Tensor<T>& x) const;
};

enum class BlockKind { kTemporal, kSpatial };

template <typename T>
struct TransformerBlock {
  BlockKind kind = BlockKind::kTemporal;
  MultiHeadAttention<T> attention;
  FeedForward<T> ffn;
  ResidualMode residual = ResidualMode::kInputSkip;

  /// Attention + FFN over grouped tokens (G, N, d).
  Tensor<T> apply_groups(const Tensor<T>& groups) const;
  void zero_output_projections();
};

/// Attention within each zone across all frames; zones never mix.
template <typename T>
TokenGrid<T> temporal_block(const TokenGrid<T>& grid, const TransformerBlock<T>& block, std::size_t s);

/// Attention across all zones of one frame; frames never mix.
template <typename T>
TokenGrid<T> spatial_block(const TokenGrid<T>& grid, const TransformerBlock<T>& block, std::size_t s);

/// Frame-wise convolutional stem + grouped hierarchy + 7x7/3 token embedding.
template <typename T>
struct HierarchicalEncoder {
  std::vector<Conv2d<T>> stem;
  std::vector<Conv2d<T>> hierarchy;
  Conv2d<T> embed;

  HierarchicalEncoder() = default;
  HierarchicalEncoder(ParameterSet<T>& params, const ModelConfig& cfg, SeededRng& rng);
  /// First-level feature F1: (t, 4, h, w) -> (t, c, h/4, w/4).
  Tensor<T> stem_features(const Tensor<T>& frames_with_mask) const;
  /// Feature after all hierarchy layers: (t, 2c, h/4, w/4), or F1 when L == 0.
  Tensor<T> hierarchy_features(const Tensor<T>& first_level) const;
  TokenGrid<T> operator()(const Tensor<T>& frames_with_mask) const;
};

/// Frame-wise decoder: transposed 7x7/3 conv, two (2x nearest upsample +
/// 3x3 conv) stages, 3x3 projection to RGB, tanh.
template <typename T>
struct FrameDecoder {
  ConvTranspose2d<T> expand;
  Conv2d<T> refine1, refine2, to_rgb;
  std::size_t frame_h = 0, frame_w = 0;

  FrameDecoder() = default;
  FrameDecoder(ParameterSet<T>& params, const ModelConfig& cfg, SeededRng& rng);
  Tensor<T> operator()(const TokenGrid<T>& grid) const;
};

template <typename T>
class Generator {
 public:
  Generator(const ModelConfig& cfg, SeededRng& rng);
  Generator(const Generator&) = delete;
  Generator& operator=(const Generator&) = delete;

  TokenGrid<T> encode(const Tensor<T>& frames_with_mask) const { return encoder_(frames_with_mask); }
  /// Applies the blocks left to right in stacking order.
  TokenGrid<T> run_blocks(const TokenGrid<T>& grid) const;
  Tensor<T> decode(const TokenGrid<T>& grid) const { return decoder_(grid); }

  /// clip: (t, 3, h, w) already corrupted; masks: (t, 1, h, w), 1 = hole.
  /// Returns the full-frame prediction (t, 3, h, w) in [-1, 1].
  Tensor<T> forward(const Tensor<T>& clip, const Tensor<T>& masks) const;

  const ModelConfig& config() const { return config_; }
  ParameterSet<T>& parameters() { return params_; }
  const ParameterSet<T>& parameters() const { return params_; }
  const std::vector<TransformerBlock<T>>& blocks() const { return blocks_; }
  const HierarchicalEncoder<T>& encoder() const { return encoder_; }

  /// Zeroes every attention and FFN output projection (blocks become identity).
  void zero_output_projections();

 private:
  ModelConfig config_;
  ParameterSet<T> params_;
  HierarchicalEncoder<T> encoder_;
  std::vector<TransformerBlock<T>> blocks_;
  FrameDecoder<T> decoder_;
};

}  // namespace dstt
