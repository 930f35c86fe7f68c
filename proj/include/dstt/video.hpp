// Copyright 2026 The DSTT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dstt/rng.hpp"
#include "dstt/tensor.hpp"
#include "json.hpp"

namespace dstt {

// Clips are (t, 3, h, w) float tensors in [-1, 1]; mask sequences are
// (t, 1, h, w) with 1 marking a hole pixel and 0 a valid one.

/// 8-bit interleaved raster: 3 channels for P6, 1 for P5.
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 0;
  std::vector<std::uint8_t> pixels;
};

/// Parses binary PPM (P6) or PGM (P5) with maxval 255. Comments in the
/// header are accepted. Throws ParseError with the failing byte offset.
Image parse_netpbm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_netpbm(const Image& image);

/// Throws DataError when the file cannot be read or written.
Image read_netpbm(const std::filesystem::path& path);
void write_netpbm(const std::filesystem::path& path, const Image& image);

/// p -> 2p/255 - 1.
float pixel_to_unit(std::uint8_t p);
/// Inverse map with round-half-up after clamping to [-1, 1].
std::uint8_t unit_to_pixel(float v);

std::string frame_file_name(std::size_t index);  // frame_00000.ppm
std::string mask_file_name(std::size_t index);   // mask_00000.pgm

/// Reads frame_00000.ppm, frame_00001.ppm, ... until the first gap.
/// Throws DataError if there is no first frame and ContractError if frame
/// sizes disagree.
Tensorf load_clip(const std::filesystem::path& dir);
/// Reads exactly `count` masks; a missing file throws DataError naming the
/// frame ("mask frame 00003 not found"). Pixels >= 128 are holes.
Tensorf load_masks(const std::filesystem::path& dir, std::size_t count);
void save_clip(const Tensorf& clip, const std::filesystem::path& dir);
void save_masks(const Tensorf& masks, const std::filesystem::path& dir);

/// Rounds every value to the nearest 8-bit level, as save/load would.
Tensorf quantize_clip(const Tensorf& clip);

/// `count` axis-aligned squares with side uniform in [min_side, max_side]
/// and uniformly placed inside the frame; every frame gets the same squares.
Tensorf gen_stationary_square_masks(SeededRng& rng, std::size_t t, std::size_t h, std::size_t w,
                                    std::size_t count, std::size_t min_side, std::size_t max_side);

/// Training-time mask distribution. Sides are fractions of min(h, w).
struct MaskDistribution {
  std::size_t min_count = 1;
  std::size_t max_count = 4;
  double min_side_fraction = 1.0 / 8.0;
  double max_side_fraction = 1.0 / 3.0;

  nlohmann::json to_json() const;
  static MaskDistribution from_json(const nlohmann::json& j);
};

Tensorf sample_masks(SeededRng& rng, std::size_t t, std::size_t h, std::size_t w,
                     const MaskDistribution& dist);

/// X = Y * (1 - M): hole pixels become 0, valid pixels are copied exactly.
Tensorf corrupt(const Tensorf& clip, const Tensorf& masks);

/// Throws ShapeError unless masks is (t, 1, h, w) for a (t, 3, h, w) clip,
/// and ContractError if any mask value is not 0 or 1.
void check_aligned(const Tensorf& clip, const Tensorf& masks);

enum class ObjectShape { kRectangle, kDisc };

/// A textured object moving at constant velocity. Positions are the top-left
/// corner (rectangle) or centre (disc) in pixels at frame 0.
struct SceneObject {
  ObjectShape shape = ObjectShape::kRectangle;
  double x = 0.0, y = 0.0;
  double width = 8.0, height = 8.0;  // disc radius is width / 2
  double vx = 0.0, vy = 0.0;
  float color[3] = {0.5f, 0.5f, 0.5f};
  // Stripe texture in object coordinates; amplitude 0 gives a flat colour.
  double stripe_period = 4.0;
  double stripe_angle = 0.0;
  double stripe_amplitude = 0.0;
};

/// Linear gradient between two colours along `angle`.
struct Background {
  float from[3] = {-0.5f, -0.5f, -0.5f};
  float to[3] = {0.5f, 0.5f, 0.5f};
  double angle = 0.0;
};

struct Scene {
  Background background;
  std::vector<SceneObject> objects;  // painted in order
};

/// Rasterizes `frames` frames of the scene; pixel centres are sampled at
/// (x + 0.5, y + 0.5). Values are clamped to [-1, 1] and 8-bit quantized.
Tensorf render_clip(const Scene& scene, std::size_t frames, std::size_t h, std::size_t w);

struct SynthSpec {
  std::size_t clips = 8;
  std::size_t frames = 8;
  std::size_t height = 48;
  std::size_t width = 48;
  std::size_t min_objects = 1;
  std::size_t max_objects = 3;
  double max_speed = 2.0;
  double max_stripe_amplitude = 0.4;

  void validate() const;
  nlohmann::json to_json() const;
  static SynthSpec from_json(const nlohmann::json& j);
};

/// Random scene drawn from the spec's distribution.
Scene random_scene(SeededRng& rng, const SynthSpec& spec);

/// Pure function of (rng state, spec).
std::vector<Tensorf> synth_dataset(SeededRng& rng, const SynthSpec& spec);

struct TrainingSample {
  Tensorf target;     // Y
  Tensorf masks;      // M
  Tensorf corrupted;  // X = Y * (1 - M)
  std::size_t start = 0;  // first frame of the window within the video
};

/// Contiguous window of `t` frames at a uniform random start plus fresh
/// masks. Throws ContractError if the video is shorter than `t`.
TrainingSample sample_training_clip(const Tensorf& video, SeededRng& rng, std::size_t t,
                                    const MaskDistribution& dist = {});

}  // namespace dstt
