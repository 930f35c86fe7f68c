// Copyright 2026 The DSTT Authors
// SPDX-License-Identifier: Apache-2.0

#include "dstt/video.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <numbers>

#include "dstt/errors.hpp"
#include "dstt/ops.hpp"

namespace dstt {

namespace {

constexpr std::size_t kMaxExtent = 1 << 16;

class HeaderReader {
 public:
  explicit HeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t offset() const { return pos_; }

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const auto c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n' && bytes_[pos_] != '\r') ++pos_;
      } else if (is_space(c)) {
        ++pos_;
      } else {
        return;
      }
    }
  }

  std::size_t read_number(const char* what) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    std::size_t value = 0;
    while (pos_ < bytes_.size() && bytes_[pos_] >= '0' && bytes_[pos_] <= '9') {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > kMaxExtent) throw ParseError(std::string(what) + " is too large", start);
      ++pos_;
    }
    if (pos_ == start) {
      if (pos_ >= bytes_.size()) throw ParseError(std::string("truncated header before ") + what, pos_);
      throw ParseError(std::string("expected ") + what, pos_);
    }
    return value;
  }

  void expect_single_space() {
    if (pos_ >= bytes_.size()) throw ParseError("truncated header after maxval", pos_);
    if (!is_space(bytes_[pos_])) throw ParseError("expected whitespace after maxval", pos_);
    ++pos_;
  }

 private:
  static bool is_space(std::uint8_t c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 2;
};

std::string index_str(std::size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%05zu", index);
  return buf;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory " + dir.string() + ": " + ec.message());
}

}  // namespace

Image parse_netpbm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2) throw ParseError("truncated magic number", bytes.size());
  if (bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw ParseError("unsupported magic number (expected P5 or P6)", 0);
  }
  Image img;
  img.channels = bytes[1] == '6' ? 3 : 1;
  HeaderReader header(bytes);
  img.width = header.read_number("width");
  if (img.width == 0) throw ParseError("width must be positive", header.offset() - 1);
  img.height = header.read_number("height");
  if (img.height == 0) throw ParseError("height must be positive", header.offset() - 1);
  const std::size_t maxval_at = (header.skip_space_and_comments(), header.offset());
  const std::size_t maxval = header.read_number("maxval");
  if (maxval != 255) {
    throw ParseError("unsupported maxval " + std::to_string(maxval) + " (expected 255)", maxval_at);
  }
  header.expect_single_space();
  const std::size_t begin = header.offset();
  const std::size_t need = img.width * img.height * img.channels;
  if (bytes.size() - begin < need) {
    throw ParseError("truncated pixel data: " + std::to_string(need) + " bytes expected, " +
                         std::to_string(bytes.size() - begin) + " present",
                     bytes.size());
  }
  img.pixels.assign(bytes.begin() + begin, bytes.begin() + begin + need);
  return img;
}

std::vector<std::uint8_t> encode_netpbm(const Image& image) {
  if ((image.channels != 1 && image.channels != 3) ||
      image.pixels.size() != image.width * image.height * image.channels) {
    throw ContractError("encode_netpbm: inconsistent image buffer");
  }
  const std::string header = std::string(image.channels == 3 ? "P6" : "P5") + "\n" +
                             std::to_string(image.width) + " " + std::to_string(image.height) +
                             "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.pixels.begin(), image.pixels.end());
  return out;
}

Image read_netpbm(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return parse_netpbm(bytes);
  } catch (const ParseError& e) {
    throw ParseError(path.filename().string() + ": malformed image", e.offset());
  }
}

void write_netpbm(const std::filesystem::path& path, const Image& image) {
  const auto bytes = encode_netpbm(image);
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("cannot write " + path.string());
}

float pixel_to_unit(std::uint8_t p) { return 2.0f * (static_cast<float>(p) / 255.0f) - 1.0f; }

std::uint8_t unit_to_pixel(float v) {
  const double clamped = std::clamp(static_cast<double>(v), -1.0, 1.0);
  return static_cast<std::uint8_t>(std::floor((clamped + 1.0) * 127.5 + 0.5));
}

std::string frame_file_name(std::size_t index) { return "frame_" + index_str(index) + ".ppm"; }
std::string mask_file_name(std::size_t index) { return "mask_" + index_str(index) + ".pgm"; }

Tensorf load_clip(const std::filesystem::path& dir) {
  std::vector<Image> frames;
  while (std::filesystem::exists(dir / frame_file_name(frames.size()))) {
    Image img = read_netpbm(dir / frame_file_name(frames.size()));
    if (img.channels != 3) {
      throw DataError(frame_file_name(frames.size()) + " is not a colour (P6) image");
    }
    if (!frames.empty() && (img.width != frames[0].width || img.height != frames[0].height)) {
      throw ContractError("frame " + index_str(frames.size()) + " is " + std::to_string(img.width) +
                          "x" + std::to_string(img.height) + ", frame 00000 is " +
                          std::to_string(frames[0].width) + "x" + std::to_string(frames[0].height));
    }
    frames.push_back(std::move(img));
  }
  if (frames.empty()) throw DataError("frame 00000 not found in " + dir.string());
  const std::size_t t = frames.size(), h = frames[0].height, w = frames[0].width;
  std::vector<float> data(t * 3 * h * w);
  for (std::size_t f = 0; f < t; ++f)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < h * w; ++i) {
        data[(f * 3 + c) * h * w + i] = pixel_to_unit(frames[f].pixels[i * 3 + c]);
      }
  return Tensorf({t, 3, h, w}, std::move(data));
}

Tensorf load_masks(const std::filesystem::path& dir, std::size_t count) {
  if (count == 0) throw ContractError("load_masks: count must be positive");
  std::vector<float> data;
  std::size_t h = 0, w = 0;
  for (std::size_t f = 0; f < count; ++f) {
    const auto path = dir / mask_file_name(f);
    if (!std::filesystem::exists(path)) throw DataError("mask frame " + index_str(f) + " not found");
    const Image img = read_netpbm(path);
    if (img.channels != 1) throw DataError(mask_file_name(f) + " is not a greyscale (P5) image");
    if (f == 0) {
      h = img.height;
      w = img.width;
      data.reserve(count * h * w);
    } else if (img.height != h || img.width != w) {
      throw ContractError("mask " + index_str(f) + " size differs from mask 00000");
    }
    for (auto p : img.pixels) data.push_back(p >= 128 ? 1.0f : 0.0f);
  }
  return Tensorf({count, 1, h, w}, std::move(data));
}

void save_clip(const Tensorf& clip, const std::filesystem::path& dir) {
  if (clip.dim() != 4 || clip.size(1) != 3) {
    throw ShapeError("save_clip: expected (t,3,h,w), got " + shape_str(clip.shape()));
  }
  ensure_dir(dir);
  const std::size_t t = clip.size(0), h = clip.size(2), w = clip.size(3);
  for (std::size_t f = 0; f < t; ++f) {
    Image img{w, h, 3, std::vector<std::uint8_t>(h * w * 3)};
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < h * w; ++i) {
        img.pixels[i * 3 + c] = unit_to_pixel(clip.data()[(f * 3 + c) * h * w + i]);
      }
    write_netpbm(dir / frame_file_name(f), img);
  }
}

void save_masks(const Tensorf& masks, const std::filesystem::path& dir) {
  if (masks.dim() != 4 || masks.size(1) != 1) {
    throw ShapeError("save_masks: expected (t,1,h,w), got " + shape_str(masks.shape()));
  }
  ensure_dir(dir);
  const std::size_t t = masks.size(0), h = masks.size(2), w = masks.size(3);
  for (std::size_t f = 0; f < t; ++f) {
    Image img{w, h, 1, std::vector<std::uint8_t>(h * w)};
    for (std::size_t i = 0; i < h * w; ++i) img.pixels[i] = masks.data()[f * h * w + i] >= 0.5f ? 255 : 0;
    write_netpbm(dir / mask_file_name(f), img);
  }
}

Tensorf quantize_clip(const Tensorf& clip) {
  std::vector<float> out(clip.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = pixel_to_unit(unit_to_pixel(clip.data()[i]));
  return Tensorf(clip.shape(), std::move(out));
}

Tensorf gen_stationary_square_masks(SeededRng& rng, std::size_t t, std::size_t h, std::size_t w,
                                    std::size_t count, std::size_t min_side, std::size_t max_side) {
  if (t == 0 || h == 0 || w == 0) throw ConfigError("mask sequence extents must be positive");
  if (count == 0) throw ConfigError("mask count must be positive");
  if (min_side == 0 || min_side > max_side) {
    throw ConfigError("mask sides need 1 <= min_side <= max_side, got [" + std::to_string(min_side) +
                      ", " + std::to_string(max_side) + "]");
  }
  if (max_side > std::min(h, w)) {
    throw ConfigError("mask side " + std::to_string(max_side) + " exceeds frame " +
                      std::to_string(h) + "x" + std::to_string(w));
  }
  std::vector<float> frame(h * w, 0.0f);
  for (std::size_t k = 0; k < count; ++k) {
    const auto side = static_cast<std::size_t>(rng.uniform_int(min_side, max_side));
    const auto top = static_cast<std::size_t>(rng.uniform_int(0, h - side));
    const auto left = static_cast<std::size_t>(rng.uniform_int(0, w - side));
    for (std::size_t y = top; y < top + side; ++y)
      std::fill_n(frame.begin() + y * w + left, side, 1.0f);
  }
  std::vector<float> data;
  data.reserve(t * h * w);
  for (std::size_t f = 0; f < t; ++f) data.insert(data.end(), frame.begin(), frame.end());
  return Tensorf({t, 1, h, w}, std::move(data));
}

nlohmann::json MaskDistribution::to_json() const {
  return {{"min_count", min_count},
          {"max_count", max_count},
          {"min_side_fraction", min_side_fraction},
          {"max_side_fraction", max_side_fraction}};
}

MaskDistribution MaskDistribution::from_json(const nlohmann::json& j) {
  MaskDistribution d;
  d.min_count = j.value("min_count", d.min_count);
  d.max_count = j.value("max_count", d.max_count);
  d.min_side_fraction = j.value("min_side_fraction", d.min_side_fraction);
  d.max_side_fraction = j.value("max_side_fraction", d.max_side_fraction);
  if (d.min_count == 0 || d.min_count > d.max_count) throw ConfigError("masks: need 1 <= min_count <= max_count");
  if (!(d.min_side_fraction > 0.0 && d.min_side_fraction <= d.max_side_fraction &&
        d.max_side_fraction <= 1.0)) {
    throw ConfigError("masks: need 0 < min_side_fraction <= max_side_fraction <= 1");
  }
  return d;
}

Tensorf sample_masks(SeededRng& rng, std::size_t t, std::size_t h, std::size_t w,
                     const MaskDistribution& dist) {
  const double extent = static_cast<double>(std::min(h, w));
  const auto count = static_cast<std::size_t>(rng.uniform_int(dist.min_count, dist.max_count));
  const auto min_side = std::max<std::size_t>(1, static_cast<std::size_t>(dist.min_side_fraction * extent));
  const auto max_side = std::max(min_side, static_cast<std::size_t>(dist.max_side_fraction * extent));
  return gen_stationary_square_masks(rng, t, h, w, count, min_side, max_side);
}

void check_aligned(const Tensorf& clip, const Tensorf& masks) {
  if (clip.dim() != 4 || clip.size(1) != 3) {
    throw ShapeError("clip must be (t,3,h,w), got " + shape_str(clip.shape()));
  }
  const Shape expect{clip.size(0), 1, clip.size(2), clip.size(3)};
  if (masks.shape() != expect) {
    throw ShapeError("masks " + shape_str(masks.shape()) + " do not align with clip " +
                     shape_str(clip.shape()));
  }
  for (float m : masks.data()) {
    if (m != 0.0f && m != 1.0f) throw ContractError("masks must be binary");
  }
}

Tensorf corrupt(const Tensorf& clip, const Tensorf& masks) {
  check_aligned(clip, masks);
  const std::size_t t = clip.size(0), plane = clip.size(2) * clip.size(3);
  std::vector<float> out(clip.data().begin(), clip.data().end());
  for (std::size_t f = 0; f < t; ++f)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < plane; ++i) {
        if (masks.data()[f * plane + i] != 0.0f) out[(f * 3 + c) * plane + i] = 0.0f;
      }
  return Tensorf(clip.shape(), std::move(out));
}

Tensorf render_clip(const Scene& scene, std::size_t frames, std::size_t h, std::size_t w) {
  if (frames == 0 || h == 0 || w == 0) throw ConfigError("render_clip: extents must be positive");
  const std::size_t plane = h * w;
  std::vector<float> data(frames * 3 * plane);
  const double ca = std::cos(scene.background.angle), sa = std::sin(scene.background.angle);
  for (std::size_t f = 0; f < frames; ++f) {
    float* frame = data.data() + f * 3 * plane;
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const double u = (x + 0.5) / w - 0.5, v = (y + 0.5) / h - 0.5;
        const double a = std::clamp(u * ca + v * sa + 0.5, 0.0, 1.0);
        for (std::size_t c = 0; c < 3; ++c) {
          frame[c * plane + y * w + x] = static_cast<float>(
              (1.0 - a) * scene.background.from[c] + a * scene.background.to[c]);
        }
      }
    for (const auto& obj : scene.objects) {
      const double ox = obj.x + obj.vx * f, oy = obj.y + obj.vy * f;
      const double sc = std::cos(obj.stripe_angle), ss = std::sin(obj.stripe_angle);
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          const double px = x + 0.5, py = y + 0.5;
          bool inside;
          if (obj.shape == ObjectShape::kRectangle) {
            inside = px >= ox && px < ox + obj.width && py >= oy && py < oy + obj.height;
          } else {
            const double r = obj.width / 2.0;
            inside = (px - ox) * (px - ox) + (py - oy) * (py - oy) <= r * r;
          }
          if (!inside) continue;
          const double phase =
              2.0 * std::numbers::pi * ((px - ox) * sc + (py - oy) * ss) / obj.stripe_period;
          const double shade = obj.stripe_amplitude * std::sin(phase);
          for (std::size_t c = 0; c < 3; ++c) {
            frame[c * plane + y * w + x] = static_cast<float>(obj.color[c] + shade);
          }
        }
    }
  }
  return quantize_clip(Tensorf({frames, 3, h, w}, std::move(data)));
}

void SynthSpec::validate() const {
  if (clips == 0 || frames == 0 || height == 0 || width == 0) {
    throw ConfigError("synth: clips, frames, height and width must be positive");
  }
  if (min_objects > max_objects) throw ConfigError("synth: min_objects exceeds max_objects");
  if (!(max_speed >= 0.0)) throw ConfigError("synth: max_speed must be non-negative");
  if (!(max_stripe_amplitude >= 0.0)) throw ConfigError("synth: max_stripe_amplitude must be non-negative");
}

nlohmann::json SynthSpec::to_json() const {
  return {{"clips", clips},           {"frames", frames},           {"height", height},
          {"width", width},           {"min_objects", min_objects}, {"max_objects", max_objects},
          {"max_speed", max_speed},   {"max_stripe_amplitude", max_stripe_amplitude}};
}

SynthSpec SynthSpec::from_json(const nlohmann::json& j) {
  SynthSpec s;
  s.clips = j.value("clips", s.clips);
  s.frames = j.value("frames", s.frames);
  s.height = j.value("height", s.height);
  s.width = j.value("width", s.width);
  s.min_objects = j.value("min_objects", s.min_objects);
  s.max_objects = j.value("max_objects", s.max_objects);
  s.max_speed = j.value("max_speed", s.max_speed);
  s.max_stripe_amplitude = j.value("max_stripe_amplitude", s.max_stripe_amplitude);
  s.validate();
  return s;
}

Scene random_scene(SeededRng& rng, const SynthSpec& spec) {
  const double h = static_cast<double>(spec.height), w = static_cast<double>(spec.width);
  Scene scene;
  for (std::size_t c = 0; c < 3; ++c) {
    scene.background.from[c] = static_cast<float>(rng.uniform(-0.8, 0.8));
    scene.background.to[c] = static_cast<float>(rng.uniform(-0.8, 0.8));
  }
  scene.background.angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const auto count = static_cast<std::size_t>(rng.uniform_int(spec.min_objects, spec.max_objects));
  const double span = static_cast<double>(spec.frames - 1);
  for (std::size_t k = 0; k < count; ++k) {
    SceneObject obj;
    obj.shape = rng.uniform() < 0.5 ? ObjectShape::kRectangle : ObjectShape::kDisc;
    obj.width = rng.uniform(std::min(h, w) / 6.0, std::min(h, w) / 3.0);
    obj.height = obj.shape == ObjectShape::kDisc ? obj.width : rng.uniform(h / 6.0, h / 3.0);
    obj.vx = rng.uniform(-spec.max_speed, spec.max_speed);
    obj.vy = rng.uniform(-spec.max_speed, spec.max_speed);
    // The trajectory midpoint lies inside the frame.
    const double lo_x = obj.shape == ObjectShape::kDisc ? obj.width / 2 : 0.0;
    const double lo_y = obj.shape == ObjectShape::kDisc ? obj.height / 2 : 0.0;
    const double mid_x = rng.uniform(lo_x, w - obj.width + lo_x);
    const double mid_y = rng.uniform(lo_y, h - obj.height + lo_y);
    obj.x = mid_x - obj.vx * span / 2.0;
    obj.y = mid_y - obj.vy * span / 2.0;
    for (auto& c : obj.color) c = static_cast<float>(rng.uniform(-0.9, 0.9));
    obj.stripe_period = rng.uniform(3.0, 8.0);
    obj.stripe_angle = rng.uniform(0.0, std::numbers::pi);
    obj.stripe_amplitude = rng.uniform(0.0, spec.max_stripe_amplitude);
    scene.objects.push_back(obj);
  }
  return scene;
}

std::vector<Tensorf> synth_dataset(SeededRng& rng, const SynthSpec& spec) {
  spec.validate();
  std::vector<Tensorf> clips;
  clips.reserve(spec.clips);
  for (std::size_t i = 0; i < spec.clips; ++i) {
    SeededRng clip_rng = rng.fork();
    clips.push_back(render_clip(random_scene(clip_rng, spec), spec.frames, spec.height, spec.width));
  }
  return clips;
}

TrainingSample sample_training_clip(const Tensorf& video, SeededRng& rng, std::size_t t,
                                    const MaskDistribution& dist) {
  if (video.dim() != 4 || video.size(1) != 3) {
    throw ShapeError("video must be (frames,3,h,w), got " + shape_str(video.shape()));
  }
  const std::size_t length = video.size(0);
  if (t == 0 || length < t) {
    throw ContractError("video of " + std::to_string(length) + " frames is shorter than t = " +
                        std::to_string(t));
  }
  TrainingSample sample;
  sample.start = static_cast<std::size_t>(rng.uniform_int(0, length - t));
  sample.target = slice(video, 0, sample.start, sample.start + t);
  sample.masks = sample_masks(rng, t, video.size(2), video.size(3), dist);
  sample.corrupted = corrupt(sample.target, sample.masks);
  return sample;
}

}  // namespace dstt
