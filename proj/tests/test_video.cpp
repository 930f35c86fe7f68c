// Copyright 2026 The DSTT Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <fstream>
#include <random>

#include "doctest.h"
#include "dstt/errors.hpp"
#include "dstt/ops.hpp"
#include "dstt/video.hpp"
#include "support/reference.hpp"
#include "support/temp_dir.hpp"

using namespace dstt;
using dstt::test::random_tensor;
using dstt::test::TempDir;

namespace {

std::vector<std::uint8_t> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

std::size_t parse_error_offset(const std::vector<std::uint8_t>& bytes) {
  try {
    parse_netpbm(bytes);
  } catch (const ParseError& e) {
    return e.offset();
  }
  return static_cast<std::size_t>(-1);
}

}  // namespace

TEST_CASE("pixel range map") {
  CHECK(pixel_to_unit(255) == 1.0f);
  CHECK(pixel_to_unit(0) == -1.0f);
  CHECK(std::abs(pixel_to_unit(128) - (2.0 * 128 / 255 - 1)) < 1e-7);
  CHECK(unit_to_pixel(2.0f) == 255);
  CHECK(unit_to_pixel(-3.0f) == 0);
  // Half-way between levels 127 and 128 rounds up.
  CHECK(unit_to_pixel(static_cast<float>(2.0 * 127.5 / 255.0 - 1.0)) == 128);
}

TEST_CASE("pixel roundtrip over every level and between levels") {
  double level_error = 0.0;
  for (int p = 0; p < 256; ++p) {
    const float v = pixel_to_unit(static_cast<std::uint8_t>(p));
    CHECK(unit_to_pixel(v) == p);
    level_error = std::max(level_error, std::abs(double(v) - (2.0 * p / 255.0 - 1.0)));
  }
  CHECK(level_error < 1.0 / 255.0);
  // Arbitrary values move by at most half a level (2/255 apart); the bound
  // is attained exactly at midpoints, so allow float slack there.
  double worst = 0.0;
  for (int i = 0; i <= 100000; ++i) {
    const float v = static_cast<float>(-1.0 + 2.0 * i / 100000.0);
    worst = std::max(worst, std::abs(double(pixel_to_unit(unit_to_pixel(v))) - v));
  }
  CHECK(worst <= 1.0 / 255.0 + 1e-6);
}

TEST_CASE("netpbm parse and encode") {
  Image img{3, 2, 3, {}};
  for (std::uint8_t i = 0; i < 18; ++i) img.pixels.push_back(static_cast<std::uint8_t>(i * 13));
  const auto bytes = encode_netpbm(img);
  const Image back = parse_netpbm(bytes);
  CHECK(back.width == 3);
  CHECK(back.height == 2);
  CHECK(back.channels == 3);
  CHECK(back.pixels == img.pixels);

  // Comments and mixed whitespace in the header.
  auto pgm = bytes_of("P5\n# made by hand\n2\t2 # size\n255\n");
  pgm.insert(pgm.end(), {0, 128, 255, 7});
  const Image grey = parse_netpbm(pgm);
  CHECK(grey.channels == 1);
  CHECK(grey.pixels == std::vector<std::uint8_t>{0, 128, 255, 7});
}

TEST_CASE("netpbm errors carry byte offsets") {
  CHECK(parse_error_offset(bytes_of("P3\n1 1\n255\n")) == 0);
  CHECK(parse_error_offset(bytes_of("GIF89a")) == 0);
  CHECK(parse_error_offset(bytes_of("P6\n1 1\n65535\n")) == 7);
  CHECK(parse_error_offset(bytes_of("P6\n1 x\n255\n")) == 5);
  CHECK(parse_error_offset(bytes_of("P6\n2 2\n255\nabc")) == 14);
  CHECK(parse_error_offset(bytes_of("P6\n0 2\n255\n")) == 3);
  CHECK(parse_error_offset(bytes_of("P")) == 1);
}

TEST_CASE("fuzzed netpbm input never crashes the parser") {
  Image img{5, 4, 3, std::vector<std::uint8_t>(60, 9)};
  const auto valid = encode_netpbm(img);
  std::size_t rejected = 0, accepted = 0;
  // Every truncation of a valid file is rejected.
  for (std::size_t n = 0; n < valid.size(); ++n) {
    std::vector<std::uint8_t> cut(valid.begin(), valid.begin() + n);
    CHECK_THROWS_AS(parse_netpbm(cut), ParseError);
  }
  // Random byte mutations and random garbage: either a clean parse or a ParseError.
  std::mt19937_64 gen(7);
  for (int trial = 0; trial < 20000; ++trial) {
    std::vector<std::uint8_t> bytes = valid;
    if (trial % 4 == 0) {
      bytes.assign(gen() % 64, 0);
      for (auto& b : bytes) b = static_cast<std::uint8_t>(gen());
      if (bytes.size() > 2 && trial % 8 == 0) bytes[0] = 'P', bytes[1] = '6';
    } else {
      const int flips = 1 + static_cast<int>(gen() % 4);
      for (int k = 0; k < flips; ++k) bytes[gen() % 16] = static_cast<std::uint8_t>(gen());
      if (gen() % 2) bytes.resize(gen() % bytes.size());
    }
    try {
      const Image parsed = parse_netpbm(bytes);
      CHECK(parsed.pixels.size() == parsed.width * parsed.height * parsed.channels);
      ++accepted;
    } catch (const ParseError& e) {
      CHECK(e.offset() <= bytes.size());
      ++rejected;
    }
  }
  CHECK(rejected > 0);
  CHECK(accepted > 0);
}

TEST_CASE("clip and mask directories roundtrip") {
  TempDir dir("clip");
  auto clip = random_tensor<float>({3, 3, 10, 14}, 1);
  SeededRng rng(2);
  auto masks = gen_stationary_square_masks(rng, 3, 10, 14, 2, 2, 5);
  save_clip(clip, dir.path());
  save_masks(masks, dir.path());
  CHECK(std::filesystem::exists(dir.path() / "frame_00000.ppm"));
  CHECK(std::filesystem::exists(dir.path() / "mask_00002.pgm"));

  const Tensorf loaded = load_clip(dir.path());
  REQUIRE(loaded.shape() == clip.shape());
  double worst = 0.0;
  for (std::size_t i = 0; i < clip.numel(); ++i) {
    worst = std::max(worst, double(std::abs(loaded.data()[i] - clip.data()[i])));
  }
  CHECK(worst < 1.0 / 255.0);
  const Tensorf mback = load_masks(dir.path(), 3);
  CHECK(std::equal(mback.data().begin(), mback.data().end(), masks.data().begin()));

  // Saving what was loaded is lossless.
  TempDir again("clip_again");
  save_clip(loaded, again.path());
  const Tensorf twice = load_clip(again.path());
  CHECK(std::equal(twice.data().begin(), twice.data().end(), loaded.data().begin()));
}

TEST_CASE("clip loading errors") {
  TempDir dir("errors");
  CHECK_THROWS_AS(load_clip(dir.path()), DataError);

  save_clip(random_tensor<float>({2, 3, 4, 4}, 3), dir.path());
  write_netpbm(dir.path() / frame_file_name(2), Image{5, 4, 3, std::vector<std::uint8_t>(60)});
  CHECK_THROWS_AS(load_clip(dir.path()), ContractError);

  save_masks(Tensorf({4, 1, 4, 4}), dir.path());
  std::filesystem::remove(dir.path() / mask_file_name(3));
  try {
    load_masks(dir.path(), 4);
    FAIL("missing mask accepted");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()) == "mask frame 00003 not found");
  }

  std::ofstream(dir.path() / mask_file_name(0), std::ios::binary) << "P5\n4 4\n15\n";
  CHECK_THROWS_AS(load_masks(dir.path(), 1), ParseError);
}

TEST_CASE("masks are thresholded to binary on load") {
  TempDir dir("threshold");
  Image img{4, 1, 1, {0, 127, 128, 255}};
  write_netpbm(dir.path() / mask_file_name(0), img);
  const Tensorf m = load_masks(dir.path(), 1);
  CHECK(std::vector<float>(m.data().begin(), m.data().end()) == std::vector<float>{0, 0, 1, 1});
}

TEST_CASE("stationary square masks") {
  SeededRng rng(4);
  auto full = gen_stationary_square_masks(rng, 2, 16, 16, 1, 16, 16);
  for (float v : full.data()) CHECK(v == 1.0f);

  SeededRng a(5), b(5);
  auto m1 = gen_stationary_square_masks(a, 5, 24, 32, 3, 3, 10);
  auto m2 = gen_stationary_square_masks(b, 5, 24, 32, 3, 3, 10);
  CHECK(std::equal(m1.data().begin(), m1.data().end(), m2.data().begin()));
  const std::size_t plane = 24 * 32;
  for (std::size_t f = 1; f < 5; ++f) {
    CHECK(std::equal(m1.data().begin(), m1.data().begin() + plane, m1.data().begin() + f * plane));
  }

  CHECK_THROWS_AS(gen_stationary_square_masks(rng, 1, 8, 8, 1, 2, 9), ConfigError);
  CHECK_THROWS_AS(gen_stationary_square_masks(rng, 1, 8, 8, 1, 5, 4), ConfigError);
  CHECK_THROWS_AS(gen_stationary_square_masks(rng, 1, 8, 8, 0, 2, 4), ConfigError);
}

TEST_CASE("single square masks have the drawn geometry") {
  // One square per draw: the hole is a solid square whose side is in range.
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    SeededRng rng(seed);
    auto m = gen_stationary_square_masks(rng, 1, 20, 30, 1, 3, 9);
    std::size_t top = 99, bottom = 0, left = 99, right = 0, mass = 0;
    for (std::size_t y = 0; y < 20; ++y)
      for (std::size_t x = 0; x < 30; ++x) {
        const float v = m.data()[y * 30 + x];
        CHECK((v == 0.0f || v == 1.0f));
        if (v == 1.0f) {
          top = std::min(top, y), bottom = std::max(bottom, y);
          left = std::min(left, x), right = std::max(right, x);
          ++mass;
        }
      }
    const std::size_t side = bottom - top + 1;
    CHECK(side == right - left + 1);
    CHECK(mass == side * side);
    CHECK(side >= 3);
    CHECK(side <= 9);
  }
}

TEST_CASE("sampled masks follow the distribution") {
  MaskDistribution dist;
  SeededRng rng(6);
  for (int i = 0; i < 30; ++i) {
    auto m = sample_masks(rng, 5, 48, 48, dist);
    double mass = 0;
    for (float v : m.data()) {
      CHECK((v == 0.0f || v == 1.0f));
      mass += v;
    }
    // Between one 6x6 square and four 16x16 squares per frame.
    CHECK(mass >= 5 * 36);
    CHECK(mass <= 5 * 4 * 256);
  }
  auto j = dist.to_json();
  CHECK(MaskDistribution::from_json(j).max_count == 4);
  CHECK_THROWS_AS(MaskDistribution::from_json({{"min_count", 5}}), ConfigError);
}

TEST_CASE("corrupt") {
  auto clip = random_tensor<float>({2, 3, 6, 6}, 7);
  auto none = Tensorf({2, 1, 6, 6});
  auto x = corrupt(clip, none);
  CHECK(std::equal(x.data().begin(), x.data().end(), clip.data().begin()));

  auto all = Tensorf::full({2, 1, 6, 6}, 1.0f);
  const auto blank = corrupt(clip, all);
  for (float v : blank.data()) CHECK(v == 0.0f);

  SeededRng rng(8);
  auto m = gen_stationary_square_masks(rng, 2, 6, 6, 2, 1, 4);
  auto once = corrupt(clip, m);
  auto twice = corrupt(once, m);
  CHECK(std::equal(once.data().begin(), once.data().end(), twice.data().begin()));
  for (std::size_t f = 0; f < 2; ++f)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < 36; ++i) {
        const std::size_t k = (f * 3 + c) * 36 + i;
        if (m.data()[f * 36 + i] == 0.0f) CHECK(once.data()[k] == clip.data()[k]);
        else CHECK(once.data()[k] == 0.0f);
      }
  CHECK_THROWS_AS(corrupt(clip, Tensorf({2, 1, 6, 5})), ShapeError);
  CHECK_THROWS_AS(corrupt(clip, Tensorf::full({2, 1, 6, 6}, 0.5f)), ContractError);
}

TEST_CASE("rendered square advances with its velocity") {
  Scene scene;
  scene.background.from[0] = scene.background.from[1] = scene.background.from[2] = -1.0f;
  scene.background.to[0] = scene.background.to[1] = scene.background.to[2] = -1.0f;
  SceneObject square;
  square.x = 4.0;
  square.y = 10.0;
  square.width = square.height = 8.0;
  square.vx = 2.0;
  square.color[0] = square.color[1] = square.color[2] = 1.0f;
  scene.objects.push_back(square);
  auto clip = render_clip(scene, 5, 48, 48);
  for (std::size_t f = 0; f < 5; ++f) {
    // Leftmost lit column of row 12 in channel 0.
    std::size_t first = 48;
    for (std::size_t x = 0; x < 48; ++x) {
      if (clip.data()[(f * 3) * 48 * 48 + 12 * 48 + x] > 0.0f) {
        first = x;
        break;
      }
    }
    CHECK(first == 4 + 2 * f);
  }
}

TEST_CASE("synthetic dataset is deterministic and in range") {
  SynthSpec spec;
  spec.clips = 3;
  spec.frames = 6;
  SeededRng a(9), b(9), c(10);
  auto d1 = synth_dataset(a, spec);
  auto d2 = synth_dataset(b, spec);
  auto d3 = synth_dataset(c, spec);
  REQUIRE(d1.size() == 3);
  bool differs = false;
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(d1[i].shape() == Shape{6, 3, 48, 48});
    CHECK(std::equal(d1[i].data().begin(), d1[i].data().end(), d2[i].data().begin()));
    differs = differs || !std::equal(d1[i].data().begin(), d1[i].data().end(), d3[i].data().begin());
    for (float v : d1[i].data()) {
      CHECK(v >= -1.0f);
      CHECK(v <= 1.0f);
    }
  }
  CHECK(differs);

  // Already on the 8-bit grid: a disk roundtrip is exact.
  TempDir dir("synth");
  save_clip(d1[0], dir.path());
  auto back = load_clip(dir.path());
  CHECK(std::equal(back.data().begin(), back.data().end(), d1[0].data().begin()));

  // Consecutive frames differ: objects move.
  const std::size_t frame = 3 * 48 * 48;
  bool moved = false;
  for (std::size_t i = 0; i < frame; ++i) moved = moved || d1[0].data()[i] != d1[0].data()[frame + i];
  CHECK(moved);

  CHECK(SynthSpec::from_json(spec.to_json()).frames == 6);
  CHECK_THROWS_AS(SynthSpec::from_json({{"clips", 0}}), ConfigError);
}

TEST_CASE("training clip sampling") {
  auto video = random_tensor<float>({9, 3, 12, 12}, 11);
  SeededRng rng(12);
  for (int i = 0; i < 40; ++i) {
    auto s = sample_training_clip(video, rng, 5);
    CHECK(s.start <= 4);
    CHECK(s.target.shape() == Shape{5, 3, 12, 12});
    const std::size_t frame = 3 * 144;
    CHECK(std::equal(s.target.data().begin(), s.target.data().end(),
                     video.data().begin() + s.start * frame));
    auto expect = corrupt(s.target, s.masks);
    CHECK(std::equal(expect.data().begin(), expect.data().end(), s.corrupted.data().begin()));
  }

  auto five = random_tensor<float>({5, 3, 12, 12}, 13);
  auto id = sample_training_clip(five, rng, 5);
  CHECK(id.start == 0);
  CHECK(std::equal(id.target.data().begin(), id.target.data().end(), five.data().begin()));

  SeededRng a(14), b(14);
  auto s1 = sample_training_clip(video, a, 5);
  auto s2 = sample_training_clip(video, b, 5);
  CHECK(s1.start == s2.start);
  CHECK(std::equal(s1.masks.data().begin(), s1.masks.data().end(), s2.masks.data().begin()));

  CHECK_THROWS_AS(sample_training_clip(random_tensor<float>({4, 3, 12, 12}, 15), rng, 5), ContractError);
}
