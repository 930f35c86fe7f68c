// Copyright 2026 The DSTT Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <limits>

#include "doctest.h"
#include "dstt/errors.hpp"
#include "dstt/gradcheck.hpp"
#include "dstt/losses.hpp"
#include "dstt/ops.hpp"
#include "support/reference.hpp"

using namespace dstt;
using dstt::test::random_tensor;

namespace {

// Masks with a filled left half of every frame.
Tensord half_masks(std::size_t t, std::size_t h, std::size_t w) {
  Tensord m({t, 1, h, w});
  auto v = m.mutable_data();
  for (std::size_t f = 0; f < t; ++f)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w / 2; ++x) v[(f * h + y) * w + x] = 1.0;
  return m;
}

Tensord random_masks(const Shape& shape, std::uint64_t seed) {
  auto u = random_tensor<double>(shape, seed, 0.0, 1.0);
  std::vector<double> v(u.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = u.data()[i] < 0.3 ? 1.0 : 0.0;
  return Tensord(shape, std::move(v));
}

// Direct evaluation of sum|M (p - y)| / (3 sum M) over explicit indices.
double oracle_masked_l1(const Tensord& p, const Tensord& y, const Tensord& m, bool hole) {
  const auto t = p.size(0), h = p.size(2), w = p.size(3);
  double num = 0.0, mass = 0.0;
  for (std::size_t f = 0; f < t; ++f)
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t c = 0; c < w; ++c) {
        double mv = m.data()[(f * h + r) * w + c];
        if (!hole) mv = 1.0 - mv;
        for (std::size_t ch = 0; ch < 3; ++ch) {
          const std::size_t i = ((f * 3 + ch) * h + r) * w + c;
          num += mv * std::abs(p.data()[i] - y.data()[i]);
          mass += mv;
        }
      }
  return mass == 0.0 ? 0.0 : num / mass;
}

}  // namespace

TEST_CASE("loss_hole examples") {
  auto y = random_tensor<double>({2, 3, 8, 8}, 1);
  auto full = Tensord::full({2, 1, 8, 8}, 1.0);
  CHECK(loss_hole(y, y, full).item() == 0.0);
  CHECK(loss_hole(add_scalar(y, 0.5), y, full).item() == doctest::Approx(0.5).epsilon(1e-12));

  // Error 0.2 inside the hole (left half), 0.9 outside.
  auto masks = half_masks(2, 8, 8);
  std::vector<double> offset(y.numel());
  for (std::size_t i = 0; i < offset.size(); ++i) offset[i] = (i % 8) < 4 ? 0.2 : 0.9;
  auto pred = add(y, Tensord(y.shape(), offset));
  CHECK(std::abs(loss_hole(pred, y, masks).item() - 0.2) < 1e-6);
  CHECK(std::abs(loss_valid(pred, y, masks).item() - 0.9) < 1e-6);
}

TEST_CASE("loss_valid examples and complementary symmetry") {
  auto y = random_tensor<double>({3, 3, 6, 10}, 2);
  auto none = Tensord::zeros({3, 1, 6, 10});
  CHECK(loss_valid(y, y, none).item() == 0.0);
  CHECK(std::abs(loss_valid(add_scalar(y, -0.3), y, none).item() - 0.3) < 1e-6);

  auto m = random_masks({3, 1, 6, 10}, 3);
  auto pred = add_scalar(y, 0.125);
  CHECK(std::abs(loss_hole(pred, y, m).item() - 0.125) < 1e-6);
  CHECK(std::abs(loss_valid(pred, y, m).item() - 0.125) < 1e-6);
}

TEST_CASE("empty regions resolve to zero") {
  auto y = random_tensor<double>({2, 3, 4, 4}, 4);
  auto p = random_tensor<double>({2, 3, 4, 4}, 5);
  CHECK(loss_hole(p, y, Tensord::zeros({2, 1, 4, 4})).item() == 0.0);
  CHECK(loss_valid(p, y, Tensord::full({2, 1, 4, 4}, 1.0)).item() == 0.0);

  // Still differentiable (zero gradient) so a combined loss can backpropagate.
  Tensord leaf = p.detach();
  leaf.set_requires_grad(true);
  loss_hole(leaf, y, Tensord::zeros({2, 1, 4, 4})).backward();
  for (double g : leaf.grad()) CHECK(g == 0.0);
}

TEST_CASE("masked losses match a direct oracle on random inputs") {
  for (std::uint64_t seed = 10; seed < 20; ++seed) {
    auto y = random_tensor<double>({3, 3, 7, 9}, seed);
    auto p = random_tensor<double>({3, 3, 7, 9}, seed + 100);
    auto m = random_masks({3, 1, 7, 9}, seed + 200);
    CHECK(std::abs(loss_hole(p, y, m).item() - oracle_masked_l1(p, y, m, true)) < 1e-12);
    CHECK(std::abs(loss_valid(p, y, m).item() - oracle_masked_l1(p, y, m, false)) < 1e-12);
  }
}

TEST_CASE("hole loss ignores the valid region and is non-negative") {
  for (std::uint64_t seed = 30; seed < 40; ++seed) {
    auto y = random_tensor<double>({2, 3, 8, 8}, seed);
    auto p = random_tensor<double>({2, 3, 8, 8}, seed + 1);
    auto m = random_masks({2, 1, 8, 8}, seed + 2);
    const double base_hole = loss_hole(p, y, m).item();
    const double base_valid = loss_valid(p, y, m).item();
    CHECK(base_hole >= 0.0);
    CHECK(base_valid >= 0.0);

    // Overwrite every valid pixel with noise: hole loss must not move at all.
    auto noise = random_tensor<double>({2, 3, 8, 8}, seed + 3);
    std::vector<double> q(p.data().begin(), p.data().end());
    for (std::size_t f = 0; f < 2; ++f)
      for (std::size_t ch = 0; ch < 3; ++ch)
        for (std::size_t i = 0; i < 64; ++i)
          if (m.data()[f * 64 + i] == 0.0) q[(f * 3 + ch) * 64 + i] = noise.data()[(f * 3 + ch) * 64 + i];
    CHECK(loss_hole(Tensord(p.shape(), q), y, m).item() == base_hole);

    // Zero iff equal on the region: copy the target into the hole only.
    std::vector<double> r(p.data().begin(), p.data().end());
    for (std::size_t f = 0; f < 2; ++f)
      for (std::size_t ch = 0; ch < 3; ++ch)
        for (std::size_t i = 0; i < 64; ++i)
          if (m.data()[f * 64 + i] == 1.0) r[(f * 3 + ch) * 64 + i] = y.data()[(f * 3 + ch) * 64 + i];
    CHECK(loss_hole(Tensord(p.shape(), r), y, m).item() == 0.0);
    CHECK(loss_valid(Tensord(p.shape(), r), y, m).item() == base_valid);
  }
}

TEST_CASE("loss operand validation") {
  auto y = random_tensor<double>({2, 3, 4, 4}, 6);
  CHECK_THROWS_AS(loss_hole(y, random_tensor<double>({2, 3, 4, 5}, 7), Tensord({2, 1, 4, 4})), ShapeError);
  CHECK_THROWS_AS(loss_hole(y, y, Tensord({2, 1, 4, 5})), ShapeError);
  CHECK_THROWS_AS(loss_hole(y, y, Tensord::full({2, 1, 4, 4}, 0.5)), ContractError);
}

TEST_CASE("masked loss gradients match finite differences") {
  auto y = random_tensor<double>({2, 3, 5, 5}, 8);
  auto m = random_masks({2, 1, 5, 5}, 9);
  auto p = random_tensor<double>({2, 3, 5, 5}, 10);
  auto hole = check_gradients(
      "loss_hole", [&](const std::vector<Tensord>& in) { return loss_hole(in[0], y, m); }, {p});
  auto valid = check_gradients(
      "loss_valid", [&](const std::vector<Tensord>& in) { return loss_valid(in[0], y, m); }, {p});
  CHECK(hole.passed);
  CHECK(valid.passed);
}

TEST_CASE("gan losses at zero logits") {
  auto zero = Tensord::zeros({3, 1, 2, 2});
  auto [d, adv] = gan_losses(zero, zero);
  CHECK(std::abs(d.item() - 2.0 * std::log(2.0)) < 1e-9);
  CHECK(std::abs(adv.item() - std::log(2.0)) < 1e-9);
}

TEST_CASE("gan losses limits, signs and stability") {
  auto big = Tensord::full({4}, 50.0);
  CHECK(adversarial_loss(big).item() < 1e-20);
  CHECK(discriminator_loss(big, scale(big, -1.0)).item() < 1e-20);

  auto fake = random_tensor<double>({64}, 11, -50.0, 50.0);
  auto real = random_tensor<double>({64}, 12, -50.0, 50.0);
  auto [d, adv] = gan_losses(real, fake);
  CHECK(std::isfinite(d.item()));
  CHECK(std::isfinite(adv.item()));
  auto [df, advf] = gan_losses(cast<float>(real), cast<float>(fake));
  CHECK(std::isfinite(df.item()));
  CHECK(std::isfinite(advf.item()));

  Tensord leaf = fake.detach();
  leaf.set_requires_grad(true);
  adversarial_loss(leaf).backward();
  for (double g : leaf.grad()) CHECK(g < 0.0);

  // -log sigmoid(x) evaluated directly where it is safe.
  auto small = random_tensor<double>({16}, 13, -5.0, 5.0);
  double expect = 0.0;
  for (double x : small.data()) expect += std::log1p(std::exp(-x));
  CHECK(std::abs(adversarial_loss(small).item() - expect / 16.0) < 1e-12);
}

TEST_CASE("gan loss gradients match finite differences") {
  auto real = random_tensor<double>({2, 1, 3, 3}, 14, -3.0, 3.0);
  auto fake = random_tensor<double>({2, 1, 3, 3}, 15, -3.0, 3.0);
  auto d = check_gradients(
      "discriminator_loss",
      [](const std::vector<Tensord>& in) { return discriminator_loss(in[0], in[1]); }, {real, fake});
  auto a = check_gradients(
      "adversarial_loss", [](const std::vector<Tensord>& in) { return adversarial_loss(in[0]); }, {fake});
  CHECK(d.passed);
  CHECK(a.passed);
}

TEST_CASE("total generator loss") {
  const LossWeights defaults;
  CHECK(defaults.hole == 1.0);
  CHECK(defaults.valid == 1.0);
  CHECK(defaults.adversarial == 0.01);

  GeneratorLossTerms<double> terms{Tensord::scalar(0.2), Tensord::scalar(0.1), Tensord::scalar(0.7)};
  CHECK(std::abs(total_generator_loss(terms, defaults).item() - 0.307) < 1e-12);

  LossWeights recon;
  recon.adversarial = 0.0;
  GeneratorLossTerms<double> no_adv{Tensord::scalar(0.2), Tensord::scalar(0.1), Tensord()};
  CHECK(std::abs(total_generator_loss(no_adv, recon).item() - 0.3) < 1e-12);
  CHECK_THROWS_AS(total_generator_loss(no_adv, defaults), ContractError);

  auto y = random_tensor<double>({2, 3, 4, 4}, 16);
  auto m = random_masks({2, 1, 4, 4}, 17);
  GeneratorLossTerms<double> perfect{loss_hole(y, y, m), loss_valid(y, y, m),
                                     adversarial_loss(Tensord::full({2, 1, 1, 1}, 60.0))};
  CHECK(total_generator_loss(perfect, defaults).item() < 1e-20);
}

TEST_CASE("loss weights json") {
  LossWeights w;
  w.adversarial = 0.5;
  const auto back = LossWeights::from_json(w.to_json());
  CHECK(back.adversarial == 0.5);
  CHECK(back.hole == 1.0);
  CHECK(LossWeights::from_json(nlohmann::json::object()).adversarial == 0.01);
  CHECK_THROWS_AS(LossWeights::from_json({{"valid", -1.0}}), ConfigError);
}

TEST_CASE("discriminator shape trace") {
  SeededRng rng(20);
  Discriminator<float> disc(rng);
  auto clip = random_tensor<float>({5, 3, 48, 48}, 21);
  CHECK(disc(clip).shape() == Shape{5, 1, 6, 6});
  CHECK(disc(random_tensor<float>({2, 3, 24, 40}, 22)).shape() == Shape{2, 1, 3, 5});
  CHECK_THROWS_AS(disc(random_tensor<float>({1, 3, 48, 48}, 23)), ConfigError);
  CHECK_THROWS_AS(disc(random_tensor<float>({5, 4, 48, 48}, 23)), ShapeError);
}

TEST_CASE("discriminator with zero parameters emits zero logits") {
  SeededRng rng(24);
  Discriminator<double> disc(rng);
  for (auto& [name, value] : disc.parameters().items()) {
    Tensord p = value;
    for (double& v : p.mutable_data()) v = 0.0;
  }
  auto logits = disc(random_tensor<double>({3, 3, 16, 16}, 25));
  for (double v : logits.data()) CHECK(v == 0.0);
}

TEST_CASE("discriminator matches a direct convolution chain") {
  SeededRng rng(26);
  Discriminator<double> disc(rng);
  auto clip = random_tensor<double>({3, 3, 16, 16}, 27);
  const auto& p = disc.parameters();

  // Direct oracle: (1,3,t,h,w) layout, three convolutions, leaky relu.
  std::vector<double> vol(clip.numel());
  for (std::size_t f = 0; f < 3; ++f)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < 256; ++i) vol[(c * 3 + f) * 256 + i] = clip.data()[(f * 3 + c) * 256 + i];
  Tensord x({1, 3, 3, 16, 16}, vol);
  const Shape stride{1, 2, 2}, pad{1, 2, 2};
  auto lrelu = [](std::vector<double> v) {
    for (auto& e : v) e = e > 0 ? e : 0.2 * e;
    return v;
  };
  auto h1 = lrelu(test::direct_conv3d(x, *p.find("conv0.weight"),
                                      *p.find("conv0.bias"), stride, pad));
  Tensord x1({1, 32, 3, 8, 8}, h1);
  auto h2 = lrelu(test::direct_conv3d(x1, *p.find("conv1.weight"),
                                      *p.find("conv1.bias"), stride, pad));
  Tensord x2({1, 64, 3, 4, 4}, h2);
  auto h3 = test::direct_conv3d(x2, *p.find("conv2.weight"),
                                *p.find("conv2.bias"), stride, pad);
  auto logits = disc(clip);
  REQUIRE(logits.shape() == Shape{3, 1, 2, 2});
  for (std::size_t i = 0; i < h3.size(); ++i) CHECK(std::abs(logits.data()[i] - h3[i]) < 1e-12);
}

TEST_CASE("discriminator weight gradients match finite differences") {
  SeededRng rng(28);
  Discriminator<double> disc(rng);
  SeededRng bias_rng(29);
  std::vector<Tensord> params;
  for (auto& [name, value] : disc.parameters().items()) {
    Tensord p = value;
    if (name.ends_with(".bias")) {
      for (double& v : p.mutable_data()) {
        v = (bias_rng.uniform() < 0.5 ? -1.0 : 1.0) * bias_rng.uniform(0.05, 0.15);
      }
    }
    params.push_back(p);
  }
  auto clip = random_tensor<double>({2, 3, 12, 12}, 30);
  auto fake = random_tensor<double>({2, 3, 12, 12}, 31);
  auto loss = [&] { return discriminator_loss(disc(clip), disc(fake)); };
  GradCheckOptions options;
  options.max_entries = 24;
  const auto result = check_gradients("discriminator", loss, params, options);
  INFO("error " << result.max_rel_error << " skipped " << result.entries_skipped);
  CHECK(result.passed);
}
