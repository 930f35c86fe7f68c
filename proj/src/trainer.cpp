// Copyright 2026 The DSTT Authors
// SPDX-License-Identifier: Apache-2.0

#include "dstt/trainer.hpp"

#include <algorithm>
#include <cmath>

#include "dstt/errors.hpp"
#include "dstt/ops.hpp"

namespace dstt {

namespace {

constexpr const char* kGeneratorPrefix = "generator/";
constexpr const char* kDiscriminatorPrefix = "discriminator/";

void save_state(Checkpoint& ckpt, const std::string& tag, const ParameterSet<float>& params,
                const OptimState& state) {
  ckpt.add_u64("opt/" + tag + "/step", state.step);
  const auto& items = params.items();
  for (std::size_t i = 0; i < items.size(); ++i) {
    ckpt.add_f32("opt/" + tag + "/m/" + items[i].name, state.m[i]);
    ckpt.add_f32("opt/" + tag + "/v/" + items[i].name, state.v[i]);
  }
}

// Copies stored values into the live parameter tensors.
void restore_params(const Checkpoint& ckpt, const std::string& prefix, ParameterSet<float>& params) {
  for (auto& [name, value] : params.items()) {
    const Tensorf stored = ckpt.get_f32(prefix + name);
    if (stored.shape() != value.shape()) {
      throw DataError("checkpoint tensor '" + prefix + name + "' has shape " + shape_str(stored.shape()) +
                      ", model expects " + shape_str(value.shape()));
    }
    Tensorf live = value;
    std::copy(stored.data().begin(), stored.data().end(), live.mutable_data().begin());
  }
}

OptimState restore_state(const Checkpoint& ckpt, const std::string& tag, const ParameterSet<float>& params) {
  OptimState state;
  state.step = ckpt.get_u64("opt/" + tag + "/step");
  for (const auto& [name, value] : params.items()) {
    Tensorf m = ckpt.get_f32("opt/" + tag + "/m/" + name);
    Tensorf v = ckpt.get_f32("opt/" + tag + "/v/" + name);
    if (m.shape() != value.shape() || v.shape() != value.shape()) {
      throw DataError("optimizer moments for '" + name + "' do not match the parameter shape");
    }
    state.m.push_back(m);
    state.v.push_back(v);
  }
  return state;
}

// Names of parameters whose value or gradient holds a NaN or Inf.
std::vector<std::string> non_finite_tensors(const ParameterSet<float>& params) {
  std::vector<std::string> bad;
  for (const auto& [name, value] : params.items()) {
    auto finite = [](std::span<const float> xs) {
      return std::all_of(xs.begin(), xs.end(), [](float x) { return std::isfinite(x); });
    };
    if (!finite(value.data())) bad.push_back(name);
    else if (value.has_grad() && !finite(value.grad())) bad.push_back(name + ".grad");
  }
  return bad;
}

[[noreturn]] void numeric_abort(std::uint64_t step, const std::string& what,
                                const std::vector<std::string>& tensors) {
  std::string msg = "non-finite " + what + " at step " + std::to_string(step);
  if (!tensors.empty()) {
    msg += "; offending tensors:";
    for (const auto& t : tensors) msg += " " + t;
  }
  throw NumericError(msg);
}

}  // namespace

nlohmann::json AdamConfig::to_json() const {
  return {{"lr", lr},     {"beta1", beta1},       {"beta2", beta2},
          {"eps", eps},   {"decay_at", decay_at}, {"decay_factor", decay_factor}};
}

AdamConfig AdamConfig::from_json(const nlohmann::json& j) {
  AdamConfig c;
  c.lr = j.value("lr", c.lr);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.eps = j.value("eps", c.eps);
  c.decay_at = j.value("decay_at", c.decay_at);
  c.decay_factor = j.value("decay_factor", c.decay_factor);
  if (!(c.lr > 0.0)) throw ConfigError("optim.lr must be positive");
  if (!(c.beta1 >= 0.0 && c.beta1 < 1.0 && c.beta2 >= 0.0 && c.beta2 < 1.0)) {
    throw ConfigError("optim betas must lie in [0, 1)");
  }
  if (!(c.eps > 0.0)) throw ConfigError("optim.eps must be positive");
  if (!(c.decay_factor > 0.0)) throw ConfigError("optim.decay_factor must be positive");
  return c;
}

double lr_schedule(const AdamConfig& cfg, std::uint64_t step) {
  return step < cfg.decay_at ? cfg.lr : cfg.lr * cfg.decay_factor;
}

OptimState OptimState::zeros_like(const ParameterSet<float>& params) {
  OptimState s;
  for (const auto& item : params.items()) {
    s.m.push_back(Tensorf::zeros(item.value.shape()));
    s.v.push_back(Tensorf::zeros(item.value.shape()));
  }
  return s;
}

void adam_step(ParameterSet<float>& params, OptimState& state, const AdamConfig& cfg) {
  auto& items = params.items();
  if (state.m.size() != items.size() || state.v.size() != items.size()) {
    throw ContractError("adam_step: optimizer state does not match the parameter set");
  }
  for (const auto& item : items) {
    if (!item.value.has_grad()) throw ContractError("adam_step: parameter '" + item.name + "' has no gradient");
  }
  const double lr = lr_schedule(cfg, state.step);
  const double t = static_cast<double>(state.step + 1);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < items.size(); ++i) {
    Tensorf& p = items[i].value;
    const auto g = p.grad();
    auto values = p.mutable_data();
    auto m = state.m[i].mutable_data();
    auto v = state.v[i].mutable_data();
    for (std::size_t k = 0; k < values.size(); ++k) {
      const double gk = g[k];
      const double mk = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * gk;
      const double vk = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * gk * gk;
      m[k] = static_cast<float>(mk);
      v[k] = static_cast<float>(vk);
      const double update = lr * (mk / bc1) / (std::sqrt(vk / bc2) + cfg.eps);
      values[k] = static_cast<float>(values[k] - update);
    }
  }
  ++state.step;
}

void TrainConfig::validate() const {
  model.validate();
  if (batch_clips == 0) throw ConfigError("batch_clips must be positive");
  if (clip_frames == 0) throw ConfigError("clip_frames must be positive");
  if (weights.adversarial > 0.0 && clip_frames < Discriminator<float>::kMinFrames) {
    throw ConfigError("adversarial training needs clip_frames >= 2");
  }
  if (data_dir.empty()) {
    data.validate();
    if (data.height != static_cast<std::size_t>(model.frame_h) ||
        data.width != static_cast<std::size_t>(model.frame_w)) {
      throw ConfigError("data frame size " + std::to_string(data.height) + "x" + std::to_string(data.width) +
                        " differs from model frame size " + std::to_string(model.frame_h) + "x" +
                        std::to_string(model.frame_w));
    }
    if (data.frames < clip_frames) throw ConfigError("data.frames is smaller than clip_frames");
  }
}

nlohmann::json TrainConfig::to_json() const {
  nlohmann::json data_json = data.to_json();
  data_json["dir"] = data_dir;
  data_json["seed"] = data_seed;
  return {{"model", model.to_json()},
          {"loss", weights.to_json()},
          {"optim", optim.to_json()},
          {"masks", masks.to_json()},
          {"data", data_json},
          {"seed", seed},
          {"steps", steps},
          {"clip_frames", clip_frames},
          {"batch_clips", batch_clips},
          {"out_dir", out_dir},
          {"checkpoint_every", checkpoint_every}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  const auto empty = nlohmann::json::object();
  TrainConfig c;
  c.model = ModelConfig::from_json(j.value("model", empty));
  c.weights = LossWeights::from_json(j.value("loss", empty));
  c.optim = AdamConfig::from_json(j.value("optim", empty));
  c.masks = MaskDistribution::from_json(j.value("masks", empty));
  const auto data_json = j.value("data", empty);
  c.data = SynthSpec::from_json(data_json);
  c.data_dir = data_json.value("dir", c.data_dir);
  c.data_seed = data_json.value("seed", c.data_seed);
  c.seed = j.value("seed", c.seed);
  c.steps = j.value("steps", c.steps);
  c.clip_frames = j.value("clip_frames", c.clip_frames);
  c.batch_clips = j.value("batch_clips", c.batch_clips);
  c.out_dir = j.value("out_dir", c.out_dir);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  c.validate();
  return c;
}

Trainer::Trainer(const TrainConfig& cfg, std::vector<Tensorf> videos)
    : config_(cfg), videos_(std::move(videos)) {
  config_.validate();
  if (videos_.empty()) throw DataError("no training videos");
  for (std::size_t i = 0; i < videos_.size(); ++i) {
    const auto& v = videos_[i];
    if (v.dim() != 4 || v.size(1) != 3 || v.size(2) != static_cast<std::size_t>(cfg.model.frame_h) ||
        v.size(3) != static_cast<std::size_t>(cfg.model.frame_w)) {
      throw DataError("training video " + std::to_string(i) + " has shape " + shape_str(v.shape()) +
                      ", expected (n,3," + std::to_string(cfg.model.frame_h) + "," +
                      std::to_string(cfg.model.frame_w) + ")");
    }
    if (v.size(0) < cfg.clip_frames) {
      throw DataError("training video " + std::to_string(i) + " has fewer than clip_frames frames");
    }
  }
  SeededRng master(config_.seed);
  SeededRng gen_rng = master.fork();
  SeededRng disc_rng = master.fork();
  data_rng_ = master.fork();
  generator_ = std::make_unique<Generator<float>>(config_.model, gen_rng);
  discriminator_ = std::make_unique<Discriminator<float>>(disc_rng);
  gen_state_ = OptimState::zeros_like(generator_->parameters());
  disc_state_ = OptimState::zeros_like(discriminator_->parameters());
}

std::vector<TrainingSample> Trainer::next_batch() {
  std::vector<TrainingSample> batch;
  for (std::size_t i = 0; i < config_.batch_clips; ++i) {
    const auto video = static_cast<std::size_t>(data_rng_.uniform_int(0, videos_.size() - 1));
    batch.push_back(sample_training_clip(videos_[video], data_rng_, config_.clip_frames, config_.masks));
  }
  return batch;
}

std::vector<Tensorf> Trainer::predict(const std::vector<TrainingSample>& batch) const {
  std::vector<Tensorf> out;
  for (const auto& s : batch) out.push_back(generator_->forward(s.corrupted, s.masks));
  return out;
}

double Trainer::discriminator_update(const std::vector<TrainingSample>& batch,
                                     const std::vector<Tensorf>& predictions) {
  if (config_.weights.adversarial == 0.0) return 0.0;
  auto& params = discriminator_->parameters();
  params.zero_grad();
  Tensorf loss;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Tensorf term = discriminator_loss((*discriminator_)(batch[i].target),
                                            (*discriminator_)(predictions[i].detach()));
    loss = loss.defined() ? add(loss, term) : term;
  }
  loss = scale(loss, 1.0f / static_cast<float>(batch.size()));
  const double value = loss.item();
  if (!std::isfinite(value)) numeric_abort(disc_state_.step + 1, "discriminator loss", non_finite_tensors(params));
  loss.backward();
  if (auto bad = non_finite_tensors(params); !bad.empty()) {
    numeric_abort(disc_state_.step + 1, "discriminator gradient", bad);
  }
  adam_step(params, disc_state_, config_.optim);
  params.zero_grad();
  return value;
}

StepReport Trainer::generator_update(const std::vector<TrainingSample>& batch,
                                     const std::vector<Tensorf>& predictions) {
  auto& params = generator_->parameters();
  const bool adversarial = config_.weights.adversarial != 0.0;
  const float inv = 1.0f / static_cast<float>(batch.size());
  Tensorf hole, valid, adv;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Tensorf h = loss_hole(predictions[i], batch[i].target, batch[i].masks);
    const Tensorf v = loss_valid(predictions[i], batch[i].target, batch[i].masks);
    hole = hole.defined() ? add(hole, h) : h;
    valid = valid.defined() ? add(valid, v) : v;
    if (adversarial) {
      const Tensorf a = adversarial_loss((*discriminator_)(predictions[i]));
      adv = adv.defined() ? add(adv, a) : a;
    }
  }
  GeneratorLossTerms<float> terms{scale(hole, inv), scale(valid, inv), adv.defined() ? scale(adv, inv) : adv};
  const Tensorf total = total_generator_loss(terms, config_.weights);

  StepReport report;
  report.step = gen_state_.step + 1;
  report.lr = lr_schedule(config_.optim, gen_state_.step);
  report.l_hole = terms.hole.item();
  report.l_valid = terms.valid.item();
  report.l_adv = adversarial ? terms.adversarial.item() : 0.0;
  report.total = total.item();
  if (!std::isfinite(report.total)) {
    std::vector<std::string> names;
    if (!std::isfinite(report.l_hole)) names.push_back("loss_hole");
    if (!std::isfinite(report.l_valid)) names.push_back("loss_valid");
    if (!std::isfinite(report.l_adv)) names.push_back("loss_adv");
    for (auto& n : non_finite_tensors(params)) names.push_back(n);
    numeric_abort(report.step, "generator loss", names);
  }

  params.zero_grad();
  total.backward();
  if (auto bad = non_finite_tensors(params); !bad.empty()) numeric_abort(report.step, "generator gradient", bad);
  adam_step(params, gen_state_, config_.optim);
  params.zero_grad();
  // The adversarial term also deposits gradients on the discriminator.
  discriminator_->parameters().zero_grad();
  return report;
}

StepReport Trainer::step() {
  const auto batch = next_batch();
  const auto predictions = predict(batch);
  const double l_d = discriminator_update(batch, predictions);
  StepReport report = generator_update(batch, predictions);
  report.l_d = l_d;
  return report;
}

Checkpoint Trainer::to_checkpoint() const {
  Checkpoint ckpt;
  ckpt.add_bytes("meta/config", config_.to_json().dump());
  ckpt.add_u64("meta/step", gen_state_.step);
  ckpt.add_u64("meta/rng", data_rng_.state());
  for (const auto& [name, value] : generator_->parameters().items()) ckpt.add_f32(kGeneratorPrefix + name, value);
  for (const auto& [name, value] : discriminator_->parameters().items()) {
    ckpt.add_f32(kDiscriminatorPrefix + name, value);
  }
  save_state(ckpt, "generator", generator_->parameters(), gen_state_);
  save_state(ckpt, "discriminator", discriminator_->parameters(), disc_state_);
  return ckpt;
}

void Trainer::restore(const Checkpoint& ckpt) {
  // Decode everything before touching live state.
  OptimState gen_state = restore_state(ckpt, "generator", generator_->parameters());
  OptimState disc_state = restore_state(ckpt, "discriminator", discriminator_->parameters());
  const std::uint64_t step = ckpt.get_u64("meta/step");
  if (gen_state.step != step) throw DataError("checkpoint step disagrees with optimizer step");
  const std::uint64_t rng_state = ckpt.get_u64("meta/rng");
  for (const auto& [name, value] : generator_->parameters().items()) ckpt.get_f32(kGeneratorPrefix + name);
  for (const auto& [name, value] : discriminator_->parameters().items()) ckpt.get_f32(kDiscriminatorPrefix + name);

  restore_params(ckpt, kGeneratorPrefix, generator_->parameters());
  restore_params(ckpt, kDiscriminatorPrefix, discriminator_->parameters());
  gen_state_ = std::move(gen_state);
  disc_state_ = std::move(disc_state);
  data_rng_.set_state(rng_state);
}

std::unique_ptr<Trainer> Trainer::from_checkpoint(const Checkpoint& ckpt, std::vector<Tensorf> videos) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(ckpt.get_bytes("meta/config"));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint config is not valid JSON: ") + e.what());
  }
  auto trainer = std::make_unique<Trainer>(TrainConfig::from_json(j), std::move(videos));
  trainer->restore(ckpt);
  return trainer;
}

std::vector<Tensorf> training_videos(const TrainConfig& cfg) {
  if (cfg.data_dir.empty()) {
    SeededRng rng(cfg.data_seed);
    return synth_dataset(rng, cfg.data);
  }
  const std::filesystem::path root(cfg.data_dir);
  if (!std::filesystem::is_directory(root)) throw DataError("data directory " + root.string() + " not found");
  if (std::filesystem::exists(root / frame_file_name(0))) return {load_clip(root)};
  std::vector<std::filesystem::path> dirs;
  for (const auto& entry : std::filesystem::directory_iterator(root)) {
    if (entry.is_directory() && std::filesystem::exists(entry.path() / frame_file_name(0))) {
      dirs.push_back(entry.path());
    }
  }
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) throw DataError("no clip directories with " + frame_file_name(0) + " under " + root.string());
  std::vector<Tensorf> videos;
  for (const auto& d : dirs) videos.push_back(load_clip(d));
  return videos;
}

Checkpoint generator_checkpoint(const Generator<float>& gen) {
  Checkpoint ckpt;
  ckpt.add_bytes("meta/model", gen.config().to_json().dump());
  for (const auto& [name, value] : gen.parameters().items()) ckpt.add_f32(kGeneratorPrefix + name, value);
  return ckpt;
}

std::unique_ptr<Generator<float>> load_generator(const Checkpoint& ckpt, int frame_h, int frame_w) {
  ModelConfig cfg;
  try {
    if (ckpt.contains("meta/config")) {
      cfg = ModelConfig::from_json(nlohmann::json::parse(ckpt.get_bytes("meta/config")).at("model"));
    } else {
      cfg = ModelConfig::from_json(nlohmann::json::parse(ckpt.get_bytes("meta/model")));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint model config is unreadable: ") + e.what());
  }
  if (frame_h > 0) cfg.frame_h = frame_h;
  if (frame_w > 0) cfg.frame_w = frame_w;
  cfg.validate();
  SeededRng rng(0);
  auto gen = std::make_unique<Generator<float>>(cfg, rng);
  restore_params(ckpt, kGeneratorPrefix, gen->parameters());
  return gen;
}

Tensorf composite(const Tensorf& prediction, const Tensorf& corrupted, const Tensorf& masks) {
  check_aligned(corrupted, masks);
  if (prediction.shape() != corrupted.shape()) {
    throw ShapeError("composite: prediction " + shape_str(prediction.shape()) + " vs input " +
                     shape_str(corrupted.shape()));
  }
  const std::size_t t = corrupted.size(0), plane = corrupted.size(2) * corrupted.size(3);
  std::vector<float> out(corrupted.data().begin(), corrupted.data().end());
  for (std::size_t f = 0; f < t; ++f)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < plane; ++i) {
        if (masks.data()[f * plane + i] != 0.0f) {
          const std::size_t k = (f * 3 + c) * plane + i;
          out[k] = prediction.data()[k];
        }
      }
  return Tensorf(corrupted.shape(), std::move(out));
}

}  // namespace dstt
