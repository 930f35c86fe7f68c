// Copyright 2026 The DSTT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dstt/checkpoint.hpp"
#include "dstt/losses.hpp"
#include "dstt/model.hpp"
#include "dstt/rng.hpp"
#include "dstt/video.hpp"
#include "json.hpp"

namespace dstt {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t decay_at = 1600;
  double decay_factor = 0.1;

  nlohmann::json to_json() const;
  static AdamConfig from_json(const nlohmann::json& j);
};

/// Base rate before `decay_at`, base * decay_factor from it on.
double lr_schedule(const AdamConfig& cfg, std::uint64_t step);

/// Adam moments aligned index-for-index with a ParameterSet.
struct OptimState {
  std::uint64_t step = 0;  // updates applied so far
  std::vector<Tensorf> m;
  std::vector<Tensorf> v;

  static OptimState zeros_like(const ParameterSet<float>& params);
};

/// One bias-corrected Adam update with lr = lr_schedule(cfg, state.step).
/// Throws ContractError naming the first parameter without a gradient.
void adam_step(ParameterSet<float>& params, OptimState& state, const AdamConfig& cfg);

struct TrainConfig {
  ModelConfig model;
  LossWeights weights;
  AdamConfig optim;
  MaskDistribution masks;
  SynthSpec data;             // used when data_dir is empty
  std::string data_dir;       // directory of clip sub-directories
  std::uint64_t data_seed = 1234;  // synthetic dataset draw
  std::uint64_t seed = 1;          // initialization and sampling
  std::uint64_t steps = 2000;
  std::size_t clip_frames = 5;  // t
  std::size_t batch_clips = 1;
  std::string out_dir = "run";
  std::uint64_t checkpoint_every = 0;  // 0 = only at the end

  /// Throws ConfigError naming the first violated constraint.
  void validate() const;
  nlohmann::json to_json() const;
  /// Missing keys keep their defaults.
  static TrainConfig from_json(const nlohmann::json& j);
};

struct StepReport {
  std::uint64_t step = 0;  // 1-based index of the update just applied
  double lr = 0.0;
  double l_hole = 0.0;
  double l_valid = 0.0;
  double l_adv = 0.0;  // 0 when the adversarial weight is 0
  double l_d = 0.0;    // 0 when the adversarial weight is 0
  double total = 0.0;
};

/// Owns the generator, discriminator, both optimizer states and the data
/// stream. Every reported loss is a pure function of (config, videos).
class Trainer {
 public:
  Trainer(const TrainConfig& cfg, std::vector<Tensorf> videos);

  /// Samples a batch and applies one discriminator then one generator update.
  StepReport step();

  /// The two halves of a step on an explicit batch; `step()` calls both.
  /// The discriminator is skipped when the adversarial weight is 0.
  double discriminator_update(const std::vector<TrainingSample>& batch,
                              const std::vector<Tensorf>& predictions);
  StepReport generator_update(const std::vector<TrainingSample>& batch,
                              const std::vector<Tensorf>& predictions);
  std::vector<TrainingSample> next_batch();
  std::vector<Tensorf> predict(const std::vector<TrainingSample>& batch) const;

  const TrainConfig& config() const { return config_; }
  std::uint64_t steps_done() const { return gen_state_.step; }
  Generator<float>& generator() { return *generator_; }
  Discriminator<float>& discriminator() { return *discriminator_; }
  const OptimState& generator_state() const { return gen_state_; }
  const OptimState& discriminator_state() const { return disc_state_; }
  const std::vector<Tensorf>& videos() const { return videos_; }

  Checkpoint to_checkpoint() const;
  /// Rebuilds a trainer from a checkpoint; the config comes from the
  /// checkpoint's embedded JSON.
  static std::unique_ptr<Trainer> from_checkpoint(const Checkpoint& ckpt, std::vector<Tensorf> videos);

 private:
  void restore(const Checkpoint& ckpt);

  TrainConfig config_;
  std::vector<Tensorf> videos_;
  std::unique_ptr<Generator<float>> generator_;
  std::unique_ptr<Discriminator<float>> discriminator_;
  OptimState gen_state_;
  OptimState disc_state_;
  SeededRng data_rng_;
};

/// Training videos for a config: the synthetic dataset, or every
/// sub-directory of data_dir loaded with load_clip (sorted by name).
std::vector<Tensorf> training_videos(const TrainConfig& cfg);

/// Writes model parameters only (for inference) in checkpoint format.
Checkpoint generator_checkpoint(const Generator<float>& gen);
/// Builds a generator from either a full training checkpoint or a
/// generator-only checkpoint. Non-zero frame extents replace the stored
/// ones; the weights do not depend on frame size.
std::unique_ptr<Generator<float>> load_generator(const Checkpoint& ckpt, int frame_h = 0, int frame_w = 0);

/// Ŷ ⊙ M + X ⊙ (1 − M): network output inside holes, input elsewhere.
Tensorf composite(const Tensorf& prediction, const Tensorf& corrupted, const Tensorf& masks);

}  // namespace dstt
