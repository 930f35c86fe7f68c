// Copyright 2026 The DSTT Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "dstt/bench.hpp"
#include "dstt/errors.hpp"
#include "dstt/gradsuite.hpp"
#include "dstt/metrics.hpp"
#include "dstt/trainer.hpp"
#include "dstt/video.hpp"

namespace dstt::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kDefaultSynthSeed = 1234;

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonOptions& common, const std::string& config_help) {
  cmd->add_option("--config", common.config_path, config_help)->type_name("FILE");
  cmd->add_option("--set", common.overrides, "Override a config key after the file is read (repeatable)")
      ->type_name("KEY=VALUE")
      ->allow_extra_args(false)
      ->take_all();
  cmd->add_option("--seed", common.seed, "Seed for every random draw of this command")->type_name("N");
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
  }
}

// File contents (checked against the schema) with overrides applied.
json user_config(const CommonOptions& common, const json& schema) {
  json user = json::object();
  if (!common.config_path.empty()) {
    user = read_json_file(common.config_path);
    if (!user.is_object()) throw ConfigError("config file " + common.config_path + " must hold a JSON object");
    check_known_keys(user, schema);
  }
  for (const auto& o : common.overrides) apply_override(user, schema, o);
  return user;
}

std::string format_db(double db) {
  if (std::isinf(db)) return "inf";
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << db;
  return os.str();
}

json db_json(double db) { return std::isinf(db) ? json("inf") : json(db); }

void echo_config(std::ostream& out, const json& config) { out << "config: " << config.dump() << '\n'; }

// ---------------------------------------------------------------- synth

json synth_schema() {
  json schema = SynthSpec{}.to_json();
  schema["masks"] = MaskDistribution{}.to_json();
  schema["seed"] = kDefaultSynthSeed;
  return schema;
}

int cmd_synth(const CommonOptions& common, const std::string& out_dir, std::ostream& out) {
  json user = user_config(common, synth_schema());
  if (common.seed) user["seed"] = *common.seed;
  const std::uint64_t seed = user.value("seed", kDefaultSynthSeed);
  const MaskDistribution dist = MaskDistribution::from_json(user.value("masks", json::object()));
  user.erase("masks");
  user.erase("seed");
  const SynthSpec spec = SynthSpec::from_json(user);
  spec.validate();

  json effective = spec.to_json();
  effective["masks"] = dist.to_json();
  effective["seed"] = seed;
  echo_config(out, effective);

  SeededRng rng(seed);
  const auto clips = synth_dataset(rng, spec);
  SeededRng mask_rng = rng.fork();
  for (std::size_t i = 0; i < clips.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "clip_%05zu", i);
    const fs::path dir = fs::path(out_dir) / name;
    save_clip(clips[i], dir);
    save_masks(sample_masks(mask_rng, spec.frames, spec.height, spec.width, dist), dir);
  }
  out << "wrote " << clips.size() << " clips of " << spec.frames << " frames to " << out_dir << '\n';
  return kOk;
}

// ---------------------------------------------------------------- train

std::string step_file_name(std::uint64_t step) {
  char name[32];
  std::snprintf(name, sizeof name, "step_%06llu.ckpt", static_cast<unsigned long long>(step));
  return name;
}

Checkpoint with_config(const Checkpoint& ckpt, const TrainConfig& cfg) {
  Checkpoint out;
  for (const auto& r : ckpt.records()) {
    if (r.name != "meta/config") out.add(r);
  }
  out.add_bytes("meta/config", cfg.to_json().dump());
  return out;
}

int cmd_train(const CommonOptions& common, const std::string& resume, int log_every, std::ostream& out) {
  const json schema = TrainConfig{}.to_json();
  std::optional<Checkpoint> ckpt;
  json user = json::object();
  if (!resume.empty()) {
    ckpt = Checkpoint::load(resume);
    try {
      user = json::parse(ckpt->get_bytes("meta/config"));
    } catch (const json::exception& e) {
      throw DataError("checkpoint " + resume + " has an unreadable config: " + e.what());
    }
  }
  user.update(user_config(common, schema), true);
  if (common.seed) user["seed"] = *common.seed;
  const TrainConfig cfg = TrainConfig::from_json(user);
  echo_config(out, cfg.to_json());

  auto videos = training_videos(cfg);
  std::unique_ptr<Trainer> trainer;
  if (ckpt) {
    trainer = Trainer::from_checkpoint(with_config(*ckpt, cfg), std::move(videos));
  } else {
    trainer = std::make_unique<Trainer>(cfg, std::move(videos));
  }

  const fs::path dir(cfg.out_dir);
  fs::create_directories(dir);
  {
    std::ofstream cfg_out(dir / "config.json");
    cfg_out << cfg.to_json().dump(2) << '\n';
  }
  const fs::path csv_path = dir / "loss.csv";
  const bool append = ckpt && fs::exists(csv_path);
  std::ofstream csv(csv_path, append ? std::ios::app : std::ios::trunc);
  if (!csv) throw DataError("cannot write " + csv_path.string());
  if (!append) csv << "step,lr,l_hole,l_valid,l_adv,l_d\n";
  csv << std::setprecision(std::numeric_limits<double>::max_digits10);

  while (trainer->steps_done() < cfg.steps) {
    const StepReport r = trainer->step();
    csv << r.step << ',' << r.lr << ',' << r.l_hole << ',' << r.l_valid << ',' << r.l_adv << ',' << r.l_d << '\n';
    if ((log_every > 0 && r.step % static_cast<std::uint64_t>(log_every) == 0) || r.step == cfg.steps) {
      out << "step " << r.step << " lr " << r.lr << " l_hole " << r.l_hole << " l_valid " << r.l_valid
          << " l_adv " << r.l_adv << " l_d " << r.l_d << '\n';
    }
    if (cfg.checkpoint_every > 0 && r.step % cfg.checkpoint_every == 0 && r.step != cfg.steps) {
      trainer->to_checkpoint().save(dir / step_file_name(r.step));
    }
  }
  csv.flush();
  const fs::path final_path = dir / "final.ckpt";
  trainer->to_checkpoint().save(final_path);
  out << "saved " << final_path.string() << " after " << trainer->steps_done() << " steps\n";
  return kOk;
}

// ---------------------------------------------------------------- infer

struct InferArgs {
  std::string checkpoint, frames_dir, masks_dir, out_dir, truth_dir;
};

int cmd_infer(const InferArgs& a, std::ostream& out) {
  const Checkpoint ckpt = Checkpoint::load(a.checkpoint);
  const Tensorf frames = load_clip(a.frames_dir);
  const std::size_t t = frames.size(0), h = frames.size(2), w = frames.size(3);
  const Tensorf masks = load_masks(a.masks_dir, t);
  if (fs::exists(fs::path(a.masks_dir) / mask_file_name(t))) {
    std::size_t n = t;
    while (fs::exists(fs::path(a.masks_dir) / mask_file_name(n))) ++n;
    throw DataError("found " + std::to_string(n) + " masks for " + std::to_string(t) + " frames");
  }

  const ModelConfig stored = load_generator(ckpt)->config();
  const std::size_t unit = 12 * static_cast<std::size_t>(stored.zone_split);
  if (h % unit != 0 || w % unit != 0) {
    throw DataError("frames are " + std::to_string(h) + "x" + std::to_string(w) + ", not divisible by 12*s = " +
                    std::to_string(unit));
  }
  const auto gen = load_generator(ckpt, static_cast<int>(h), static_cast<int>(w));
  echo_config(out, {{"checkpoint", a.checkpoint},
                    {"frames", a.frames_dir},
                    {"masks", a.masks_dir},
                    {"out_dir", a.out_dir},
                    {"truth", a.truth_dir},
                    {"model", gen->config().to_json()}});

  const Tensorf corrupted = corrupt(frames, masks);
  Tensorf prediction;
  {
    NoGradGuard no_grad;
    prediction = gen->forward(corrupted, masks);
  }
  const Tensorf completed = composite(prediction, corrupted, masks);
  save_clip(completed, a.out_dir);
  out << "wrote " << t << " completed frames to " << a.out_dir << '\n';

  const Tensorf reference = a.truth_dir.empty() ? frames : load_clip(a.truth_dir);
  if (reference.shape() != frames.shape()) {
    throw DataError("ground truth " + shape_str(reference.shape()) + " does not match frames " +
                    shape_str(frames.shape()));
  }
  double hole = 0.0;
  for (float m : masks.data()) hole += m;
  const double p_network = psnr(prediction, reference), p_completed = psnr(completed, reference);
  const double p_8bit = psnr_8bit(completed, reference), s_completed = ssim(completed, reference);
  const json metrics = {{"reference", a.truth_dir.empty() ? "frames" : "truth"},
                        {"hole_fraction", hole / static_cast<double>(masks.numel())},
                        {"psnr_network", db_json(p_network)},
                        {"psnr", db_json(p_completed)},
                        {"psnr_8bit", db_json(p_8bit)},
                        {"ssim", s_completed}};
  out << "psnr (network output) " << format_db(p_network) << " dB\n";
  out << "psnr (completed) " << format_db(p_completed) << " dB, 8-bit " << format_db(p_8bit) << " dB\n";
  out << "ssim (completed) " << std::fixed << std::setprecision(4) << s_completed << '\n';
  out << "metrics: " << metrics.dump() << '\n';
  return kOk;
}

// ---------------------------------------------------------------- gradcheck

int cmd_gradcheck(const CommonOptions& common, std::ostream& out) {
  json user = user_config(common, GradSuiteConfig{}.to_json());
  if (common.seed) user["seed"] = *common.seed;
  const GradSuiteConfig cfg = GradSuiteConfig::from_json(user);
  echo_config(out, cfg.to_json());
  const auto report = run_gradient_suite(cfg);
  std::size_t passed = 0;
  for (const auto& r : report.results) {
    passed += r.passed;
    out << (r.passed ? "ok   " : "FAIL ") << r.name << " max_rel_error " << std::scientific << std::setprecision(3)
        << r.max_rel_error << std::defaultfloat << " checked " << r.entries_checked << " skipped "
        << r.entries_skipped << '\n';
  }
  out << "gradcheck: " << passed << '/' << report.results.size() << " passed in " << std::fixed
      << std::setprecision(1) << report.seconds << " s\n";
  return report.passed() ? kOk : kVerifyFailed;
}

// ---------------------------------------------------------------- bench

json bench_defaults() {
  return {{"configs", default_bench_grid()}, {"repeats", BenchOptions{}.repeats}, {"seed", BenchOptions{}.seed}};
}

int cmd_bench(const CommonOptions& common, const std::string& csv_path, std::ostream& out) {
  json effective = bench_defaults();
  if (!common.config_path.empty()) {
    json file = read_json_file(common.config_path);
    if (file.is_array()) file = json{{"configs", file}};
    if (!file.is_object()) throw ConfigError("bench grid must be an array of configs or an object");
    check_known_keys(file, effective);
    effective.update(file);
  }
  for (const auto& o : common.overrides) apply_override(effective, effective, o);
  if (common.seed) effective["seed"] = *common.seed;

  std::vector<BenchConfig> grid;
  BenchOptions options;
  try {
    grid = effective.at("configs").get<std::vector<BenchConfig>>();
    options.repeats = effective.at("repeats").get<int>();
    options.seed = effective.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bench config: ") + e.what());
  }
  if (grid.empty()) throw ConfigError("bench config: no configs");
  echo_config(out, {{"configs", grid}, {"repeats", options.repeats}, {"seed", options.seed}});

  const auto report = run_bench(grid, options);
  const std::string csv = report.to_csv();
  fs::path path(csv_path);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  {
    std::ofstream f(path);
    if (!f) throw DataError("cannot write " + path.string());
    f << csv;
  }
  fs::path json_path = path;
  json_path.replace_extension(".json");
  {
    std::ofstream f(json_path);
    if (!f) throw DataError("cannot write " + json_path.string());
    f << report.to_json().dump(2) << '\n';
  }
  out << csv;
  for (const auto& r : report.rows) {
    const auto& c = r.config;
    out << "t=" << c.t << " s=" << c.s << " n=" << c.n << " d=" << c.d << ": ratio " << r.ratio_num << '/'
        << r.ratio_den << (r.exact() ? ", counts exact" : ", COUNT MISMATCH") << ", decoupled "
        << (r.decoupled_faster() ? "faster" : "not faster") << " than coupled\n";
  }
  out << "wrote " << path.string() << " and " << json_path.string() << '\n';
  return report.all_exact() ? kOk : kVerifyFailed;
}

int report_error(std::ostream& err, const std::string& what, int code) {
  err << "error: " << what << '\n';
  return code;
}

}  // namespace

void check_known_keys(const json& given, const json& schema, const std::string& prefix) {
  if (!given.is_object() || !schema.is_object()) return;
  for (const auto& [key, value] : given.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!schema.contains(key)) throw ConfigError("unknown config key '" + path + "'");
    check_known_keys(value, schema.at(key), path);
  }
}

void apply_override(json& target, const json& schema, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' is not of the form key=value");
  }
  const std::string key = assignment.substr(0, eq), raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;
  }

  std::vector<std::string> parts;
  std::stringstream ss(key);
  for (std::string part; std::getline(ss, part, '.');) parts.push_back(part);

  json* node = &target;
  const json* shape = &schema;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const std::string& part = parts[i];
    const bool last = i + 1 == parts.size();
    if (shape && shape->is_array()) {
      std::size_t index = 0;
      try {
        std::size_t used = 0;
        index = std::stoul(part, &used);
        if (used != part.size()) throw std::invalid_argument(part);
      } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': '" + part + "' is not an array index");
      }
      if (!node->is_array() || index >= node->size()) {
        throw ConfigError("config key '" + key + "': index " + part + " is out of range");
      }
      node = &(*node)[index];
      shape = shape->empty() ? nullptr : &(*shape)[std::min(index, shape->size() - 1)];
    } else {
      if (!shape || !shape->is_object() || !shape->contains(part)) {
        throw ConfigError("unknown config key '" + key + "'");
      }
      shape = &shape->at(part);
      if (!node->is_object()) *node = json::object();
      node = &(*node)[part];
    }
    if (last) *node = value;
  }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app("Video inpainting with separate per-frame and per-zone attention blocks", "dstt");
  app.require_subcommand(1);

  CommonOptions synth_opts, train_opts, grad_opts, bench_opts;
  std::string synth_out, train_resume, bench_out;
  int train_log_every = 100;
  InferArgs infer_args;

  auto* synth = app.add_subcommand("synth", "Render a synthetic dataset of frame and mask directories");
  add_common(synth, synth_opts, "Dataset spec JSON (clips, frames, height, width, objects, masks, seed)");
  synth->add_option("out_dir", synth_out, "Destination; one clip_NNNNN directory per clip")->required();

  auto* train = app.add_subcommand("train", "Train a generator; writes loss.csv and checkpoints to out_dir");
  add_common(train, train_opts, "Training config JSON");
  train->add_option("--resume", train_resume, "Continue from a training checkpoint")->type_name("CKPT");
  train->add_option("--log-every", train_log_every, "Print losses every N steps (0: only the last)")
      ->type_name("N")
      ->check(CLI::NonNegativeNumber);

  auto* infer = app.add_subcommand("infer", "Complete masked frames with a trained generator");
  infer->add_option("checkpoint", infer_args.checkpoint, "Training or generator checkpoint")->required();
  infer->add_option("frames_dir", infer_args.frames_dir, "Directory of frame_NNNNN.ppm")->required();
  infer->add_option("masks_dir", infer_args.masks_dir, "Directory of mask_NNNNN.pgm (255 = hole)")->required();
  infer->add_option("out_dir", infer_args.out_dir, "Destination for completed frames")->required();
  infer->add_option("--truth", infer_args.truth_dir, "Ground-truth frames for PSNR/SSIM (default: the input frames)")
      ->type_name("DIR");

  auto* grad = app.add_subcommand("gradcheck", "Compare analytic gradients with finite differences");
  add_common(grad, grad_opts, "Gradient check config JSON");

  auto* bench = app.add_subcommand("bench", "Count and time attention MACs for each grouping");
  add_common(bench, bench_opts, "Bench grid JSON: an array of {t,s,n,d} or {configs, repeats, seed}");
  bench->add_option("out_csv", bench_out, "CSV report path; a JSON summary is written next to it")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    return report_error(err, std::string(e.what()) + " (run with --help for usage)", kUsageError);
  }

  try {
    if (synth->parsed()) return cmd_synth(synth_opts, synth_out, out);
    if (train->parsed()) return cmd_train(train_opts, train_resume, train_log_every, out);
    if (infer->parsed()) return cmd_infer(infer_args, out);
    if (grad->parsed()) return cmd_gradcheck(grad_opts, out);
    if (bench->parsed()) return cmd_bench(bench_opts, bench_out, out);
  } catch (const ConfigError& e) {
    return report_error(err, e.what(), kUsageError);
  } catch (const json::exception& e) {
    return report_error(err, std::string("config: ") + e.what(), kUsageError);
  } catch (const std::exception& e) {
    return report_error(err, e.what(), kDataError);
  }
  return report_error(err, "no subcommand given", kUsageError);
}

}  // namespace dstt::cli
