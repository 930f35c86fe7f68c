// Copyright 2026 The DSTT Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "doctest.h"
#include "dstt/checkpoint.hpp"
#include "dstt/errors.hpp"
#include "dstt/video.hpp"
#include "support/temp_dir.hpp"

using namespace dstt;
using dstt::test::TempDir;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  Run r;
  r.code = cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Small and fast: 4 base channels, one hierarchy layer, two blocks.
std::vector<std::string> tiny_train_args(const fs::path& out_dir) {
  return {"train",
          "--set", "model.base_channels=4",
          "--set", "model.hierarchy_layers=1",
          "--set", "model.stacking=ts",
          "--set", "data.clips=2",
          "--set", "data.frames=4",
          "--set", "clip_frames=3",
          "--set", "out_dir=" + out_dir.string(),
          "--log-every", "0"};
}

std::vector<std::string> with(std::vector<std::string> args, std::initializer_list<std::string> more) {
  args.insert(args.end(), more);
  return args;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

}  // namespace

TEST_CASE("help lists every flag of every subcommand") {
  const std::vector<std::pair<std::string, std::vector<std::string>>> expected = {
      {"synth", {"--config", "--set", "--seed", "out_dir"}},
      {"train", {"--config", "--set", "--seed", "--resume", "--log-every"}},
      {"infer", {"checkpoint", "frames_dir", "masks_dir", "out_dir", "--truth"}},
      {"gradcheck", {"--config", "--set", "--seed"}},
      {"bench", {"--config", "--set", "--seed", "out_csv"}},
  };
  const auto top = run({"--help"});
  CHECK(top.code == 0);
  for (const auto& [cmd, flags] : expected) {
    CHECK(top.out.find(cmd) != std::string::npos);
    const auto r = run({cmd, "--help"});
    CHECK(r.code == 0);
    for (const auto& f : flags) {
      INFO(cmd << " help lacks " << f);
      CHECK(r.out.find(f) != std::string::npos);
    }
  }
}

TEST_CASE("usage errors exit 1 with an error prefix") {
  for (const auto& args : std::vector<std::vector<std::string>>{
           {}, {"train", "--bogus"}, {"frobnicate"}, {"bench"}, {"synth", "x", "--seed", "abc"}}) {
    const auto r = run(args);
    CHECK(r.code == cli::kUsageError);
    CHECK(r.err.rfind("error:", 0) == 0);
  }
}

TEST_CASE("config errors exit 1") {
  TempDir dir("cli_cfg");
  CHECK(run({"train", "--set", "optim.lrr=1"}).code == cli::kUsageError);
  CHECK(run({"train", "--set", "steps"}).code == cli::kUsageError);
  CHECK(run({"train", "--set", "model.heads=3"}).code == cli::kUsageError);
  CHECK(run({"train", "--config", (dir.path() / "missing.json").string()}).code == cli::kUsageError);
  write_file(dir.path() / "bad.json", "{\"steps\": ");
  const auto r = run({"gradcheck", "--config", (dir.path() / "bad.json").string()});
  CHECK(r.code == cli::kUsageError);
  CHECK(r.err.find("not valid JSON") != std::string::npos);
  write_file(dir.path() / "typo.json", R"({"model": {"hierarchy_layer": 2}})");
  const auto t = run({"train", "--config", (dir.path() / "typo.json").string()});
  CHECK(t.code == cli::kUsageError);
  CHECK(t.err.find("model.hierarchy_layer") != std::string::npos);
}

TEST_CASE("overrides apply after the config file and are echoed") {
  TempDir dir("cli_echo");
  write_file(dir.path() / "spec.json", R"({"clips": 1, "frames": 3, "max_objects": 2})");
  const auto r = run({"synth", "--config", (dir.path() / "spec.json").string(), "--set", "frames=4", "--set",
                      "masks.max_count=2", (dir.path() / "data").string()});
  REQUIRE(r.code == 0);
  const auto line = r.out.substr(0, r.out.find('\n'));
  REQUIRE(line.rfind("config: ", 0) == 0);
  const auto echoed = nlohmann::json::parse(line.substr(8));
  CHECK(echoed["frames"] == 4);
  CHECK(echoed["clips"] == 1);
  CHECK(echoed["max_objects"] == 2);
  CHECK(echoed["masks"]["max_count"] == 2);
  CHECK(fs::exists(dir.path() / "data" / "clip_00000" / frame_file_name(3)));
  CHECK(fs::exists(dir.path() / "data" / "clip_00000" / mask_file_name(3)));
  CHECK_FALSE(fs::exists(dir.path() / "data" / "clip_00000" / frame_file_name(4)));
}

TEST_CASE("apply_override walks objects and arrays") {
  const auto schema = nlohmann::json::parse(R"({"a": {"b": 1, "c": "x"}, "list": [{"n": 1}]})");
  auto target = nlohmann::json::parse(R"({"list": [{"n": 1}, {"n": 2}]})");
  cli::apply_override(target, schema, "a.b=2.5");
  cli::apply_override(target, schema, "a.c=hello world");
  cli::apply_override(target, schema, "list.1.n=7");
  CHECK(target["a"]["b"] == 2.5);
  CHECK(target["a"]["c"] == "hello world");
  CHECK(target["list"][1]["n"] == 7);
  CHECK_THROWS_AS(cli::apply_override(target, schema, "a.d=1"), ConfigError);
  CHECK_THROWS_AS(cli::apply_override(target, schema, "list.5.n=1"), ConfigError);
  CHECK_THROWS_AS(cli::apply_override(target, schema, "list.x.n=1"), ConfigError);
  CHECK_THROWS_AS(cli::apply_override(target, schema, "=1"), ConfigError);
  CHECK_THROWS_AS(cli::check_known_keys(nlohmann::json::parse(R"({"a": {"z": 1}})"), schema), ConfigError);
  CHECK_NOTHROW(cli::check_known_keys(nlohmann::json::parse(R"({"a": {"b": 3}})"), schema));
}

TEST_CASE("synth is reproducible under a seed") {
  TempDir dir("cli_synth");
  auto synth = [&](const std::string& name, const std::string& seed) {
    return run({"synth", "--set", "clips=2", "--set", "frames=3", "--seed", seed, (dir.path() / name).string()});
  };
  REQUIRE(synth("a", "5").code == 0);
  REQUIRE(synth("b", "5").code == 0);
  REQUIRE(synth("c", "6").code == 0);
  for (const auto& file : {frame_file_name(2), mask_file_name(0)}) {
    const auto rel = fs::path("clip_00001") / file;
    CHECK(slurp(dir.path() / "a" / rel) == slurp(dir.path() / "b" / rel));
  }
  CHECK(slurp(dir.path() / "a" / "clip_00000" / frame_file_name(0)) !=
        slurp(dir.path() / "c" / "clip_00000" / frame_file_name(0)));
}

TEST_CASE("train is reproducible and resumes bit-exactly") {
  TempDir dir("cli_train");
  const auto a = dir.path() / "a", b = dir.path() / "b", c = dir.path() / "c";
  REQUIRE(run(with(tiny_train_args(a), {"--set", "steps=4"})).code == 0);
  REQUIRE(run(with(tiny_train_args(b), {"--set", "steps=4"})).code == 0);
  const auto csv = slurp(a / "loss.csv");
  CHECK(csv == slurp(b / "loss.csv"));
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
  CHECK(csv.rfind("step,lr,l_hole,l_valid,l_adv,l_d\n", 0) == 0);
  CHECK(fs::exists(a / "final.ckpt"));
  CHECK(fs::exists(a / "config.json"));

  REQUIRE(run(with(tiny_train_args(c), {"--set", "steps=2"})).code == 0);
  const auto resumed = run({"train", "--resume", (c / "final.ckpt").string(), "--set", "steps=4", "--log-every", "0"});
  REQUIRE(resumed.code == 0);
  CHECK(slurp(c / "loss.csv") == csv);
  const auto uninterrupted = Checkpoint::load(a / "final.ckpt"), resumed_ckpt = Checkpoint::load(c / "final.ckpt");
  REQUIRE(uninterrupted.records().size() == resumed_ckpt.records().size());
  for (const auto& rec : uninterrupted.records()) {
    if (rec.name == "meta/config") continue;  // out_dir differs
    INFO(rec.name);
    CHECK(resumed_ckpt.get(rec.name).payload == rec.payload);
  }

  REQUIRE(run(with(tiny_train_args(dir.path() / "d"), {"--seed", "2", "--set", "steps=4"})).code == 0);
  CHECK(slurp(dir.path() / "d" / "loss.csv") != csv);
}

TEST_CASE("training from synthesized directories matches in-memory data") {
  TempDir dir("cli_dirs");
  REQUIRE(run({"synth", "--set", "clips=2", "--set", "frames=4", "--seed", "77", (dir.path() / "data").string()}).code ==
          0);
  REQUIRE(run(with(tiny_train_args(dir.path() / "mem"), {"--set", "steps=3", "--set", "data.seed=77"})).code == 0);
  REQUIRE(run(with(tiny_train_args(dir.path() / "disk"),
                   {"--set", "steps=3", "--set", "data.dir=" + (dir.path() / "data").string()}))
              .code == 0);
  CHECK(slurp(dir.path() / "mem" / "loss.csv") == slurp(dir.path() / "disk" / "loss.csv"));
}

// One clip and a small generator fitted to it, shared by the infer cases.
struct TrainedModel {
  TempDir dir{"cli_infer"};
  fs::path clip = dir.path() / "data" / "clip_00000";
  bool ok = false;

  TrainedModel() {
    if (run({"synth", "--set", "clips=1", "--set", "frames=6", (dir.path() / "data").string()}).code != 0) return;
    ok = run({"train",
               "--set", "model.base_channels=4",
               "--set", "model.hierarchy_layers=1",
               "--set", "model.stacking=ts",
               "--set", "optim.lr=0.001",
               "--set", "loss.adversarial=0",
               "--set", "steps=300",
               "--set", "data.dir=" + clip.string(),
               "--set", "out_dir=" + (dir.path() / "run").string(),
               "--log-every", "0"})
             .code == 0;
  }
};

const TrainedModel& trained_model() {
  static TrainedModel model;
  return model;
}

TEST_CASE("infer reconstructs an uncorrupted clip and reports metrics") {
  const auto& model = trained_model();
  REQUIRE(model.ok);
  const auto& dir = model.dir;
  const auto& clip = model.clip;
  const auto zero = dir.path() / "zero";
  save_masks(Tensorf({6, 1, 48, 48}), zero);

  const auto r = run({"infer", (dir.path() / "run" / "final.ckpt").string(), clip.string(), zero.string(),
                      (dir.path() / "out").string()});
  REQUIRE(r.code == 0);
  const auto pos = r.out.find("metrics: ");
  REQUIRE(pos != std::string::npos);
  const auto metrics = nlohmann::json::parse(r.out.substr(pos + 9, r.out.find('\n', pos) - pos - 9));
  INFO(r.out);
  REQUIRE(metrics["psnr_network"].is_number());
  CHECK(std::isfinite(metrics["psnr_network"].get<double>()));
  CHECK(metrics["psnr_network"].get<double>() > 18.0);
  // With no holes the completed clip is the input itself.
  CHECK(metrics["psnr"] == "inf");
  CHECK(metrics["ssim"].get<double>() == doctest::Approx(1.0));
  CHECK(slurp(dir.path() / "out" / frame_file_name(5)) == slurp(clip / frame_file_name(5)));

  SUBCASE("masked frames are completed inside the holes only") {
    const auto masked = run({"infer", (dir.path() / "run" / "final.ckpt").string(), clip.string(), clip.string(),
                             (dir.path() / "out2").string(), "--truth", clip.string()});
    REQUIRE(masked.code == 0);
    const auto out = load_clip(dir.path() / "out2");
    const auto in = load_clip(clip);
    const auto masks = load_masks(clip, 6);
    const std::size_t plane = 48 * 48;
    bool valid_kept = true;
    for (std::size_t f = 0; f < 6; ++f)
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < plane; ++i)
          if (masks.data()[f * plane + i] == 0.0f)
            valid_kept = valid_kept && out.data()[(f * 3 + c) * plane + i] == in.data()[(f * 3 + c) * plane + i];
    CHECK(valid_kept);
  }

  SUBCASE("missing mask exits 2") {
    const auto partial = dir.path() / "partial";
    save_masks(Tensorf({3, 1, 48, 48}), partial);
    const auto e = run({"infer", (dir.path() / "run" / "final.ckpt").string(), clip.string(), partial.string(),
                        (dir.path() / "out3").string()});
    CHECK(e.code == cli::kDataError);
    CHECK(e.err == "error: mask frame 00003 not found\n");
  }

  SUBCASE("extra masks exit 2") {
    const auto extra = dir.path() / "extra";
    save_masks(Tensorf({7, 1, 48, 48}), extra);
    const auto e = run({"infer", (dir.path() / "run" / "final.ckpt").string(), clip.string(), extra.string(),
                        (dir.path() / "out4").string()});
    CHECK(e.code == cli::kDataError);
    CHECK(e.err.find("7 masks for 6 frames") != std::string::npos);
  }

  SUBCASE("frame sizes must divide by 12 s") {
    const auto odd = dir.path() / "odd";
    save_clip(Tensorf({2, 3, 36, 36}), odd);
    save_masks(Tensorf({2, 1, 36, 36}), odd);
    const auto e = run({"infer", (dir.path() / "run" / "final.ckpt").string(), odd.string(), odd.string(),
                        (dir.path() / "out5").string()});
    CHECK(e.code == cli::kDataError);
    CHECK(e.err.find("divisible by 12*s = 24") != std::string::npos);
  }

  SUBCASE("other frame sizes run at their own resolution") {
    const auto wide = dir.path() / "wide";
    save_clip(Tensorf({2, 3, 48, 96}), wide);
    save_masks(Tensorf({2, 1, 48, 96}), wide);
    const auto e = run({"infer", (dir.path() / "run" / "final.ckpt").string(), wide.string(), wide.string(),
                        (dir.path() / "out6").string()});
    CHECK(e.code == 0);
    CHECK(load_clip(dir.path() / "out6").shape() == Shape{2, 3, 48, 96});
  }

  SUBCASE("unreadable checkpoint exits 2") {
    write_file(dir.path() / "junk.ckpt", "not a checkpoint");
    const auto e = run({"infer", (dir.path() / "junk.ckpt").string(), clip.string(), clip.string(),
                        (dir.path() / "out7").string()});
    CHECK(e.code == cli::kDataError);
  }
}

TEST_CASE("gradcheck passes on the default config and fails with exit 3 otherwise") {
  const auto ok = run({"gradcheck"});
  INFO(ok.out);
  CHECK(ok.code == 0);
  CHECK(ok.out.find("FAIL") == std::string::npos);
  const auto strict = run({"gradcheck", "--set", "primitives=false", "--set", "tolerance=1e-30"});
  CHECK(strict.code == cli::kVerifyFailed);
  CHECK(strict.out.find("FAIL") != std::string::npos);
}

TEST_CASE("bench writes the full-scale row with ratio 20/9") {
  TempDir dir("cli_bench");
  write_file(dir.path() / "grid.json", R"([{"t": 5, "s": 2, "n": 180, "d": 512}, {"t": 5, "s": 2, "n": 4, "d": 8}])");
  const auto csv_path = dir.path() / "report" / "bench.csv";
  const auto r = run({"bench", "--config", (dir.path() / "grid.json").string(), csv_path.string()});
  REQUIRE(r.code == 0);
  const auto csv = slurp(csv_path);
  std::istringstream lines(csv);
  std::string header, row;
  std::getline(lines, header);
  std::getline(lines, row);
  std::vector<std::string> cols, fields;
  {
    std::istringstream h(header), f(row);
    for (std::string s; std::getline(h, s, ',');) cols.push_back(s);
    for (std::string s; std::getline(f, s, ',');) fields.push_back(s);
  }
  const auto ratio_col = std::find(cols.begin(), cols.end(), "ratio") - cols.begin();
  REQUIRE(static_cast<std::size_t>(ratio_col) < fields.size());
  CHECK(fields[ratio_col].rfind("2.222", 0) == 0);
  CHECK(fields[0] == "5");
  CHECK(fields[2] == "180");
  const auto summary = nlohmann::json::parse(slurp(dir.path() / "report" / "bench.json"));
  CHECK(summary["all_exact"].get<bool>());
  CHECK(summary["rows"][0]["ratio"]["num"] == 20);
  CHECK(summary["rows"][0]["ratio"]["den"] == 9);
}

TEST_CASE("bench MAC counts are reproducible under a seed") {
  TempDir dir("cli_bench_seed");
  auto counts = [&](const std::string& name) {
    REQUIRE(run({"bench", "--set", "configs.5.d=16", "--seed", "3", (dir.path() / name).string()}).code == 0);
    return nlohmann::json::parse(slurp((dir.path() / name).replace_extension(".json")));
  };
  const auto a = counts("a.csv"), b = counts("b.csv");
  REQUIRE(a["rows"].size() == b["rows"].size());
  for (std::size_t i = 0; i < a["rows"].size(); ++i) {
    for (const char* mode : {"temporal", "spatial", "coupled"}) {
      CHECK(a["rows"][i][mode]["measured_macs"] == b["rows"][i][mode]["measured_macs"]);
    }
  }
  CHECK(a["rows"][5]["config"]["d"] == 16);
}
