#include <doctest.h>

#include <fstream>
#include <string>
#include <vector>

#include "hydroseg/cli.hpp"
#include "test_util.hpp"

using namespace hydroseg;

namespace {

int run_cli(std::vector<std::string> args) {
  std::vector<char*> argv;
  static std::string prog = "hydroseg";
  argv.push_back(prog.data());
  for (auto& a : args) argv.push_back(a.data());
  return cli::dispatch(int(argv.size()), argv.data());
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(bool(f));
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

// config small enough for test-speed synth/tile/train round trips
std::string tiny_config(const testutil::TempDir& td) {
  const std::string path = td.str("cfg.json");
  std::ofstream f(path);
  f << R"({
  "seed": 11,
  "data": {"n_source_scenes": 2, "n_target_scenes": 2},
  "scene_source": {"size": 64},
  "scene_target": {"size": 64},
  "tile": {"window": 32, "stride": 32},
  "optim": {"base_lr": 2e-3, "warmup_iters": 2, "total_iters": 6, "min_lr": 0.0,
            "batch_size": 2},
  "segformer": {"embed_dims": [8, 16], "heads": [1, 2], "reduction_ratios": [4, 2],
                 "blocks_per_stage": [1, 1], "patch_strides": [4, 2], "decoder_dim": 16,
                 "mlp_expansion": 2},
  "unet": {"depth": 2, "base_channels": 4}
})";
  return path;
}

}  // namespace

TEST_CASE("cli rejects unknown subcommands and flags") {
  CHECK(run_cli({"not-a-command"}) == 2);
  CHECK(run_cli({"synth", "--nope", "x", "--out", "/tmp/x"}) == 2);
  CHECK(run_cli({}) == 2);
}

TEST_CASE("config errors carry their own exit code") {
  testutil::TempDir td("cli_cfg");
  const std::string bad = td.str("bad.json");
  {
    std::ofstream f(bad);
    f << R"({"seed": 1, "tpyo_section": {}})";
  }
  CHECK(run_cli({"synth", "--config", bad, "--out", td.str("out")}) == 3);

  const std::string badkey = td.str("badkey.json");
  {
    std::ofstream f(badkey);
    f << R"({"tile": {"window": 32, "strde": 16}})";
  }
  CHECK(run_cli({"synth", "--config", badkey, "--out", td.str("out")}) == 3);

  CHECK(run_cli({"synth", "--config", td.str("missing.json"), "--out", td.str("out")}) == 4);
}

TEST_CASE("synth then tile produce scene and patch trees") {
  testutil::TempDir td("cli_synth");
  const std::string cfg = tiny_config(td);
  const std::string scenes = td.str("scenes");
  REQUIRE(run_cli({"synth", "--config", cfg, "--out", scenes}) == 0);
  CHECK(std::filesystem::exists(scenes + "/src0.png"));
  CHECK(std::filesystem::exists(scenes + "/src0_mask.png"));
  CHECK(std::filesystem::exists(scenes + "/tgt1_mask.png"));
  CHECK(std::filesystem::exists(scenes + "/manifest.jsonl"));
  CHECK(std::filesystem::exists(scenes + "/config.json"));

  // manifest lines parse and carry the expected fields
  std::ifstream mf(scenes + "/manifest.jsonl");
  std::string line;
  int lines = 0;
  while (std::getline(mf, line)) {
    auto j = ordered_json::parse(line);
    CHECK(j.contains("image"));
    CHECK(j.contains("domain"));
    CHECK(j.contains("seed"));
    ++lines;
  }
  CHECK(lines == 4);

  const std::string patches = td.str("patches");
  REQUIRE(run_cli({"tile", "--config", cfg, "--in", scenes, "--out", patches}) == 0);
  CHECK(std::filesystem::exists(patches + "/manifest.jsonl"));
  std::ifstream pf(patches + "/manifest.jsonl");
  int train_lines = 0, val_lines = 0, total = 0;
  while (std::getline(pf, line)) {
    auto j = ordered_json::parse(line);
    CHECK(j.at("origin").size() == 2);
    const std::string split = j.at("split").get<std::string>();
    train_lines += split == "train";
    val_lines += split == "val";
    CHECK(std::filesystem::exists(patches + "/" + j.at("image").get<std::string>()));
    CHECK(std::filesystem::exists(patches + "/" + j.at("mask").get<std::string>()));
    ++total;
  }
  CHECK(total == train_lines + val_lines);
  CHECK(train_lines >= val_lines);  // 9:1 split

  // augment a patch for visual variants
  std::ifstream pf2(patches + "/manifest.jsonl");
  std::getline(pf2, line);
  auto j0 = ordered_json::parse(line);
  const std::string aug = td.str("aug");
  REQUIRE(run_cli({"augment", "--config", cfg, "--image",
                   patches + "/" + j0.at("image").get<std::string>(), "--mask",
                   patches + "/" + j0.at("mask").get<std::string>(), "--count", "3", "--out",
                   aug}) == 0);
  CHECK(std::filesystem::exists(aug + "/aug0.png"));
  CHECK(std::filesystem::exists(aug + "/aug2_mask.png"));
}

TEST_CASE("train, eval, finetune round trip through checkpoints") {
  testutil::TempDir td("cli_train");
  const std::string cfg = tiny_config(td);
  const std::string scenes = td.str("scenes");
  const std::string patches = td.str("patches");
  REQUIRE(run_cli({"synth", "--config", cfg, "--out", scenes}) == 0);
  REQUIRE(run_cli({"tile", "--config", cfg, "--in", scenes, "--out", patches}) == 0);
  const std::string ckpt = td.str("m/seg.ckpt");
  REQUIRE(run_cli({"train", "--config", cfg, "--data", patches, "--stage", "scratch",
                   "--model", "segformer", "--iters", "4", "--out", ckpt}) == 0);
  CHECK(std::filesystem::exists(ckpt));
  CHECK(std::filesystem::exists(td.str("m/seg_history.csv")));
  CHECK(std::filesystem::exists(td.str("m/seg_loss.svg")));

  const std::string evald = td.str("eval");
  REQUIRE(run_cli({"eval", "--config", cfg, "--checkpoint", ckpt, "--data", patches, "--out",
                   evald}) == 0);
  auto ej = ordered_json::parse(slurp(evald + "/eval.json"));
  CHECK(ej.contains("water"));
  CHECK(ej.contains("background"));
  CHECK(slurp(evald + "/eval.csv").find("class,iou,f1,precision,recall") == 0);

  // finetune from the checkpoint (same architecture)
  const std::string ft = td.str("m/ft.ckpt");
  REQUIRE(run_cli({"train", "--config", cfg, "--data", patches, "--stage", "finetune",
                   "--init", ckpt, "--iters", "2", "--out", ft}) == 0);
  CHECK(std::filesystem::exists(ft));

  // loading the segformer checkpoint as a unet must fail
  CHECK(run_cli({"train", "--config", cfg, "--data", patches, "--stage", "finetune", "--model",
                 "unet", "--init", ckpt, "--iters", "2", "--out", td.str("m/bad.ckpt")}) == 1);
}

TEST_CASE("analyze emits stats and an svg curve") {
  testutil::TempDir td("cli_an");
  // straight 3-wide river across the full width
  LabelMask m(96, 40);
  for (int y = 19; y < 22; ++y)
    for (int x = 0; x < 96; ++x) m.set(x, y, 1);
  const std::string mask_path = td.str("river_mask.png");
  save_mask(m, mask_path);
  const std::string out = td.str("analysis");
  REQUIRE(run_cli({"analyze", "--mask", mask_path, "--out", out}) == 0);
  auto j = ordered_json::parse(slurp(out + "/analysis.json"));
  CHECK(j.at("total_length").get<double>() > 90.0);
  CHECK(j.at("water_area").get<int64_t>() == m.water_count());
  CHECK(j.at("stat").at("0.8").get<double>() <= 1.0);
  CHECK(slurp(out + "/concentration.svg").find("<svg") == 0);
}

TEST_CASE("report renders a metrics json as markdown") {
  testutil::TempDir td("cli_rep");
  ordered_json m;
  m["seed"] = 1;
  m["data"] = "synthetic desk-scale";
  m["notes"] = {"note one"};
  ordered_json row{{"iou", 0.5}, {"f1", 2.0 / 3.0}, {"precision", 0.6}, {"recall", 0.75}};
  ordered_json rep{{"background", row}, {"water", row}};
  m["source_model_on_source"] = rep;
  m["arms"] = {{"direct-transfer", rep},
               {"scratch-segformer", rep},
               {"scratch-unet", rep},
               {"fine-tuned", rep}};
  const std::string mp = td.str("metrics.json");
  {
    std::ofstream f(mp);
    f << m.dump(2);
  }
  const std::string out = td.str("report.md");
  REQUIRE(run_cli({"report", "--metrics", mp, "--out", out}) == 0);
  const std::string md = slurp(out);
  CHECK(md.find("| direct-transfer | background | 50.00 |") != std::string::npos);
  CHECK(md.find("| fine-tuned | water |") != std::string::npos);
  CHECK(md.find("66.67") != std::string::npos);
}
