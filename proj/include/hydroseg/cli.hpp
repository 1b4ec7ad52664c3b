#pragma once

// Command-line front end. One binary, one subcommand per pipeline stage, and
// `experiment` chaining the whole four-arm study from a single config+seed.
// Every artifact-producing command writes a resolved config snapshot next to
// its outputs, and identical (config, seed) pairs reproduce identical bytes.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "hydroseg/checkpoint.hpp"
#include "hydroseg/config.hpp"
#include "hydroseg/hydro.hpp"
#include "hydroseg/png_io.hpp"
#include "hydroseg/svg.hpp"
#include "hydroseg/synthgen.hpp"
#include "hydroseg/train.hpp"

namespace hydroseg::cli {

namespace fs = std::filesystem;

inline void write_text(const std::string& path, const std::string& text) {
  fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(path, std::ios::binary);
  require(bool(f), errkind::io, "cannot write " + path);
  f << text;
  require(bool(f), errkind::io, "write failed: " + path);
}

inline void write_config_snapshot(const RunConfig& cfg, const std::string& dir) {
  write_text((fs::path(dir) / "config.json").string(), run_config_json(cfg).dump(2) + "\n");
}

/// Rebuild a ModelSpec from the architecture blob stored in a checkpoint.
inline ModelSpec model_spec_from_blob(const std::string& blob) {
  ordered_json j;
  try {
    j = ordered_json::parse(blob);
  } catch (const std::exception& e) {
    fail(errkind::checkpoint, std::string("bad architecture blob: ") + e.what());
  }
  ModelSpec spec;
  const std::string kind = j.value("model", "");
  if (kind == "segformer-tiny") {
    spec.kind = ModelSpec::Kind::segformer;
    spec.segformer.embed_dims = j.at("embed_dims").get<std::vector<int>>();
    spec.segformer.heads = j.at("heads").get<std::vector<int>>();
    spec.segformer.reduction_ratios = j.at("reduction_ratios").get<std::vector<int>>();
    spec.segformer.blocks_per_stage = j.at("blocks_per_stage").get<std::vector<int>>();
    spec.segformer.patch_strides = j.at("patch_strides").get<std::vector<int>>();
    spec.segformer.decoder_dim = j.at("decoder_dim").get<int>();
    spec.segformer.mlp_expansion = j.at("mlp_expansion").get<int>();
  } else if (kind == "unet-tiny") {
    spec.kind = ModelSpec::Kind::unet;
    spec.unet.depth = j.at("depth").get<int>();
    spec.unet.base_channels = j.at("base_channels").get<int>();
  } else {
    fail(errkind::checkpoint, "unknown model kind in checkpoint: '" + kind + "'");
  }
  return spec;
}

inline ordered_json metric_row_json(const MetricRow& r) {
  auto v = [](const std::optional<double>& x) {
    return x ? ordered_json(*x) : ordered_json(nullptr);
  };
  return ordered_json{
      {"iou", v(r.iou)}, {"f1", v(r.f1)}, {"precision", v(r.precision)}, {"recall", v(r.recall)}};
}

inline ordered_json class_report_json(const ClassReport& rep) {
  return ordered_json{{"background", metric_row_json(rep.background)},
                      {"water", metric_row_json(rep.water)}};
}

inline const std::vector<std::string>& arm_order() {
  static const std::vector<std::string> order{"direct-transfer", "scratch-segformer",
                                              "scratch-unet", "fine-tuned"};
  return order;
}

inline ordered_json metrics_json(const ExperimentReport& rep) {
  ordered_json j;
  j["seed"] = rep.seed;
  j["data"] = "synthetic desk-scale";
  j["notes"] = rep.notes;
  j["source_model_on_source"] = class_report_json(rep.source_on_source);
  ordered_json arms;
  for (const auto& name : arm_order()) arms[name] = class_report_json(rep.arms.at(name).report);
  j["arms"] = arms;
  j["reference_full_scale_water_iou_percent"] = reference_full_scale_water_iou();
  return j;
}

inline std::string metric_cell(const ordered_json& v) {
  if (v.is_null()) return "-";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v.get<double>() * 100.0);
  return buf;
}

/// Markdown rendering of the metrics JSON (the JSON stays the source of truth).
inline std::string report_markdown(const ordered_json& m) {
  std::string out;
  out += "# Transfer experiment report\n\n";
  out += "Data: " + m.value("data", std::string("?")) + ", seed " +
         std::to_string(m.value("seed", uint64_t(0))) + "\n\n";
  if (m.contains("notes")) {
    for (const auto& n : m.at("notes")) out += "- " + n.get<std::string>() + "\n";
    out += "\n";
  }
  auto row = [&](const std::string& model, const std::string& cls, const ordered_json& r) {
    out += "| " + model + " | " + cls + " | " + metric_cell(r.at("iou")) + " | " +
           metric_cell(r.at("f1")) + " | " + metric_cell(r.at("precision")) + " | " +
           metric_cell(r.at("recall")) + " |\n";
  };

  out += "## Source model on its own validation set\n\n";
  out += "| Model | Class | IoU (%) | F1 (%) | Precision (%) | Recall (%) |\n";
  out += "| --- | --- | --- | --- | --- | --- |\n";
  const auto& src = m.at("source_model_on_source");
  row("source-pretrained", "background", src.at("background"));
  row("source-pretrained", "water", src.at("water"));
  out += "\n## Target-domain validation comparison\n\n";
  out += "| Model | Class | IoU (%) | F1 (%) | Precision (%) | Recall (%) |\n";
  out += "| --- | --- | --- | --- | --- | --- |\n";
  for (const auto& name : arm_order()) {
    const auto& arm = m.at("arms").at(name);
    row(name, "background", arm.at("background"));
    row(name, "water", arm.at("water"));
  }
  if (m.contains("reference_full_scale_water_iou_percent")) {
    out += "\nReference full-scale water IoU (%), private imagery, not reproduced here: ";
    bool first = true;
    for (auto it = m.at("reference_full_scale_water_iou_percent").begin();
         it != m.at("reference_full_scale_water_iou_percent").end(); ++it) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%s%s %.2f", first ? "" : ", ", it.key().c_str(),
                    it.value().get<double>());
      out += buf;
      first = false;
    }
    out += "\n";
  }
  return out;
}

inline void print_class_report(const ClassReport& rep, const std::string& heading) {
  std::printf("%s\n", heading.c_str());
  std::printf("  %-12s %-10s %-10s %-10s %-10s\n", "class", "IoU%", "F1%", "P%", "R%");
  std::printf("  %-12s %-10s %-10s %-10s %-10s\n", "background",
              percent_str(rep.background.iou).c_str(), percent_str(rep.background.f1).c_str(),
              percent_str(rep.background.precision).c_str(),
              percent_str(rep.background.recall).c_str());
  std::printf("  %-12s %-10s %-10s %-10s %-10s\n", "water", percent_str(rep.water.iou).c_str(),
              percent_str(rep.water.f1).c_str(), percent_str(rep.water.precision).c_str(),
              percent_str(rep.water.recall).c_str());
}

inline std::string loss_curve_svg(const TrainHistory& hist, const std::string& title) {
  SvgSeries total{"total", "#202080", {}}, bce{"bce", "#c04030", {}}, dice{"dice", "#308040", {}};
  for (const auto& r : hist.iters) {
    total.points.emplace_back(double(r.iter), r.loss_total);
    bce.points.emplace_back(double(r.iter), r.loss_bce);
    dice.points.emplace_back(double(r.iter), r.loss_dice);
  }
  return svg_line_chart(title, "iteration", "loss", {total, bce, dice});
}

inline ordered_json analysis_json(const ChannelAnalysis& a) {
  ordered_json bins = ordered_json::array();
  for (const auto& b : a.channel.bins)
    bins.push_back({{"id", b.id}, {"length", b.length}, {"area", b.area}});
  ordered_json curve = ordered_json::array();
  for (const auto& p : a.curve.points)
    curve.push_back({{"length_frac", p.length_frac}, {"area_frac", p.area_frac}});
  int64_t water_area = 0;
  for (const auto& b : a.channel.bins) water_area += b.area;
  return ordered_json{{"total_length", a.channel.total_length},
                      {"water_area", water_area},
                      {"bins", bins},
                      {"curve", curve},
                      {"stat", {{"0.5", a.stat_50}, {"0.8", a.stat_80}, {"0.9", a.stat_90}}}};
}

inline std::string concentration_svg(const ChannelAnalysis& a) {
  SvgSeries s{"concentration", "#205090", {}};
  for (const auto& p : a.curve.points) s.points.emplace_back(p.length_frac, p.area_frac);
  return svg_line_chart("Water-area concentration along the channel network",
                        "cumulative channel length fraction", "cumulative water area fraction",
                        {s}, /*with_diagonal=*/true);
}

// ---------------------------------------------------------------------------
// subcommand bodies

inline void cmd_synth(const RunConfig& cfg, const std::string& out_dir) {
  Rng master(cfg.seed);
  std::string manifest;
  auto emit = [&](const SceneConfig& scfg, int count, const std::string& tag, uint64_t salt,
                  const char* domain) {
    for (int i = 0; i < count; ++i) {
      const uint64_t scene_seed = master.derive(salt + uint64_t(i)).next_u64();
      auto [img, mask] = gen_scene(scene_config_for_index(scfg, i), scene_seed);
      const std::string img_name = tag + std::to_string(i) + ".png";
      const std::string mask_name = tag + std::to_string(i) + "_mask.png";
      save_image(img, (fs::path(out_dir) / img_name).string());
      save_mask(mask, (fs::path(out_dir) / mask_name).string());
      ordered_json line{{"image", img_name},
                        {"mask", mask_name},
                        {"domain", domain},
                        {"seed", scene_seed},
                        {"config_hash", fingerprint_of(run_config_json(cfg).dump())}};
      manifest += line.dump() + "\n";
    }
  };
  emit(cfg.scene_source, cfg.n_source_scenes, "src", 0x1000, "source");
  emit(cfg.scene_target, cfg.n_target_scenes, "tgt", 0x2000, "target");
  write_text((fs::path(out_dir) / "manifest.jsonl").string(), manifest);
  write_config_snapshot(cfg, out_dir);
}

inline std::vector<std::pair<std::string, std::string>> find_scene_pairs(
    const std::string& dir) {
  std::vector<std::pair<std::string, std::string>> pairs;
  require(fs::is_directory(dir), errkind::io, "not a directory: " + dir);
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(e.path().filename().string());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    const std::string suffix = "_mask.png";
    if (f.size() > suffix.size() && f.substr(f.size() - suffix.size()) == suffix) {
      const std::string stem = f.substr(0, f.size() - suffix.size());
      const std::string img = stem + ".png";
      if (fs::exists(fs::path(dir) / img)) pairs.emplace_back(img, f);
    }
  }
  require(!pairs.empty(), errkind::io, "no <name>.png + <name>_mask.png pairs in " + dir);
  return pairs;
}

inline void cmd_tile(const RunConfig& cfg, const std::string& in_dir,
                     const std::string& out_dir) {
  std::vector<TilePatch> all;
  for (const auto& [img_name, mask_name] : find_scene_pairs(in_dir)) {
    RasterImage img = load_image((fs::path(in_dir) / img_name).string());
    LabelMask mask = load_mask((fs::path(in_dir) / mask_name).string());
    const std::string stem = img_name.substr(0, img_name.size() - 4);
    auto patches = extract_patches(img, mask, cfg.tile, stem);
    for (auto& p : patches) all.push_back(std::move(p));
  }
  require(all.size() >= 2, errkind::bad_argument, "tiling produced fewer than 2 patches");
  DatasetSplit split = split_dataset(std::move(all), cfg.split_ratio, cfg.seed);

  std::string manifest;
  auto dump = [&](const std::vector<TilePatch>& patches, const char* split_name) {
    for (const auto& p : patches) {
      const std::string base =
          p.source_id + "_x" + std::to_string(p.origin_x) + "_y" + std::to_string(p.origin_y);
      save_image(p.image, (fs::path(out_dir) / (base + ".png")).string());
      save_mask(p.mask, (fs::path(out_dir) / (base + "_mask.png")).string());
      ordered_json line{{"image", base + ".png"},
                        {"mask", base + "_mask.png"},
                        {"source_id", p.source_id},
                        {"origin", {p.origin_x, p.origin_y}},
                        {"split", split_name}};
      manifest += line.dump() + "\n";
    }
  };
  dump(split.train, "train");
  dump(split.val, "val");
  write_text((fs::path(out_dir) / "manifest.jsonl").string(), manifest);
  write_config_snapshot(cfg, out_dir);
  std::printf("tiled %zu train + %zu val patches\n", split.train.size(), split.val.size());
}

inline RasterImage float_patch_to_image(const FloatPatch& p) {
  RasterImage img(p.image.width, p.image.height);
  for (size_t i = 0; i < img.data.size(); ++i)
    img.data[i] = uint8_t(std::clamp(std::lround(p.image.data[i] * 255.0f), 0L, 255L));
  return img;
}

inline void cmd_augment(const RunConfig& cfg, const std::string& image_path,
                        const std::string& mask_path, int count, const std::string& out_dir) {
  RasterImage img = load_image(image_path);
  LabelMask mask = load_mask(mask_path);
  FloatPatch patch = to_float_patch(img, mask);
  AugmentConfig aug = cfg.augment;
  aug.out_size = img.width;
  Rng base(cfg.seed);
  for (int i = 0; i < count; ++i) {
    Rng rng = base.derive(uint64_t(i));
    FloatPatch v = augment_patch(patch, rng, aug);
    save_image(float_patch_to_image(v),
               (fs::path(out_dir) / ("aug" + std::to_string(i) + ".png")).string());
    save_mask(v.mask, (fs::path(out_dir) / ("aug" + std::to_string(i) + "_mask.png")).string());
  }
  write_config_snapshot(cfg, out_dir);
}

inline std::vector<TilePatch> load_patch_dir(const std::string& dir) {
  std::vector<TilePatch> out;
  for (const auto& [img_name, mask_name] : find_scene_pairs(dir)) {
    TilePatch p;
    p.image = load_image((fs::path(dir) / img_name).string());
    p.mask = load_mask((fs::path(dir) / mask_name).string());
    require(p.image.width == p.mask.width && p.image.height == p.mask.height,
            errkind::shape_mismatch, img_name + ": image/mask size mismatch");
    p.source_id = img_name.substr(0, img_name.size() - 4);
    out.push_back(std::move(p));
  }
  return out;
}

inline void cmd_train(const RunConfig& cfg, const std::string& data_dir,
                      const std::string& stage, const std::string& model_kind,
                      const std::string& init_path, const std::string& out_path, int iters) {
  for (const auto& w : optim_config_warnings(cfg.optim))
    std::fprintf(stderr, "warning: %s\n", w.c_str());

  ModelSpec spec;
  if (model_kind == "segformer") {
    spec.kind = ModelSpec::Kind::segformer;
    spec.segformer = cfg.segformer;
  } else if (model_kind == "unet") {
    spec.kind = ModelSpec::Kind::unet;
    spec.unet = cfg.unet;
  } else {
    fail(errkind::bad_argument, "unknown model '" + model_kind + "'");
  }

  ModelParams<float> params;
  if (stage == "finetune") {
    require(!init_path.empty(), errkind::bad_argument, "--stage finetune requires --init");
    params = load_checkpoint(init_path);
    require_architecture(params, spec.config_json());
  } else if (stage == "pretrain" || stage == "scratch") {
    if (!init_path.empty()) fail(errkind::bad_argument, "--init is only valid with finetune");
    params = build_model<float>(spec, cfg.seed);
  } else {
    fail(errkind::bad_argument, "unknown stage '" + stage + "'");
  }

  auto patches = load_patch_dir(data_dir);
  require(patches.size() >= 2, errkind::bad_argument, "need at least 2 patches to train");
  DatasetSplit split = split_dataset(std::move(patches), cfg.split_ratio, cfg.seed);

  TrainConfig tc = cfg.train_config();
  const int run_iters = iters > 0 ? iters : tc.optim.total_iters;
  if (iters > 0) {
    tc.optim.total_iters = iters;
    tc.optim.warmup_iters = std::min(tc.optim.warmup_iters, std::max(0, iters / 2));
  }
  auto [trained, hist] =
      train_loop(spec, std::move(params), split.train, split.val, tc, cfg.seed, run_iters);
  save_checkpoint(trained, out_path);
  const fs::path outp(out_path);
  const std::string stem = (outp.parent_path() / outp.stem()).string();
  write_text(stem + "_history.csv", history_csv(hist));
  write_text(stem + "_loss.svg", loss_curve_svg(hist, "training loss (" + stage + ")"));
  write_config_snapshot(cfg, outp.has_parent_path() ? outp.parent_path().string() : ".");

  ClassReport rep = evaluate(spec, trained, split.val, tc);
  print_class_report(rep, "validation metrics (" + stage + ", " + model_kind + ")");
}

inline void cmd_eval(const RunConfig& cfg, const std::string& ckpt_path,
                     const std::string& data_dir, const std::string& out_dir) {
  ModelParams<float> params = load_checkpoint(ckpt_path);
  ModelSpec spec = model_spec_from_blob(params.config_json);
  auto patches = load_patch_dir(data_dir);
  ClassReport rep = evaluate(spec, params, patches, cfg.train_config());

  ordered_json j = class_report_json(rep);
  write_text((fs::path(out_dir) / "eval.json").string(), j.dump(2) + "\n");
  std::string csv = "class,iou,f1,precision,recall\n";
  auto row = [&](const MetricRow& r, const char* name) {
    csv += std::string(name) + "," + percent_str(r.iou) + "," + percent_str(r.f1) + "," +
           percent_str(r.precision) + "," + percent_str(r.recall) + "\n";
  };
  row(rep.background, "background");
  row(rep.water, "water");
  write_text((fs::path(out_dir) / "eval.csv").string(), csv);
  print_class_report(rep, "evaluation of " + ckpt_path);
}

inline void cmd_analyze(const RunConfig& cfg, const std::string& mask_path,
                        const std::string& out_dir) {
  LabelMask mask = load_mask(mask_path);
  ChannelAnalysis a = analyze_mask(mask, cfg.bin_len);
  write_text((fs::path(out_dir) / "analysis.json").string(), analysis_json(a).dump(2) + "\n");
  write_text((fs::path(out_dir) / "concentration.svg").string(), concentration_svg(a));
  std::printf("total channel length: %.3f px\n", a.channel.total_length);
  std::printf("length fraction holding 50/80/90%% of water area: %.4f / %.4f / %.4f\n",
              a.stat_50, a.stat_80, a.stat_90);
}

inline void cmd_report(const std::string& metrics_path, const std::string& out_path) {
  std::ifstream f(metrics_path);
  require(bool(f), errkind::io, "cannot open metrics: " + metrics_path);
  ordered_json m;
  try {
    f >> m;
  } catch (const std::exception& e) {
    fail(errkind::config, metrics_path + ": " + e.what());
  }
  const std::string md = report_markdown(m);
  write_text(out_path, md);
  std::printf("%s", md.c_str());
}

inline void cmd_experiment(const RunConfig& cfg, const std::string& out_dir,
                           bool quiet = false) {
  const fs::path out(out_dir);
  auto [source, target] = build_synthetic_datasets(cfg.n_source_scenes, cfg.n_target_scenes,
                                                   cfg.seed, cfg.synth_config());
  ExperimentReport rep =
      run_two_stage_experiment(source, target, cfg.experiment_config(), cfg.seed);

  ordered_json m = metrics_json(rep);
  write_text((out / "metrics.json").string(), m.dump(2) + "\n");
  write_text((out / "report.md").string(), report_markdown(m));
  for (const auto& name : arm_order()) {
    const ArmOutcome& arm = rep.arms.at(name);
    save_checkpoint(arm.params, (out / "checkpoints" / (name + ".ckpt")).string());
    write_text((out / "history" / (name + ".csv")).string(), history_csv(arm.history));
    write_text((out / "history" / (name + "_evals.csv")).string(),
               eval_history_csv(arm.history));
    write_text((out / "history" / (name + "_loss.svg")).string(),
               loss_curve_svg(arm.history, name));
  }

  // concentration analysis on the first target scene's true mask
  Rng master(cfg.seed);
  auto [timg, tmask] = gen_scene(cfg.scene_target, master.derive(0x2000).next_u64());
  save_mask(tmask, (out / "analysis" / "target_scene0_mask.png").string());
  save_image(timg, (out / "analysis" / "target_scene0.png").string());
  ChannelAnalysis a = analyze_mask(tmask, cfg.bin_len);
  write_text((out / "analysis" / "analysis.json").string(), analysis_json(a).dump(2) + "\n");
  write_text((out / "analysis" / "concentration.svg").string(), concentration_svg(a));

  write_config_snapshot(cfg, out_dir);
  if (!quiet) std::printf("%s", report_markdown(m).c_str());
}

// ---------------------------------------------------------------------------

inline int dispatch(int argc, char** argv) {
  CLI::App app{"two-domain water segmentation lab: synthetic data, tiny attention "
               "segmentation nets, transfer experiment, channel analysis"};
  app.require_subcommand(1);

  std::string config_path, out_dir, in_dir, data_dir, mask_path, image_path, ckpt_path,
      init_path, metrics_path, stage = "scratch", model_kind = "segformer";
  uint64_t seed = 0;
  bool seed_set = false, verbose = false;
  int threads = 0, count = 8, iters = 0;

  app.add_option("--threads", threads, "worker thread cap (0 = library default)");
  app.add_flag("--verbose", verbose, "chatty progress on stderr");

  auto add_common = [&](CLI::App* sub, bool needs_out) {
    sub->add_option("--config", config_path, "JSON run configuration");
    sub->add_option_function<uint64_t>(
        "--seed", [&](uint64_t s) { seed = s; seed_set = true; }, "master seed override");
    if (needs_out) sub->add_option("--out", out_dir, "output directory")->required();
  };

  auto* synth = app.add_subcommand("synth", "generate labeled two-domain scenes");
  add_common(synth, true);

  auto* tile = app.add_subcommand("tile", "crop scene/mask pairs into patches");
  add_common(tile, true);
  tile->add_option("--in", in_dir, "scene directory (<name>.png + <name>_mask.png)")->required();

  auto* augment = app.add_subcommand("augment", "write augmented variants of one patch");
  add_common(augment, true);
  augment->add_option("--image", image_path, "patch image PNG")->required();
  augment->add_option("--mask", mask_path, "patch mask PNG")->required();
  augment->add_option("--count", count, "number of variants");

  auto* train = app.add_subcommand("train", "train one model on a patch directory");
  train->add_option("--config", config_path, "JSON run configuration");
  train->add_option_function<uint64_t>(
      "--seed", [&](uint64_t s) { seed = s; seed_set = true; }, "master seed override");
  train->add_option("--data", data_dir, "patch directory")->required();
  train->add_option("--stage", stage, "pretrain | finetune | scratch");
  train->add_option("--model", model_kind, "segformer | unet");
  train->add_option("--init", init_path, "checkpoint for finetune init");
  train->add_option("--iters", iters, "override iteration count");
  train->add_option("--out", ckpt_path, "output checkpoint path")->required();

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a patch directory");
  add_common(eval, true);
  eval->add_option("--checkpoint", ckpt_path, "model checkpoint")->required();
  eval->add_option("--data", data_dir, "patch directory")->required();

  auto* analyze = app.add_subcommand("analyze", "channel concentration analysis of a mask");
  add_common(analyze, true);
  analyze->add_option("--mask", mask_path, "binary water mask PNG")->required();

  auto* report = app.add_subcommand("report", "render a metrics JSON as markdown");
  report->add_option("--metrics", metrics_path, "metrics.json from an experiment")->required();
  report->add_option("--out", out_dir, "output markdown path")->required();

  auto* experiment =
      app.add_subcommand("experiment", "full four-arm transfer study from one config and seed");
  add_common(experiment, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
#ifdef _OPENMP
    if (threads > 0) omp_set_num_threads(threads);
#else
    (void)threads;
#endif
    RunConfig cfg;
    if (!config_path.empty()) cfg = parse_run_config(config_path);
    if (seed_set) cfg.seed = seed;
    if (verbose) std::fprintf(stderr, "seed %llu\n", (unsigned long long)cfg.seed);

    if (*synth) cmd_synth(cfg, out_dir);
    if (*tile) cmd_tile(cfg, in_dir, out_dir);
    if (*augment) cmd_augment(cfg, image_path, mask_path, count, out_dir);
    if (*train) cmd_train(cfg, data_dir, stage, model_kind, init_path, ckpt_path, iters);
    if (*eval) cmd_eval(cfg, ckpt_path, data_dir, out_dir);
    if (*analyze) cmd_analyze(cfg, mask_path, out_dir);
    if (*report) cmd_report(metrics_path, out_dir);
    if (*experiment) cmd_experiment(cfg, out_dir);
    return 0;
  } catch (const Error& e) {
    ordered_json err{{"error", e.kind()}, {"message", e.what()}};
    std::fprintf(stderr, "%s\n", err.dump().c_str());
    if (e.kind() == errkind::config) return 3;
    if (e.kind() == errkind::io) return 4;
    return 1;
  } catch (const std::exception& e) {
    ordered_json err{{"error", "internal"}, {"message", e.what()}};
    std::fprintf(stderr, "%s\n", err.dump().c_str());
    return 1;
  }
}

}  // namespace hydroseg::cli
