#pragma once

// Run configuration: one JSON file covering the whole pipeline. Unknown keys
// are rejected; every run writes back a fully resolved snapshot.

#include <json.hpp>

#include <array>
#include <fstream>
#include <set>
#include <string>

#include "hydroseg/augment.hpp"
#include "hydroseg/common.hpp"
#include "hydroseg/loss.hpp"
#include "hydroseg/model.hpp"
#include "hydroseg/optim.hpp"
#include "hydroseg/synthgen.hpp"
#include "hydroseg/tiling.hpp"
#include "hydroseg/train.hpp"

namespace hydroseg {

using ordered_json = nlohmann::ordered_json;

struct RunConfig {
  uint64_t seed = 42;
  std::string out_dir = "runs/out";
  int n_source_scenes = 12;
  int n_target_scenes = 6;
  double split_ratio = 0.9;
  SceneConfig scene_source;
  SceneConfig scene_target;
  TileConfig tile{128, 64, true, true};
  AugmentConfig augment;
  LossConfig loss;
  OptimConfig optim;
  SegFormerTinyConfig segformer;
  UNetTinyConfig unet;
  ExperimentArms arms;
  double threshold = 0.5;
  int eval_interval = 0;
  std::array<float, 3> norm_mean = kDefaultMean;
  std::array<float, 3> norm_std = kDefaultStd;
  double bin_len = 16.0;

  RunConfig() {
    scene_source.domain = SceneConfig::Domain::source;
    scene_target.domain = SceneConfig::Domain::target;
    scene_target.cloud_prob = 0.0;
  }

  TrainConfig train_config() const {
    TrainConfig t;
    t.loss = loss;
    t.optim = optim;
    t.augment = augment;
    t.norm_mean = norm_mean;
    t.norm_std = norm_std;
    t.eval_interval = eval_interval;
    t.threshold = threshold;
    return t;
  }
  ExperimentConfig experiment_config() const {
    ExperimentConfig e;
    e.train = train_config();
    e.segformer = segformer;
    e.unet = unet;
    e.arms = arms;
    return e;
  }
  SynthDatasetConfig synth_config() const {
    SynthDatasetConfig s;
    s.source_scene = scene_source;
    s.target_scene = scene_target;
    s.tile = tile;
    s.split_ratio = split_ratio;
    return s;
  }
};

namespace config_detail {

inline void check_keys(const ordered_json& obj, const std::set<std::string>& allowed,
                       const std::string& section) {
  require(obj.is_object(), errkind::config, "section '" + section + "' must be an object");
  for (auto it = obj.begin(); it != obj.end(); ++it)
    require(allowed.count(it.key()) == 1, errkind::config,
            "unknown key '" + it.key() + "' in section '" + section + "'");
}

template <typename T>
void get(const ordered_json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

inline void get_pair(const ordered_json& obj, const char* key, double& lo, double& hi) {
  if (!obj.contains(key)) return;
  auto v = obj.at(key);
  require(v.is_array() && v.size() == 2, errkind::config,
          std::string("'") + key + "' must be a [low, high] pair");
  lo = v[0].get<double>();
  hi = v[1].get<double>();
}

inline void get_ipair(const ordered_json& obj, const char* key, int& lo, int& hi) {
  if (!obj.contains(key)) return;
  auto v = obj.at(key);
  require(v.is_array() && v.size() == 2, errkind::config,
          std::string("'") + key + "' must be a [low, high] pair");
  lo = v[0].get<int>();
  hi = v[1].get<int>();
}

inline void get_color(const ordered_json& obj, const char* key, std::array<int, 3>& out) {
  if (!obj.contains(key)) return;
  auto v = obj.at(key);
  require(v.is_array() && v.size() == 3, errkind::config,
          std::string("'") + key + "' must be an [r,g,b] triple");
  for (int c = 0; c < 3; ++c) out[size_t(c)] = v[size_t(c)].get<int>();
}

inline void get_f3(const ordered_json& obj, const char* key, std::array<float, 3>& out) {
  if (!obj.contains(key)) return;
  auto v = obj.at(key);
  require(v.is_array() && v.size() == 3, errkind::config,
          std::string("'") + key + "' must have 3 entries");
  for (int c = 0; c < 3; ++c) out[size_t(c)] = v[size_t(c)].get<float>();
}

inline void parse_scene(const ordered_json& o, SceneConfig& s, const std::string& section) {
  check_keys(o,
             {"size", "water_color", "contrast_gap", "channel_width", "river_width",
              "turbidity_blend", "noise_sigma", "cloud_prob"},
             section);
  get(o, "size", s.size);
  get_color(o, "water_color", s.water_color);
  get(o, "contrast_gap", s.contrast_gap);
  get_ipair(o, "channel_width", s.channel_width_min, s.channel_width_max);
  get_ipair(o, "river_width", s.river_width_min, s.river_width_max);
  get(o, "turbidity_blend", s.turbidity_blend);
  get(o, "noise_sigma", s.noise_sigma);
  get(o, "cloud_prob", s.cloud_prob);
  validate(s);
}

}  // namespace config_detail

inline RunConfig parse_run_config_json(const ordered_json& j) {
  using namespace config_detail;
  RunConfig cfg;
  check_keys(j,
             {"seed", "out_dir", "data", "scene_source", "scene_target", "tile", "augment",
              "loss", "optim", "segformer", "unet", "experiment", "eval", "normalize",
              "analysis"},
             "(root)");
  get(j, "seed", cfg.seed);
  get(j, "out_dir", cfg.out_dir);
  if (j.contains("data")) {
    const auto& o = j.at("data");
    check_keys(o, {"n_source_scenes", "n_target_scenes", "split_ratio"}, "data");
    get(o, "n_source_scenes", cfg.n_source_scenes);
    get(o, "n_target_scenes", cfg.n_target_scenes);
    get(o, "split_ratio", cfg.split_ratio);
  }
  if (j.contains("scene_source")) parse_scene(j.at("scene_source"), cfg.scene_source, "scene_source");
  if (j.contains("scene_target")) parse_scene(j.at("scene_target"), cfg.scene_target, "scene_target");
  if (j.contains("tile")) {
    const auto& o = j.at("tile");
    check_keys(o, {"window", "stride", "keep_only_water", "edge_flush"}, "tile");
    get(o, "window", cfg.tile.window);
    get(o, "stride", cfg.tile.stride);
    get(o, "keep_only_water", cfg.tile.keep_only_water);
    get(o, "edge_flush", cfg.tile.edge_flush);
    require(cfg.tile.stride >= 1 && cfg.tile.stride <= cfg.tile.window, errkind::config,
            "tile stride must be in [1, window]");
  }
  if (j.contains("augment")) {
    const auto& o = j.at("augment");
    check_keys(o,
               {"flip_prob", "scale_range", "brightness_delta", "contrast_range",
                "saturation_range", "photometric_apply_prob"},
               "augment");
    get(o, "flip_prob", cfg.augment.flip_prob);
    get_pair(o, "scale_range", cfg.augment.scale_low, cfg.augment.scale_high);
    get(o, "brightness_delta", cfg.augment.brightness_delta);
    get_pair(o, "contrast_range", cfg.augment.contrast_low, cfg.augment.contrast_high);
    get_pair(o, "saturation_range", cfg.augment.saturation_low, cfg.augment.saturation_high);
    get(o, "photometric_apply_prob", cfg.augment.photometric_apply_prob);
    validate(cfg.augment);
  }
  if (j.contains("loss")) {
    const auto& o = j.at("loss");
    check_keys(o, {"epsilon", "w_background", "w_water", "lambda_bce", "lambda_dice"}, "loss");
    get(o, "epsilon", cfg.loss.epsilon);
    get(o, "w_background", cfg.loss.w_background);
    get(o, "w_water", cfg.loss.w_water);
    get(o, "lambda_bce", cfg.loss.lambda_bce);
    get(o, "lambda_dice", cfg.loss.lambda_dice);
    validate(cfg.loss);
  }
  if (j.contains("optim")) {
    const auto& o = j.at("optim");
    check_keys(o,
               {"base_lr", "weight_decay", "beta1", "beta2", "adam_eps", "warmup_iters",
                "warmup_factor", "total_iters", "min_lr", "poly_power", "batch_size"},
               "optim");
    get(o, "base_lr", cfg.optim.base_lr);
    get(o, "weight_decay", cfg.optim.weight_decay);
    get(o, "beta1", cfg.optim.beta1);
    get(o, "beta2", cfg.optim.beta2);
    get(o, "adam_eps", cfg.optim.adam_eps);
    get(o, "warmup_iters", cfg.optim.warmup_iters);
    get(o, "warmup_factor", cfg.optim.warmup_factor);
    get(o, "total_iters", cfg.optim.total_iters);
    get(o, "min_lr", cfg.optim.min_lr);
    get(o, "poly_power", cfg.optim.poly_power);
    get(o, "batch_size", cfg.optim.batch_size);
    validate(cfg.optim);
  }
  if (j.contains("segformer")) {
    const auto& o = j.at("segformer");
    check_keys(o,
               {"embed_dims", "heads", "reduction_ratios", "blocks_per_stage", "patch_strides",
                "decoder_dim", "mlp_expansion"},
               "segformer");
    get(o, "embed_dims", cfg.segformer.embed_dims);
    get(o, "heads", cfg.segformer.heads);
    get(o, "reduction_ratios", cfg.segformer.reduction_ratios);
    get(o, "blocks_per_stage", cfg.segformer.blocks_per_stage);
    get(o, "patch_strides", cfg.segformer.patch_strides);
    get(o, "decoder_dim", cfg.segformer.decoder_dim);
    get(o, "mlp_expansion", cfg.segformer.mlp_expansion);
    validate(cfg.segformer);
  }
  if (j.contains("unet")) {
    const auto& o = j.at("unet");
    check_keys(o, {"depth", "base_channels"}, "unet");
    get(o, "depth", cfg.unet.depth);
    get(o, "base_channels", cfg.unet.base_channels);
    validate(cfg.unet);
  }
  if (j.contains("experiment")) {
    const auto& o = j.at("experiment");
    check_keys(o,
               {"pretrain_iters", "scratch_iters", "finetune_iters", "pretrain_lr", "scratch_lr",
                "unet_lr", "finetune_lr", "warmup_iters"},
               "experiment");
    get(o, "pretrain_iters", cfg.arms.pretrain_iters);
    get(o, "scratch_iters", cfg.arms.scratch_iters);
    get(o, "finetune_iters", cfg.arms.finetune_iters);
    get(o, "pretrain_lr", cfg.arms.pretrain_lr);
    get(o, "scratch_lr", cfg.arms.scratch_lr);
    get(o, "unet_lr", cfg.arms.unet_lr);
    get(o, "finetune_lr", cfg.arms.finetune_lr);
    get(o, "warmup_iters", cfg.arms.warmup_iters);
  }
  if (j.contains("eval")) {
    const auto& o = j.at("eval");
    check_keys(o, {"threshold", "interval"}, "eval");
    get(o, "threshold", cfg.threshold);
    get(o, "interval", cfg.eval_interval);
  }
  if (j.contains("normalize")) {
    const auto& o = j.at("normalize");
    check_keys(o, {"mean", "std"}, "normalize");
    get_f3(o, "mean", cfg.norm_mean);
    get_f3(o, "std", cfg.norm_std);
    for (float s : cfg.norm_std)
      require(s != 0.0f, errkind::config, "normalize std must be nonzero");
  }
  if (j.contains("analysis")) {
    const auto& o = j.at("analysis");
    check_keys(o, {"bin_len"}, "analysis");
    get(o, "bin_len", cfg.bin_len);
    require(cfg.bin_len > 0.0, errkind::config, "bin_len must be > 0");
  }
  return cfg;
}

inline RunConfig parse_run_config(const std::string& path) {
  std::ifstream f(path);
  require(bool(f), errkind::io, "cannot open config: " + path);
  ordered_json j;
  try {
    f >> j;
  } catch (const std::exception& e) {
    fail(errkind::config, path + ": " + e.what());
  }
  return parse_run_config_json(j);
}

/// Fully resolved snapshot; parsing it back reproduces the same RunConfig.
inline ordered_json run_config_json(const RunConfig& c) {
  ordered_json j;
  j["seed"] = c.seed;
  j["out_dir"] = c.out_dir;
  j["data"] = {{"n_source_scenes", c.n_source_scenes},
               {"n_target_scenes", c.n_target_scenes},
               {"split_ratio", c.split_ratio}};
  auto scene = [](const SceneConfig& s) {
    return ordered_json{{"size", s.size},
                        {"water_color", s.water_color},
                        {"contrast_gap", s.contrast_gap},
                        {"channel_width", {s.channel_width_min, s.channel_width_max}},
                        {"river_width", {s.river_width_min, s.river_width_max}},
                        {"turbidity_blend", s.turbidity_blend},
                        {"noise_sigma", s.noise_sigma},
                        {"cloud_prob", s.cloud_prob}};
  };
  j["scene_source"] = scene(c.scene_source);
  j["scene_target"] = scene(c.scene_target);
  j["tile"] = {{"window", c.tile.window},
               {"stride", c.tile.stride},
               {"keep_only_water", c.tile.keep_only_water},
               {"edge_flush", c.tile.edge_flush}};
  j["augment"] = {{"flip_prob", c.augment.flip_prob},
                  {"scale_range", {c.augment.scale_low, c.augment.scale_high}},
                  {"brightness_delta", c.augment.brightness_delta},
                  {"contrast_range", {c.augment.contrast_low, c.augment.contrast_high}},
                  {"saturation_range", {c.augment.saturation_low, c.augment.saturation_high}},
                  {"photometric_apply_prob", c.augment.photometric_apply_prob}};
  j["loss"] = {{"epsilon", c.loss.epsilon},
               {"w_background", c.loss.w_background},
               {"w_water", c.loss.w_water},
               {"lambda_bce", c.loss.lambda_bce},
               {"lambda_dice", c.loss.lambda_dice}};
  j["optim"] = {{"base_lr", c.optim.base_lr},
                {"weight_decay", c.optim.weight_decay},
                {"beta1", c.optim.beta1},
                {"beta2", c.optim.beta2},
                {"adam_eps", c.optim.adam_eps},
                {"warmup_iters", c.optim.warmup_iters},
                {"warmup_factor", c.optim.warmup_factor},
                {"total_iters", c.optim.total_iters},
                {"min_lr", c.optim.min_lr},
                {"poly_power", c.optim.poly_power},
                {"batch_size", c.optim.batch_size}};
  j["segformer"] = {{"embed_dims", c.segformer.embed_dims},
                    {"heads", c.segformer.heads},
                    {"reduction_ratios", c.segformer.reduction_ratios},
                    {"blocks_per_stage", c.segformer.blocks_per_stage},
                    {"patch_strides", c.segformer.patch_strides},
                    {"decoder_dim", c.segformer.decoder_dim},
                    {"mlp_expansion", c.segformer.mlp_expansion}};
  j["unet"] = {{"depth", c.unet.depth}, {"base_channels", c.unet.base_channels}};
  j["experiment"] = {{"pretrain_iters", c.arms.pretrain_iters},
                     {"scratch_iters", c.arms.scratch_iters},
                     {"finetune_iters", c.arms.finetune_iters},
                     {"pretrain_lr", c.arms.pretrain_lr},
                     {"scratch_lr", c.arms.scratch_lr},
                     {"unet_lr", c.arms.unet_lr},
                     {"finetune_lr", c.arms.finetune_lr},
                     {"warmup_iters", c.arms.warmup_iters}};
  j["eval"] = {{"threshold", c.threshold}, {"interval", c.eval_interval}};
  j["normalize"] = {{"mean", c.norm_mean}, {"std", c.norm_std}};
  j["analysis"] = {{"bin_len", c.bin_len}};
  return j;
}

}  // namespace hydroseg
