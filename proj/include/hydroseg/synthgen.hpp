#pragma once

// Procedural two-domain scene generator. The source domain renders water with
// strong spectral separation from its background; the target domain renders
// narrow turbid gullies whose color is a blend toward the surrounding
// sediment, so the two domains carry a measurable gap. Masks come from the
// same geometry as the imagery: zero label noise by construction.

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hydroseg/common.hpp"
#include "hydroseg/raster.hpp"
#include "hydroseg/rng.hpp"
#include "hydroseg/tiling.hpp"

namespace hydroseg {

struct SceneConfig {
  int size = 256;
  enum class Domain { source, target } domain = Domain::source;
  std::array<int, 3> water_color{30, 60, 140};
  std::vector<std::array<int, 3>> background_palette{
      {150, 130, 100}, {120, 110, 80}, {138, 126, 104}};
  double contrast_gap = 1.0;      // scales water/background separation in the source
  int channel_width_min = 2;      // target gullies
  int channel_width_max = 6;
  int river_width_min = 8;        // source rivers
  int river_width_max = 20;
  double turbidity_blend = 0.85;  // 1 = water color equals sediment background
  double noise_sigma = 5.0;
  double cloud_prob = 0.25;
};

inline void validate(const SceneConfig& cfg) {
  require(cfg.size >= 64, errkind::config, "scene size must be >= 64");
  require(cfg.turbidity_blend >= 0.0 && cfg.turbidity_blend <= 1.0, errkind::config,
          "turbidity_blend must be in [0,1]");
  require(cfg.channel_width_min >= 1 && cfg.channel_width_min <= cfg.channel_width_max,
          errkind::config, "channel width range invalid");
  require(!cfg.background_palette.empty(), errkind::config, "background palette empty");
}

namespace synth_detail {

inline uint8_t clamp_u8(double v) { return uint8_t(std::clamp(v, 0.0, 255.0)); }

// coarse value-noise field, bilinearly interpolated from a seeded grid
struct CoarseField {
  int grid;
  std::vector<double> values;
  CoarseField(Rng& rng, int grid_, double amp) : grid(grid_), values(size_t(grid_) * grid_) {
    for (auto& v : values) v = rng.uniform(-amp, amp);
  }
  double at(double u, double v) const {  // u,v in [0,1]
    const double gx = u * (grid - 1), gy = v * (grid - 1);
    const int x0 = std::min(int(gx), grid - 2), y0 = std::min(int(gy), grid - 2);
    const double fx = gx - x0, fy = gy - y0;
    auto g = [&](int x, int y) { return values[size_t(y) * grid + x]; };
    const double top = g(x0, y0) + (g(x0 + 1, y0) - g(x0, y0)) * fx;
    const double bot = g(x0, y0 + 1) + (g(x0 + 1, y0 + 1) - g(x0, y0 + 1)) * fx;
    return top + (bot - top) * fy;
  }
};

inline void fill_ellipse(LabelMask& mask, double cx, double cy, double a, double b) {
  const int x0 = std::max(0, int(cx - a - 1)), x1 = std::min(mask.width - 1, int(cx + a + 1));
  const int y0 = std::max(0, int(cy - b - 1)), y1 = std::min(mask.height - 1, int(cy + b + 1));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const double dx = (x - cx) / a, dy = (y - cy) / b;
      if (dx * dx + dy * dy <= 1.0) mask.data[mask.idx(x, y)] = 1;
    }
}

// horizontal ribbon of exactly `width` rows around a random-walk centerline
inline void draw_ribbon(LabelMask& mask, Rng& rng, int width, double y_lo, double y_hi,
                        double wobble) {
  const int W = mask.width, H = mask.height;
  double y = rng.uniform(y_lo, y_hi);
  double dy = 0.0;
  for (int x = 0; x < W; ++x) {
    dy = std::clamp(dy + rng.uniform(-wobble, wobble), -2.5, 2.5);
    y = std::clamp(y + dy, y_lo, y_hi);
    const int top = int(std::lround(y - width / 2.0 + 0.5));
    for (int k = 0; k < width; ++k) {
      const int yy = top + k;
      if (yy >= 0 && yy < H) mask.data[mask.idx(x, yy)] = 1;
    }
  }
}

inline void add_cloud(RasterImage& img, Rng& rng) {
  const int W = img.width, H = img.height;
  const double cx = rng.uniform(0.2, 0.8) * W;
  const double cy = rng.uniform(0.2, 0.8) * H;
  const double r = rng.uniform(0.08, 0.2) * W;
  const double wr = rng.uniform(0.9, 1.4);
  const int shade = 235 + int(rng.uniform_index(20));
  for (int y = std::max(0, int(cy - r * wr - 2)); y < std::min(H, int(cy + r * wr + 2)); ++y)
    for (int x = std::max(0, int(cx - r - 2)); x < std::min(W, int(cx + r + 2)); ++x) {
      const double d = std::sqrt(((x - cx) / 1.0) * (x - cx) + ((y - cy) / wr) * (y - cy) / 1.0);
      const double alpha = std::clamp(1.6 * (1.0 - d / r), 0.0, 1.0);
      if (alpha <= 0.0) continue;
      for (int c = 0; c < 3; ++c) {
        const double v = img.at(x, y, c);
        img.at(x, y, c) = clamp_u8(alpha * shade + (1.0 - alpha) * v);
      }
    }
}

}  // namespace synth_detail

/// High-contrast source domain: 1-3 water bodies (ellipse lakes / wide
/// meandering rivers), optional cloud occluders drawn on the image only.
inline std::pair<RasterImage, LabelMask> gen_source_scene(const SceneConfig& cfg,
                                                          uint64_t seed) {
  using namespace synth_detail;
  validate(cfg);
  require(cfg.domain == SceneConfig::Domain::source, errkind::bad_argument,
          "gen_source_scene needs domain=source");
  const int S = cfg.size;
  Rng rng(seed);

  const auto& base = cfg.background_palette[rng.uniform_index(cfg.background_palette.size())];
  CoarseField field(rng, 5, 14.0);

  LabelMask mask(S, S);
  const int n_bodies = 1 + int(rng.uniform_index(3));
  for (int i = 0; i < n_bodies; ++i) {
    if (rng.bernoulli(0.5)) {
      const double a = rng.uniform(0.10, 0.18) * S, b = rng.uniform(0.10, 0.18) * S;
      const double cx = rng.uniform(0.2, 0.8) * S, cy = rng.uniform(0.2, 0.8) * S;
      fill_ellipse(mask, cx, cy, a, b);
    } else {
      const int w = cfg.river_width_min +
                    int(rng.uniform_index(uint64_t(cfg.river_width_max - cfg.river_width_min + 1)));
      draw_ribbon(mask, rng, w, 0.15 * S, 0.85 * S, 0.6);
    }
  }

  // water color pulled toward the palette water tone; small jitter only, the
  // corpus-level faint-to-strong spread comes from scene_config_for_index
  const double gap = cfg.contrast_gap * rng.uniform(0.92, 1.08);
  std::array<double, 3> wc;
  for (int c = 0; c < 3; ++c) {
    const double jitter = rng.uniform(-8.0, 8.0);
    wc[size_t(c)] =
        base[size_t(c)] + gap * (cfg.water_color[size_t(c)] - base[size_t(c)]) + jitter;
  }

  RasterImage img(S, S);
  for (int y = 0; y < S; ++y)
    for (int x = 0; x < S; ++x) {
      const double shade = field.at(double(x) / S, double(y) / S);
      for (int c = 0; c < 3; ++c) {
        const double v = mask.at(x, y) ? wc[size_t(c)] + shade * 0.3
                                       : double(base[size_t(c)]) + shade;
        img.at(x, y, c) = clamp_u8(v);
      }
    }

  if (rng.bernoulli(cfg.cloud_prob)) {
    const int n_clouds = 1 + int(rng.uniform_index(2));
    for (int i = 0; i < n_clouds; ++i) add_cloud(img, rng);  // labels stay truthful
  }

  for (size_t i = 0; i < img.data.size(); ++i)
    img.data[i] = clamp_u8(double(img.data[i]) + rng.normal(0.0, cfg.noise_sigma));
  return {std::move(img), std::move(mask)};
}

/// Turbid narrow-gully target domain: 1-2 thin high-curvature channels plus
/// occasional pools; water color blended toward the sediment background and
/// gully-texture striations behind.
inline std::pair<RasterImage, LabelMask> gen_target_scene(const SceneConfig& cfg,
                                                          uint64_t seed) {
  using namespace synth_detail;
  validate(cfg);
  require(cfg.domain == SceneConfig::Domain::target, errkind::bad_argument,
          "gen_target_scene needs domain=target");
  const int S = cfg.size;
  Rng rng(seed);

  const auto& base = cfg.background_palette[rng.uniform_index(cfg.background_palette.size())];
  CoarseField field(rng, 6, 10.0);
  const double stripe_period = rng.uniform(7.0, 18.0);
  const double stripe_phase = rng.uniform(0.0, 6.283185307179586);
  const double stripe_angle = rng.uniform(-0.5, 0.5);
  const double stripe_amp = rng.uniform(5.0, 9.0);

  LabelMask mask(S, S);
  const int n_channels = 1 + int(rng.uniform_index(2));
  for (int i = 0; i < n_channels; ++i) {
    const int w = cfg.channel_width_min +
                  int(rng.uniform_index(uint64_t(cfg.channel_width_max - cfg.channel_width_min + 1)));
    // disjoint horizontal bands keep channels from overlapping into wide blobs
    const double band_lo = (0.1 + 0.8 * double(i) / n_channels) * S;
    const double band_hi = (0.1 + 0.8 * double(i + 1) / n_channels) * S - 0.05 * S;
    draw_ribbon(mask, rng, w, band_lo, band_hi, 1.1);
  }
  if (rng.bernoulli(0.4)) {
    const int n_pools = 1 + int(rng.uniform_index(2));
    for (int i = 0; i < n_pools; ++i) {
      const double r = 1.0 + rng.uniform(0.0, cfg.channel_width_max / 2.0 - 1.0);
      // keep pools clear of the channels so water widths stay bounded
      for (int attempt = 0; attempt < 8; ++attempt) {
        const double cx = rng.uniform(0.1, 0.9) * S, cy = rng.uniform(0.1, 0.9) * S;
        bool clear = true;
        const int margin = int(r) + 2;
        for (int y = std::max(0, int(cy) - margin); clear && y <= std::min(S - 1, int(cy) + margin); ++y)
          for (int x = std::max(0, int(cx) - margin); x <= std::min(S - 1, int(cx) + margin); ++x)
            if (mask.at(x, y)) {
              clear = false;
              break;
            }
        if (clear) {
          fill_ellipse(mask, cx, cy, r, r);
          break;
        }
      }
    }
  }

  std::array<double, 3> wc;
  for (int c = 0; c < 3; ++c)
    wc[size_t(c)] = cfg.turbidity_blend * base[size_t(c)] +
                    (1.0 - cfg.turbidity_blend) * cfg.water_color[size_t(c)];

  RasterImage img(S, S);
  const double ca = std::cos(stripe_angle), sa = std::sin(stripe_angle);
  for (int y = 0; y < S; ++y)
    for (int x = 0; x < S; ++x) {
      const double shade = field.at(double(x) / S, double(y) / S);
      const double stripes =
          stripe_amp * std::sin(6.283185307179586 * (x * ca + y * sa) / stripe_period +
                                stripe_phase);
      for (int c = 0; c < 3; ++c) {
        const double v = mask.at(x, y) ? wc[size_t(c)] + shade * 0.5
                                       : double(base[size_t(c)]) + shade + stripes;
        img.at(x, y, c) = clamp_u8(v);
      }
    }

  if (rng.bernoulli(cfg.cloud_prob)) add_cloud(img, rng);

  for (size_t i = 0; i < img.data.size(); ++i)
    img.data[i] = clamp_u8(double(img.data[i]) + rng.normal(0.0, cfg.noise_sigma));
  return {std::move(img), std::move(mask)};
}

inline std::pair<RasterImage, LabelMask> gen_scene(const SceneConfig& cfg, uint64_t seed) {
  return cfg.domain == SceneConfig::Domain::source ? gen_source_scene(cfg, seed)
                                                   : gen_target_scene(cfg, seed);
}

/// Per-scene config within a corpus. Source scenes cycle a contrast ladder
/// from faint to strong, so every corpus covers the whole separation range.
inline SceneConfig scene_config_for_index(const SceneConfig& base, int index) {
  SceneConfig out = base;
  if (base.domain == SceneConfig::Domain::source) {
    static constexpr double kGapLadder[4] = {0.35, 0.6, 0.85, 1.1};
    out.contrast_gap = base.contrast_gap * kGapLadder[index % 4];
  }
  return out;
}

struct SynthDatasetConfig {
  SceneConfig source_scene;
  SceneConfig target_scene;
  TileConfig tile{128, 64, true, true};
  double split_ratio = 0.9;

  SynthDatasetConfig() {
    source_scene.domain = SceneConfig::Domain::source;
    target_scene.domain = SceneConfig::Domain::target;
    target_scene.cloud_prob = 0.0;
  }
};

/// Generates both domains, tiles them, and splits each 9:1. Scene seeds
/// derive from the master seed, so the whole corpus replays byte-for-byte.
inline std::pair<DatasetSplit, DatasetSplit> build_synthetic_datasets(
    int n_source, int n_target, uint64_t master_seed, const SynthDatasetConfig& cfg = {}) {
  require(n_source >= 2 && n_target >= 2, errkind::bad_argument,
          "need at least 2 scenes per domain");
  Rng master(master_seed);
  auto gen_domain = [&](const SceneConfig& scfg, int count, const std::string& tag,
                        uint64_t salt) {
    std::vector<TilePatch> patches;
    for (int i = 0; i < count; ++i) {
      auto [img, mask] = gen_scene(scene_config_for_index(scfg, i),
                                   master.derive(salt + uint64_t(i)).next_u64());
      auto ps = extract_patches(img, mask, cfg.tile, tag + std::to_string(i));
      for (auto& p : ps) patches.push_back(std::move(p));
    }
    return patches;
  };
  auto source_patches = gen_domain(cfg.source_scene, n_source, "src", 0x1000);
  auto target_patches = gen_domain(cfg.target_scene, n_target, "tgt", 0x2000);
  DatasetSplit source =
      split_dataset(std::move(source_patches), cfg.split_ratio, master.derive(0x3000).next_u64());
  DatasetSplit target =
      split_dataset(std::move(target_patches), cfg.split_ratio, master.derive(0x3001).next_u64());
  return {std::move(source), std::move(target)};
}

}  // namespace hydroseg
