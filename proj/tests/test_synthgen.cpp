#include <doctest.h>

#include <cmath>

#include "hydroseg/synthgen.hpp"

using namespace hydroseg;

namespace {

// mean water color distance to mean background color
double class_color_distance(const RasterImage& img, const LabelMask& mask) {
  double wsum[3] = {0, 0, 0}, bsum[3] = {0, 0, 0};
  int64_t wn = 0, bn = 0;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      if (mask.at(x, y)) {
        for (int c = 0; c < 3; ++c) wsum[c] += img.at(x, y, c);
        ++wn;
      } else {
        for (int c = 0; c < 3; ++c) bsum[c] += img.at(x, y, c);
        ++bn;
      }
    }
  if (wn == 0 || bn == 0) return 0.0;
  double d2 = 0.0;
  for (int c = 0; c < 3; ++c) {
    const double d = wsum[c] / double(wn) - bsum[c] / double(bn);
    d2 += d * d;
  }
  return std::sqrt(d2);
}

// widest inscribed vertical run of water, a proxy for channel width
int max_vertical_run(const LabelMask& m) {
  int best = 0;
  for (int x = 0; x < m.width; ++x) {
    int run = 0;
    for (int y = 0; y < m.height; ++y) {
      run = m.at(x, y) ? run + 1 : 0;
      best = std::max(best, run);
    }
  }
  return best;
}

}  // namespace

TEST_CASE("scene generation is deterministic") {
  SceneConfig src;
  src.size = 96;
  auto [i1, m1] = gen_source_scene(src, 12345);
  auto [i2, m2] = gen_source_scene(src, 12345);
  CHECK(i1.data == i2.data);
  CHECK(m1.data == m2.data);

  SceneConfig tgt;
  tgt.size = 96;
  tgt.domain = SceneConfig::Domain::target;
  auto [t1, tm1] = gen_target_scene(tgt, 777);
  auto [t2, tm2] = gen_target_scene(tgt, 777);
  CHECK(t1.data == t2.data);
  CHECK(tm1.data == tm2.data);

  auto [t3, tm3] = gen_target_scene(tgt, 778);
  CHECK(t3.data != t1.data);
}

TEST_CASE("source water fraction stays in [0.02, 0.5] over 100 seeds") {
  SceneConfig cfg;
  cfg.size = 128;
  for (uint64_t seed = 0; seed < 100; ++seed) {
    auto [img, mask] = gen_source_scene(cfg, seed);
    const double frac = double(mask.water_count()) / double(cfg.size * cfg.size);
    INFO("seed " << seed << " frac " << frac);
    CHECK(frac >= 0.02);
    CHECK(frac <= 0.5);
  }
}

TEST_CASE("cloudless scenes never exceed palette max plus noise margin") {
  SceneConfig cfg;
  cfg.size = 96;
  cfg.cloud_prob = 0.0;
  int palette_max = 0;
  for (const auto& c : cfg.background_palette)
    for (int v : c) palette_max = std::max(palette_max, v);
  for (uint64_t seed = 0; seed < 40; ++seed) {
    auto [img, mask] = gen_source_scene(cfg, seed);
    // coarse shading reaches +-14, plus 3 sigma of pixel noise
    const int limit = palette_max + 14 + int(3.0 * cfg.noise_sigma) + 1;
    for (uint8_t v : img.data) CHECK(int(v) <= limit);
  }
}

TEST_CASE("full turbidity makes water match the background mean") {
  SceneConfig cfg;
  cfg.size = 96;
  cfg.domain = SceneConfig::Domain::target;
  cfg.turbidity_blend = 1.0;
  double acc = 0.0;
  for (uint64_t seed = 0; seed < 20; ++seed) {
    auto [img, mask] = gen_target_scene(cfg, seed);
    acc += class_color_distance(img, mask);
  }
  // striations and shading leave a small residual; well within noise scale
  CHECK(acc / 20.0 < 2.5 * cfg.noise_sigma);
}

TEST_CASE("target channel width never exceeds the configured maximum") {
  SceneConfig cfg;
  cfg.size = 128;
  cfg.domain = SceneConfig::Domain::target;
  for (uint64_t seed = 0; seed < 100; ++seed) {
    auto [img, mask] = gen_target_scene(cfg, seed);
    // ribbons are stamped as vertical runs of exactly w; pools are disks of
    // radius <= max/2; adjacent rows of a meander can stack two rows deep
    CHECK(max_vertical_run(mask) <= cfg.channel_width_max + 2);
  }
}

TEST_CASE("domain gap: source separation at least 3x target separation") {
  SceneConfig src;
  src.size = 96;
  SceneConfig tgt;
  tgt.size = 96;
  tgt.domain = SceneConfig::Domain::target;
  double src_acc = 0.0, tgt_acc = 0.0;
  for (uint64_t seed = 0; seed < 100; ++seed) {
    auto [si, sm] = gen_source_scene(src, seed);
    auto [ti, tm] = gen_target_scene(tgt, seed + 5000);
    src_acc += class_color_distance(si, sm);
    tgt_acc += class_color_distance(ti, tm);
  }
  CHECK(src_acc >= 3.0 * tgt_acc);
}

TEST_CASE("build_synthetic_datasets") {
  SynthDatasetConfig cfg;
  cfg.source_scene.size = 128;
  cfg.target_scene.size = 128;
  cfg.tile = TileConfig{64, 32, true, true};

  auto [source, target] = build_synthetic_datasets(4, 2, 99, cfg);
  CHECK(source.train.size() + source.val.size() >= 4);
  CHECK(target.train.size() + target.val.size() >= 2);
  CHECK(target.train.size() < source.train.size());  // the small-sample regime

  // every retained patch has water
  for (const auto& p : source.train) CHECK(p.mask.water_count() >= 1);
  for (const auto& p : target.val) CHECK(p.mask.water_count() >= 1);

  // byte-for-byte reproducible
  auto [s2, t2] = build_synthetic_datasets(4, 2, 99, cfg);
  REQUIRE(s2.train.size() == source.train.size());
  for (size_t i = 0; i < s2.train.size(); ++i) {
    CHECK(s2.train[i].image.data == source.train[i].image.data);
    CHECK(s2.train[i].mask.data == source.train[i].mask.data);
    CHECK(s2.train[i].source_id == source.train[i].source_id);
  }

  CHECK_THROWS_AS(build_synthetic_datasets(1, 2, 1, cfg), Error);
}
