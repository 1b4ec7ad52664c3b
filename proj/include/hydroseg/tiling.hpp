#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hydroseg/common.hpp"
#include "hydroseg/raster.hpp"
#include "hydroseg/rng.hpp"

namespace hydroseg {

struct TileConfig {
  int window = 512;
  int stride = 128;
  bool keep_only_water = true;
  bool edge_flush = true;
};

/// One cropped window with provenance back into its source scene.
struct TilePatch {
  RasterImage image;
  LabelMask mask;
  int origin_x = 0;
  int origin_y = 0;
  std::string source_id;
};

struct DatasetSplit {
  std::vector<TilePatch> train;
  std::vector<TilePatch> val;
  uint64_t seed = 0;
};

/// Window origins along one axis: stride grid, plus a flush position at
/// dim-window when the grid does not already land there.
inline std::vector<int> axis_origins(int dim, int window, int stride, bool edge_flush) {
  std::vector<int> out;
  for (int pos = 0; pos + window <= dim; pos += stride) out.push_back(pos);
  if (edge_flush) {
    int flush = dim - window;
    if (out.empty() || out.back() != flush) out.push_back(flush);
  }
  return out;
}

inline std::vector<std::pair<int, int>> tile_origins(int width, int height,
                                                     const TileConfig& cfg) {
  require(cfg.stride >= 1 && cfg.stride <= cfg.window, errkind::bad_argument,
          "stride must be in [1, window]");
  require(width >= cfg.window && height >= cfg.window, errkind::bad_argument,
          "image smaller than tile window");
  std::vector<int> xs = axis_origins(width, cfg.window, cfg.stride, cfg.edge_flush);
  std::vector<int> ys = axis_origins(height, cfg.window, cfg.stride, cfg.edge_flush);
  std::vector<std::pair<int, int>> out;
  out.reserve(xs.size() * ys.size());
  for (int y : ys)
    for (int x : xs) out.emplace_back(x, y);  // row-major
  return out;
}

inline RasterImage crop_image(const RasterImage& img, int x0, int y0, int w, int h) {
  RasterImage out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = img.at(x0 + x, y0 + y, c);
  return out;
}

inline LabelMask crop_mask(const LabelMask& mask, int x0, int y0, int w, int h) {
  LabelMask out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out.data[out.idx(x, y)] = mask.at(x0 + x, y0 + y);
  return out;
}

/// Synchronous image/mask cropping at every tile origin. Patches are deep
/// copies. With keep_only_water, windows whose mask sums to zero are dropped.
inline std::vector<TilePatch> extract_patches(const RasterImage& image, const LabelMask& mask,
                                              const TileConfig& cfg,
                                              const std::string& source_id = "") {
  require(image.width == mask.width && image.height == mask.height, errkind::shape_mismatch,
          "image/mask dimensions differ");
  std::vector<TilePatch> out;
  for (auto [x, y] : tile_origins(image.width, image.height, cfg)) {
    LabelMask m = crop_mask(mask, x, y, cfg.window, cfg.window);
    if (cfg.keep_only_water && m.water_count() == 0) continue;
    TilePatch p;
    p.image = crop_image(image, x, y, cfg.window, cfg.window);
    p.mask = std::move(m);
    p.origin_x = x;
    p.origin_y = y;
    p.source_id = source_id;
    out.push_back(std::move(p));
  }
  return out;
}

/// Seeded uniform shuffle, first floor(ratio*n) patches to train.
inline DatasetSplit split_dataset(std::vector<TilePatch> patches, double ratio, uint64_t seed) {
  require(ratio > 0.0 && ratio < 1.0, errkind::bad_argument, "split ratio must be in (0,1)");
  require(patches.size() >= 2, errkind::bad_argument, "need at least 2 patches to split");
  Rng rng(seed);
  rng.shuffle(patches);
  size_t n_train = size_t(ratio * double(patches.size()));
  DatasetSplit split;
  split.seed = seed;
  split.train.assign(patches.begin(), patches.begin() + n_train);
  split.val.assign(patches.begin() + n_train, patches.end());
  return split;
}

}  // namespace hydroseg
