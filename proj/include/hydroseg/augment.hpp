#pragma once

// Training-time augmentation. Patches here hold images as [0,1] floats
// (sample/255); mean/std normalization happens later at batch assembly.
// Geometric ops transform image and mask through the same indices;
// photometric ops never touch the mask.

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "hydroseg/common.hpp"
#include "hydroseg/raster.hpp"
#include "hydroseg/rng.hpp"

namespace hydroseg {

struct FloatPatch {
  FloatRaster image;  // values in [0,1]
  LabelMask mask;
};

struct AugmentConfig {
  double flip_prob = 0.5;
  double scale_low = 0.5;
  double scale_high = 2.0;
  int out_size = 512;
  double brightness_delta = 0.125;
  double contrast_low = 0.5;
  double contrast_high = 1.5;
  double saturation_low = 0.5;
  double saturation_high = 1.5;
  double photometric_apply_prob = 0.5;
  uint64_t seed = 0;
};

inline void validate(const AugmentConfig& cfg) {
  require(cfg.flip_prob >= 0.0 && cfg.flip_prob <= 1.0, errkind::config,
          "flip_prob must be in [0,1]");
  require(cfg.scale_low > 0.0 && cfg.scale_low <= cfg.scale_high, errkind::config,
          "scale range must satisfy 0 < low <= high");
  require(cfg.out_size >= 1, errkind::config, "out_size must be >= 1");
}

inline FloatPatch to_float_patch(const RasterImage& image, const LabelMask& mask) {
  require(image.width == mask.width && image.height == mask.height, errkind::shape_mismatch,
          "patch image/mask dims differ");
  FloatPatch p;
  p.image = FloatRaster(image.width, image.height, 3);
  for (size_t i = 0; i < image.data.size(); ++i) p.image.data[i] = float(image.data[i]) / 255.0f;
  p.mask = mask;
  return p;
}

// fold any integer into [0, n) by reflection with edge duplication
inline int reflect_fold(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

inline FloatRaster bilinear_resize_raster(const FloatRaster& src, int nw, int nh) {
  FloatRaster out(nw, nh, src.channels);
  for (int oy = 0; oy < nh; ++oy) {
    double sy = (double(oy) + 0.5) * double(src.height) / double(nh) - 0.5;
    int y0 = int(std::floor(sy));
    double fy = sy - y0;
    int y0c = std::clamp(y0, 0, src.height - 1);
    int y1c = std::clamp(y0 + 1, 0, src.height - 1);
    for (int ox = 0; ox < nw; ++ox) {
      double sx = (double(ox) + 0.5) * double(src.width) / double(nw) - 0.5;
      int x0 = int(std::floor(sx));
      double fx = sx - x0;
      int x0c = std::clamp(x0, 0, src.width - 1);
      int x1c = std::clamp(x0 + 1, 0, src.width - 1);
      for (int c = 0; c < src.channels; ++c) {
        double a = src.at(x0c, y0c, c), b = src.at(x1c, y0c, c);
        double d = src.at(x0c, y1c, c), e = src.at(x1c, y1c, c);
        double top = a + (b - a) * fx;
        double bot = d + (e - d) * fx;
        out.at(ox, oy, c) = float(top + (bot - top) * fy);
      }
    }
  }
  return out;
}

inline LabelMask nearest_resize_mask(const LabelMask& src, int nw, int nh) {
  LabelMask out(nw, nh);
  for (int oy = 0; oy < nh; ++oy) {
    int sy = std::clamp(int((double(oy) + 0.5) * double(src.height) / double(nh)), 0,
                        src.height - 1);
    for (int ox = 0; ox < nw; ++ox) {
      int sx = std::clamp(int((double(ox) + 0.5) * double(src.width) / double(nw)), 0,
                          src.width - 1);
      out.data[out.idx(ox, oy)] = src.at(sx, sy);
    }
  }
  return out;
}

/// Mirror image and mask about the vertical axis with probability flip_prob.
inline FloatPatch random_hflip(FloatPatch patch, Rng& rng, double flip_prob = 0.5) {
  if (!rng.bernoulli(flip_prob)) return patch;
  const int w = patch.image.width, h = patch.image.height;
  FloatPatch out = patch;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) out.image.at(x, y, c) = patch.image.at(w - 1 - x, y, c);
      out.mask.data[out.mask.idx(x, y)] = patch.mask.at(w - 1 - x, y);
    }
  return out;
}

/// Uniform scale from scale_range (bilinear image, nearest mask), reflect-pad
/// up to out_size when the scaled patch is smaller, then a uniform random
/// out_size crop.
inline FloatPatch random_scale_crop(const FloatPatch& patch, Rng& rng,
                                    const AugmentConfig& cfg) {
  validate(cfg);
  const double s = rng.uniform(cfg.scale_low, cfg.scale_high);
  const int nw = std::max(1, int(std::lround(s * patch.image.width)));
  const int nh = std::max(1, int(std::lround(s * patch.image.height)));

  FloatRaster img =
      (nw == patch.image.width && nh == patch.image.height)
          ? patch.image
          : bilinear_resize_raster(patch.image, nw, nh);
  LabelMask mask = (nw == patch.mask.width && nh == patch.mask.height)
                       ? patch.mask
                       : nearest_resize_mask(patch.mask, nw, nh);

  const int out = cfg.out_size;
  // reflect-pad both planes out to at least the crop size
  if (nw < out || nh < out) {
    const int pw = std::max(out, nw), ph = std::max(out, nh);
    const int left = (pw - nw) / 2, top = (ph - nh) / 2;
    FloatRaster pimg(pw, ph, 3);
    LabelMask pmask(pw, ph);
    for (int y = 0; y < ph; ++y) {
      const int sy = reflect_fold(y - top, nh);
      for (int x = 0; x < pw; ++x) {
        const int sx = reflect_fold(x - left, nw);
        for (int c = 0; c < 3; ++c) pimg.at(x, y, c) = img.at(sx, sy, c);
        pmask.data[pmask.idx(x, y)] = mask.at(sx, sy);
      }
    }
    img = std::move(pimg);
    mask = std::move(pmask);
  }

  const int ox = int(rng.uniform_index(uint64_t(img.width - out + 1)));
  const int oy = int(rng.uniform_index(uint64_t(img.height - out + 1)));
  FloatPatch cropped;
  cropped.image = FloatRaster(out, out, 3);
  cropped.mask = LabelMask(out, out);
  for (int y = 0; y < out; ++y)
    for (int x = 0; x < out; ++x) {
      for (int c = 0; c < 3; ++c) cropped.image.at(x, y, c) = img.at(ox + x, oy + y, c);
      cropped.mask.data[cropped.mask.idx(x, y)] = mask.at(ox + x, oy + y);
    }
  return cropped;
}

/// Brightness shift, mean-anchored contrast (about 0.5), and saturation in a
/// luma/chroma decomposition, each applied independently with
/// photometric_apply_prob. Output clamped to [0,1]; mask untouched.
inline FloatPatch photometric_distort(FloatPatch patch, Rng& rng, const AugmentConfig& cfg) {
  FloatRaster& img = patch.image;
  if (rng.bernoulli(cfg.photometric_apply_prob)) {
    const float delta = float(rng.uniform(-cfg.brightness_delta, cfg.brightness_delta));
    for (auto& v : img.data) v += delta;
  }
  if (rng.bernoulli(cfg.photometric_apply_prob)) {
    const float c = float(rng.uniform(cfg.contrast_low, cfg.contrast_high));
    for (auto& v : img.data) v = 0.5f + c * (v - 0.5f);
  }
  if (rng.bernoulli(cfg.photometric_apply_prob)) {
    const float s = float(rng.uniform(cfg.saturation_low, cfg.saturation_high));
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) {
        const float luma = 0.299f * img.at(x, y, 0) + 0.587f * img.at(x, y, 1) +
                           0.114f * img.at(x, y, 2);
        for (int ch = 0; ch < 3; ++ch)
          img.at(x, y, ch) = luma + s * (img.at(x, y, ch) - luma);
      }
  }
  for (auto& v : img.data) v = std::clamp(v, 0.0f, 1.0f);
  return patch;
}

/// Full training-time policy: flip, scale-crop, photometric.
inline FloatPatch augment_patch(const FloatPatch& patch, Rng& rng, const AugmentConfig& cfg) {
  FloatPatch p = random_hflip(patch, rng, cfg.flip_prob);
  p = random_scale_crop(p, rng, cfg);
  return photometric_distort(std::move(p), rng, cfg);
}

}  // namespace hydroseg
