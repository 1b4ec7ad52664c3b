#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "hydroseg/common.hpp"

namespace hydroseg {

/// 8-bit RGB scene, row-major interleaved samples.
struct RasterImage {
  int width = 0;
  int height = 0;
  static constexpr int channels = 3;
  std::vector<uint8_t> data;

  RasterImage() = default;
  RasterImage(int w, int h) : width(w), height(h), data(size_t(w) * h * 3, 0) {
    require(w >= 1 && h >= 1, errkind::bad_argument, "image dims must be >= 1");
  }
  RasterImage(int w, int h, std::vector<uint8_t> d) : width(w), height(h), data(std::move(d)) {
    require(w >= 1 && h >= 1, errkind::bad_argument, "image dims must be >= 1");
    require(data.size() == size_t(w) * h * 3, errkind::shape_mismatch,
            "image data length != width*height*3");
  }

  size_t idx(int x, int y, int c) const { return (size_t(y) * width + x) * 3 + c; }
  uint8_t at(int x, int y, int c) const { return data[idx(x, y, c)]; }
  uint8_t& at(int x, int y, int c) { return data[idx(x, y, c)]; }
};

/// Binary water mask: 0 = background, 1 = water. Construction rejects anything else.
struct LabelMask {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> data;

  LabelMask() = default;
  LabelMask(int w, int h) : width(w), height(h), data(size_t(w) * h, 0) {
    require(w >= 1 && h >= 1, errkind::bad_argument, "mask dims must be >= 1");
  }
  LabelMask(int w, int h, std::vector<uint8_t> d) : width(w), height(h), data(std::move(d)) {
    require(w >= 1 && h >= 1, errkind::bad_argument, "mask dims must be >= 1");
    require(data.size() == size_t(w) * h, errkind::shape_mismatch,
            "mask data length != width*height");
    for (uint8_t v : data)
      require(v == 0 || v == 1, errkind::non_binary_mask, "mask value outside {0,1}");
  }

  size_t idx(int x, int y) const { return size_t(y) * width + x; }
  uint8_t at(int x, int y) const { return data[idx(x, y)]; }
  void set(int x, int y, uint8_t v) {
    require(v == 0 || v == 1, errkind::non_binary_mask, "mask value outside {0,1}");
    data[idx(x, y)] = v;
  }
  int64_t water_count() const {
    int64_t n = 0;
    for (uint8_t v : data) n += v;
    return n;
  }
};

/// Float raster used as network input; values must stay finite.
struct FloatRaster {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<float> data;

  FloatRaster() = default;
  FloatRaster(int w, int h, int c)
      : width(w), height(h), channels(c), data(size_t(w) * h * c, 0.0f) {}

  size_t idx(int x, int y, int c) const { return (size_t(y) * width + x) * channels + c; }
  float at(int x, int y, int c) const { return data[idx(x, y, c)]; }
  float& at(int x, int y, int c) { return data[idx(x, y, c)]; }

  bool all_finite() const {
    for (float v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

/// Per-channel (sample/255 - mean) / std.
inline FloatRaster normalize_image(const RasterImage& img, const std::array<float, 3>& mean,
                                   const std::array<float, 3>& stddev) {
  for (float s : stddev)
    require(s != 0.0f, errkind::bad_argument, "normalization std must be nonzero");
  FloatRaster out(img.width, img.height, 3);
  const size_t n = img.data.size();
  for (size_t i = 0; i < n; ++i) {
    const int c = int(i % 3);
    out.data[i] = (float(img.data[i]) / 255.0f - mean[c]) / stddev[c];
  }
  return out;
}

inline constexpr std::array<float, 3> kDefaultMean{0.5f, 0.5f, 0.5f};
inline constexpr std::array<float, 3> kDefaultStd{0.5f, 0.5f, 0.5f};

}  // namespace hydroseg
