#pragma once

// Channel-network analysis of a water mask: iterative thinning to a skeleton,
// arc-length binning along a deterministic traversal, water-area assignment
// by nearest skeleton pixel, and the cumulative concentration curve.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "hydroseg/common.hpp"
#include "hydroseg/raster.hpp"

namespace hydroseg {

namespace hydro_detail {

// neighbor ring P2..P9 = N,NE,E,SE,S,SW,W,NW
inline constexpr int kRing[8][2] = {{-1, 0}, {-1, 1}, {0, 1},  {1, 1},
                                    {1, 0},  {1, -1}, {0, -1}, {-1, -1}};

inline int at(const std::vector<uint8_t>& g, int w, int h, int y, int x) {
  if (y < 0 || y >= h || x < 0 || x >= w) return 0;
  return g[size_t(y) * w + x];
}

}  // namespace hydro_detail

/// Two-subiteration thinning to fixpoint, then endpoint reconstruction: each
/// skeleton endpoint is extended along its ray while still inside the water
/// mask, recovering the channel length the erosion retracts at the ends.
inline LabelMask skeletonize(const LabelMask& mask) {
  using namespace hydro_detail;
  require(mask.water_count() >= 1, errkind::bad_argument,
          "skeletonize requires at least one water pixel");
  const int w = mask.width, h = mask.height;
  std::vector<uint8_t> grid = mask.data;

  std::vector<size_t> to_delete;
  bool changed = true;
  while (changed) {
    changed = false;
    for (int phase = 0; phase < 2; ++phase) {
      to_delete.clear();
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          if (!grid[size_t(y) * w + x]) continue;
          int p[8];
          int b = 0;
          for (int k = 0; k < 8; ++k) {
            p[k] = at(grid, w, h, y + kRing[k][0], x + kRing[k][1]);
            b += p[k];
          }
          if (b < 2 || b > 6) continue;
          int a = 0;
          for (int k = 0; k < 8; ++k)
            if (p[k] == 0 && p[(k + 1) % 8] == 1) ++a;
          if (a != 1) continue;
          if (phase == 0) {
            if (p[0] * p[2] * p[4] != 0) continue;  // N*E*S
            if (p[2] * p[4] * p[6] != 0) continue;  // E*S*W
          } else {
            if (p[0] * p[2] * p[6] != 0) continue;  // N*E*W
            if (p[0] * p[4] * p[6] != 0) continue;  // N*S*W
          }
          to_delete.push_back(size_t(y) * w + x);
        }
      if (!to_delete.empty()) {
        changed = true;
        for (size_t i : to_delete) grid[i] = 0;
      }
    }
  }

  // endpoint reconstruction into the mask
  std::vector<std::pair<int, int>> endpoints;  // (y,x) with its single neighbor direction
  std::vector<std::pair<int, int>> dirs;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!grid[size_t(y) * w + x]) continue;
      int deg = 0, ny = 0, nx = 0;
      for (auto& d : kRing)
        if (at(grid, w, h, y + d[0], x + d[1])) {
          ++deg;
          ny = y + d[0];
          nx = x + d[1];
        }
      if (deg == 1) {
        endpoints.emplace_back(y, x);
        dirs.emplace_back(y - ny, x - nx);
      }
    }
  for (size_t i = 0; i < endpoints.size(); ++i) {
    int y = endpoints[i].first + dirs[i].first;
    int x = endpoints[i].second + dirs[i].second;
    while (y >= 0 && y < h && x >= 0 && x < w && mask.data[size_t(y) * w + x] &&
           !grid[size_t(y) * w + x]) {
      grid[size_t(y) * w + x] = 1;
      y += dirs[i].first;
      x += dirs[i].second;
    }
  }
  return LabelMask(w, h, std::move(grid));
}

struct ChannelBin {
  int id = 0;
  double length = 0.0;
  int64_t area = 0;
};

struct ChannelSkeleton {
  LabelMask skeleton;
  double total_length = 0.0;
  std::vector<ChannelBin> bins;
  std::vector<int> pixel_bin;  // per grid cell: bin id of skeleton pixels, -1 elsewhere
};

/// Walks the skeleton (DFS, fixed neighbor order; components in scan order,
/// starting from a degree-1 pixel when one exists), cuts the cumulative arc
/// length into bins of bin_len, and assigns every water pixel to the bin of
/// its nearest skeleton pixel (Euclidean; ties to the lower bin id).
inline ChannelSkeleton bin_channel(const LabelMask& mask, const LabelMask& skeleton,
                                   double bin_len = 16.0) {
  using namespace hydro_detail;
  require(mask.width == skeleton.width && mask.height == skeleton.height, errkind::shape_mismatch,
          "mask/skeleton dims differ");
  require(bin_len > 0.0, errkind::bad_argument, "bin_len must be > 0");
  const int w = mask.width, h = mask.height;
  for (size_t i = 0; i < mask.data.size(); ++i)
    require(!skeleton.data[i] || mask.data[i], errkind::bad_argument,
            "skeleton must be a subset of the mask");

  std::vector<std::pair<int, int>> pixels;  // (y,x) of skeleton pixels, scan order
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (skeleton.at(x, y)) pixels.emplace_back(y, x);
  require(!pixels.empty(), errkind::bad_argument, "empty skeleton");

  const double kDiag = std::sqrt(2.0);
  auto step_len = [&](int dy, int dx) { return (dy != 0 && dx != 0) ? kDiag : 1.0; };

  std::vector<int> pixel_bin(size_t(w) * h, -1);
  std::vector<double> contribution(size_t(w) * h, 0.0);
  std::vector<uint8_t> visited(size_t(w) * h, 0);
  std::vector<int> degree(size_t(w) * h, 0);
  for (auto [y, x] : pixels) {
    int d = 0;
    for (auto& dd : kRing)
      if (at(skeleton.data, w, h, y + dd[0], x + dd[1])) ++d;
    degree[size_t(y) * w + x] = d;
  }

  double cumulative = 0.0;
  // component starts: degree-1 pixels first (scan order), then any pixel
  std::vector<std::pair<int, int>> starts;
  for (auto& p : pixels)
    if (degree[size_t(p.first) * w + p.second] == 1) starts.push_back(p);
  for (auto& p : pixels) starts.push_back(p);

  for (auto& start : starts) {
    const size_t sidx = size_t(start.first) * w + start.second;
    if (visited[sidx]) continue;
    struct Item {
      int y, x;
      double edge;  // tree-edge length into this pixel
    };
    // visited is marked at pop time so the walk can re-route through axis
    // corners with unit steps instead of committing to diagonal shortcuts
    std::vector<Item> stack{{start.first, start.second, 0.0}};
    std::pair<int, int> last{start.first, start.second};
    while (!stack.empty()) {
      Item it = stack.back();
      stack.pop_back();
      const size_t idx = size_t(it.y) * w + it.x;
      if (visited[idx]) continue;
      visited[idx] = 1;
      cumulative += it.edge;
      contribution[idx] = it.edge;
      pixel_bin[idx] = int(cumulative / bin_len);
      last = {it.y, it.x};
      // diagonals pushed first, cardinals last: the LIFO pop then prefers
      // unit steps, so axis corners are walked instead of cut
      static constexpr int kPushOrder[8] = {1, 3, 5, 7, 0, 2, 4, 6};
      for (int oi : kPushOrder) {
        const auto& d = kRing[oi];
        const int ny = it.y + d[0], nx = it.x + d[1];
        if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
        const size_t nidx = size_t(ny) * w + nx;
        if (!skeleton.data[nidx] || visited[nidx]) continue;
        stack.push_back({ny, nx, step_len(d[0], d[1])});
      }
    }
    // closed loop: the walk ends adjacent to its start, so the closing step
    // belongs to the start pixel
    const int dy = std::abs(last.first - start.first), dx = std::abs(last.second - start.second);
    if ((dy != 0 || dx != 0) && dy <= 1 && dx <= 1) {
      const double closing = step_len(dy, dx);
      cumulative += closing;
      contribution[sidx] += closing;
    }
  }

  const int n_bins = 1 + *std::max_element(pixel_bin.begin(), pixel_bin.end());
  ChannelSkeleton out;
  out.skeleton = skeleton;
  out.pixel_bin = pixel_bin;
  out.total_length = cumulative;
  out.bins.resize(size_t(n_bins));
  for (int b = 0; b < n_bins; ++b) out.bins[size_t(b)].id = b;
  for (auto [y, x] : pixels) {
    const size_t idx = size_t(y) * w + x;
    out.bins[size_t(pixel_bin[idx])].length += contribution[idx];
  }

  // nearest-skeleton-pixel area assignment, brute force
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!mask.at(x, y)) continue;
      int64_t best_d2 = INT64_MAX;
      int best_bin = INT32_MAX;
      for (auto [sy, sx] : pixels) {
        const int64_t dy = sy - y, dx = sx - x;
        const int64_t d2 = dy * dy + dx * dx;
        const int b = pixel_bin[size_t(sy) * w + sx];
        if (d2 < best_d2 || (d2 == best_d2 && b < best_bin)) {
          best_d2 = d2;
          best_bin = b;
        }
      }
      out.bins[size_t(best_bin)].area += 1;
    }
  return out;
}

struct ConcentrationPoint {
  double length_frac = 0.0;
  double area_frac = 0.0;
};

struct ConcentrationCurve {
  std::vector<ConcentrationPoint> points;  // (0,0) ... (1,1)
};

/// Bins sorted by area density (descending; zero-length bins first, ties by
/// id), then cumulative (length fraction, area fraction) prefix sums.
inline ConcentrationCurve concentration_curve(const ChannelSkeleton& ch) {
  require(!ch.bins.empty(), errkind::bad_argument, "no bins");
  std::vector<ChannelBin> sorted = ch.bins;
  auto density = [](const ChannelBin& b) {
    return b.length > 0.0 ? double(b.area) / b.length
                          : std::numeric_limits<double>::infinity();
  };
  std::stable_sort(sorted.begin(), sorted.end(), [&](const ChannelBin& a, const ChannelBin& b) {
    const double da = density(a), db = density(b);
    if (da != db) return da > db;
    return a.id < b.id;
  });
  double total_len = 0.0;
  int64_t total_area = 0;
  for (const auto& b : sorted) {
    total_len += b.length;
    total_area += b.area;
  }
  require(total_area > 0, errkind::bad_argument, "no water area assigned");

  ConcentrationCurve curve;
  curve.points.push_back({0.0, 0.0});
  double cl = 0.0;
  int64_t ca = 0;
  for (const auto& b : sorted) {
    cl += b.length;
    ca += b.area;
    curve.points.push_back({cl / total_len, double(ca) / double(total_area)});
  }
  curve.points.back() = {1.0, 1.0};
  return curve;
}

/// Smallest cumulative length fraction reaching the area threshold, linearly
/// interpolated between curve points.
inline double concentration_stat(const ConcentrationCurve& curve, double area_threshold = 0.8) {
  require(area_threshold > 0.0 && area_threshold <= 1.0, errkind::bad_argument,
          "area threshold must be in (0,1]");
  require(curve.points.size() >= 2, errkind::bad_argument, "degenerate curve");
  for (size_t i = 1; i < curve.points.size(); ++i) {
    const auto& prev = curve.points[i - 1];
    const auto& cur = curve.points[i];
    if (cur.area_frac >= area_threshold) {
      if (cur.area_frac == prev.area_frac) return cur.length_frac;
      const double t = (area_threshold - prev.area_frac) / (cur.area_frac - prev.area_frac);
      return prev.length_frac + t * (cur.length_frac - prev.length_frac);
    }
  }
  return 1.0;
}

/// Convenience: full analysis for one mask.
struct ChannelAnalysis {
  ChannelSkeleton channel;
  ConcentrationCurve curve;
  double stat_50 = 0.0;
  double stat_80 = 0.0;
  double stat_90 = 0.0;
};

inline ChannelAnalysis analyze_mask(const LabelMask& mask, double bin_len = 16.0) {
  ChannelAnalysis a;
  LabelMask sk = skeletonize(mask);
  a.channel = bin_channel(mask, sk, bin_len);
  a.curve = concentration_curve(a.channel);
  a.stat_50 = concentration_stat(a.curve, 0.5);
  a.stat_80 = concentration_stat(a.curve, 0.8);
  a.stat_90 = concentration_stat(a.curve, 0.9);
  return a;
}

}  // namespace hydroseg
