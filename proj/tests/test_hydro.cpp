#include <doctest.h>

#include <cmath>
#include <set>

#include "hydroseg/hydro.hpp"
#include "hydroseg/rng.hpp"

using namespace hydroseg;

namespace {

LabelMask band_mask(int W, int H, int x0, int x1, int y0, int y1) {
  LabelMask m(W, H);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) m.set(x, y, 1);
  return m;
}

// 1-px-wide axis-aligned square ring with side `side`, corner at (ox, oy)
LabelMask ring_mask(int W, int H, int ox, int oy, int side) {
  LabelMask m(W, H);
  for (int i = 0; i < side; ++i) {
    m.set(ox + i, oy, 1);
    m.set(ox + i, oy + side - 1, 1);
    m.set(ox, oy + i, 1);
    m.set(ox + side - 1, oy + i, 1);
  }
  return m;
}

LabelMask lake_fixture() {
  LabelMask m(440, 200);
  for (int x = 20; x < 420; ++x) m.set(x, 100, 1);  // 1-px channel, length ~400
  for (int y = 70; y <= 130; ++y)
    for (int x = 190; x <= 250; ++x)
      if ((y - 100) * (y - 100) + (x - 220) * (x - 220) <= 25 * 25) m.set(x, y, 1);
  return m;
}

}  // namespace

TEST_CASE("skeletonize small fixtures") {
  SUBCASE("empty mask is an error") {
    LabelMask m(8, 8);
    CHECK_THROWS_AS(skeletonize(m), Error);
  }
  SUBCASE("single pixel is its own skeleton") {
    LabelMask m(9, 9);
    m.set(4, 4, 1);
    LabelMask sk = skeletonize(m);
    CHECK(sk.water_count() == 1);
    CHECK(sk.at(4, 4) == 1);
  }
  SUBCASE("3x3 solid square thins to its center") {
    LabelMask m(9, 9);
    for (int y = 3; y < 6; ++y)
      for (int x = 3; x < 6; ++x) m.set(x, y, 1);
    LabelMask sk = skeletonize(m);
    CHECK(sk.water_count() == 1);
    CHECK(sk.at(4, 4) == 1);
  }
  SUBCASE("skeleton is a subset of the mask") {
    Rng rng(41);
    for (int trial = 0; trial < 10; ++trial) {
      LabelMask m(40, 40);
      // random blobs
      for (int b = 0; b < 3; ++b) {
        int cx = 5 + int(rng.uniform_index(30)), cy = 5 + int(rng.uniform_index(30));
        int r = 2 + int(rng.uniform_index(4));
        for (int y = std::max(0, cy - r); y <= std::min(39, cy + r); ++y)
          for (int x = std::max(0, cx - r); x <= std::min(39, cx + r); ++x)
            if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) m.set(x, y, 1);
      }
      if (m.water_count() == 0) continue;
      LabelMask sk = skeletonize(m);
      for (size_t i = 0; i < m.data.size(); ++i)
        if (sk.data[i]) CHECK(m.data[i] == 1);
    }
  }
}

TEST_CASE("five-wide band of length 100 measures 100 +/- 2") {
  LabelMask m = band_mask(130, 30, 10, 110, 10, 15);
  LabelMask sk = skeletonize(m);
  ChannelSkeleton ch = bin_channel(m, sk, 16.0);
  CHECK(ch.total_length >= 98.0);
  CHECK(ch.total_length <= 102.0);
}

TEST_CASE("skeleton translates with the mask") {
  LabelMask a = band_mask(60, 40, 5, 45, 10, 15);
  LabelMask b = band_mask(60, 40, 10, 50, 20, 25);
  LabelMask ska = skeletonize(a);
  LabelMask skb = skeletonize(b);
  for (int y = 0; y < 40; ++y)
    for (int x = 0; x < 60; ++x) {
      if (x + 5 < 60 && y + 10 < 40)
        CHECK(ska.at(x, y) == skb.at(std::min(x + 5, 59), std::min(y + 10, 39)));
    }
}

TEST_CASE("uniform ring river gives the diagonal curve") {
  LabelMask m = ring_mask(60, 60, 10, 10, 41);  // 160 px perimeter, unit steps
  LabelMask sk = skeletonize(m);
  CHECK(sk.data == m.data);  // a 1-px loop is already thin

  ChannelSkeleton ch = bin_channel(m, sk, 16.0);
  CHECK(ch.total_length == doctest::Approx(160.0).epsilon(1e-12));
  REQUIRE(ch.bins.size() == 10);
  for (const auto& b : ch.bins) {
    CHECK(b.length == doctest::Approx(16.0).epsilon(1e-12));
    CHECK(b.area == 16);
  }
  ConcentrationCurve curve = concentration_curve(ch);
  for (const auto& pt : curve.points)
    CHECK(std::fabs(pt.area_frac - pt.length_frac) < 1e-9);
  CHECK(concentration_stat(curve, 0.8) == doctest::Approx(0.8).epsilon(1e-9));
  CHECK(concentration_stat(curve, 1.0) == doctest::Approx(1.0));
}

TEST_CASE("lake-dominated fixture concentrates area") {
  LabelMask m = lake_fixture();
  ChannelAnalysis a = analyze_mask(m, 16.0);

  // conservation: bin areas sum to the water count exactly
  int64_t total_area = 0;
  for (const auto& b : a.channel.bins) total_area += b.area;
  CHECK(total_area == m.water_count());

  CHECK(a.stat_80 < 0.2);
  CHECK(a.stat_50 <= a.stat_80);
  CHECK(a.stat_80 <= a.stat_90);

  // curve dominates the diagonal
  for (const auto& pt : a.curve.points) CHECK(pt.area_frac >= pt.length_frac - 1e-12);

  // bin lengths sum to the total length
  double len = 0.0;
  for (const auto& b : a.channel.bins) len += b.length;
  CHECK(std::fabs(len - a.channel.total_length) < 1e-9);
}

TEST_CASE("area assignment matches an independent nearest-pixel oracle") {
  LabelMask m = lake_fixture();
  LabelMask sk = skeletonize(m);
  ChannelSkeleton ch = bin_channel(m, sk, 16.0);

  std::vector<std::pair<int, int>> spix;
  for (int y = 0; y < sk.height; ++y)
    for (int x = 0; x < sk.width; ++x)
      if (sk.at(x, y)) spix.emplace_back(y, x);

  std::vector<int64_t> areas(ch.bins.size(), 0);
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) {
      if (!m.at(x, y)) continue;
      int64_t bd = INT64_MAX;
      int bb = INT32_MAX;
      for (auto [sy, sx] : spix) {
        int64_t d2 = int64_t(sy - y) * (sy - y) + int64_t(sx - x) * (sx - x);
        int bin = ch.pixel_bin[size_t(sy) * m.width + sx];
        if (d2 < bd || (d2 == bd && bin < bb)) {
          bd = d2;
          bb = bin;
        }
      }
      areas[size_t(bb)] += 1;
    }
  for (size_t i = 0; i < areas.size(); ++i) CHECK(areas[i] == ch.bins[i].area);
}

TEST_CASE("concentration curve matches a sort-and-prefix-sum oracle") {
  Rng rng(2025);
  for (int trial = 0; trial < 30; ++trial) {
    ChannelSkeleton ch;
    ch.skeleton = LabelMask(1, 1, {1});
    const int n = 2 + int(rng.uniform_index(12));
    double total_len = 0.0;
    for (int i = 0; i < n; ++i) {
      ChannelBin b;
      b.id = i;
      b.length = rng.uniform(0.5, 20.0);
      b.area = int64_t(1 + rng.uniform_index(400));
      total_len += b.length;
      ch.bins.push_back(b);
    }
    ch.total_length = total_len;
    ConcentrationCurve got = concentration_curve(ch);

    // oracle: independent sort by density + prefix sums
    std::vector<std::pair<double, size_t>> order;
    for (size_t i = 0; i < ch.bins.size(); ++i)
      order.emplace_back(double(ch.bins[i].area) / ch.bins[i].length, i);
    std::stable_sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
      return a.first > b.first;
    });
    int64_t ta = 0;
    for (const auto& b : ch.bins) ta += b.area;
    double cl = 0.0;
    int64_t ca = 0;
    REQUIRE(got.points.size() == ch.bins.size() + 1);
    CHECK(got.points[0].length_frac == 0.0);
    CHECK(got.points[0].area_frac == 0.0);
    for (size_t i = 0; i < order.size(); ++i) {
      cl += ch.bins[order[i].second].length;
      ca += ch.bins[order[i].second].area;
      CHECK(got.points[i + 1].length_frac == doctest::Approx(cl / total_len).epsilon(1e-12));
      CHECK(got.points[i + 1].area_frac ==
            doctest::Approx(double(ca) / double(ta)).epsilon(1e-12));
    }
    CHECK(got.points.back().length_frac == 1.0);
    CHECK(got.points.back().area_frac == 1.0);

    // monotone stat in the threshold
    double prev = 0.0;
    for (double thr : {0.2, 0.4, 0.6, 0.8, 0.95, 1.0}) {
      double s = concentration_stat(got, thr);
      CHECK(s >= prev - 1e-12);
      prev = s;
    }
  }
}

TEST_CASE("degenerate one-hot concentration") {
  ChannelSkeleton ch;
  ch.skeleton = LabelMask(1, 1, {1});
  ch.bins = {{0, 10.0, 0}, {1, 10.0, 500}, {2, 10.0, 0}};
  ch.total_length = 30.0;
  // all area in one bin: curve jumps to 1 at that bin's length fraction
  ConcentrationCurve curve = concentration_curve(ch);
  CHECK(curve.points[1].area_frac == doctest::Approx(1.0));
  CHECK(curve.points[1].length_frac == doctest::Approx(1.0 / 3.0));
  CHECK(concentration_stat(curve, 0.8) <= 1.0 / 3.0 + 1e-12);
}
