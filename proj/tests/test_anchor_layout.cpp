#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "anchorlab/anchor_layout.hpp"
#include "oracle.hpp"
#include "random_instances.hpp"

using namespace anchorlab;

using fixtures::random_spec;
using fixtures::single;

TEST(AnchorSpec, Validation) {
  AnchorSpec s = single(16, 16);
  EXPECT_NO_THROW(s.validate());
  s.scales = {32, 16};
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s.scales = {16, 16};
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = single(16, 16, 3);
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = single(16, 16);
  s.shifts_per_scale[32] = 1;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = single(16, 16);
  s.shifts_per_scale[16] = 2;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = single(16, 0);
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = single(16, 16);
  s.ratios = {};
  EXPECT_THROW(s.validate(), std::invalid_argument);
}

TEST(BuildLayout, PlainLatticeOn64Plane) {
  const AnchorLayout layout(single(16, 16), 64, 64);
  ASSERT_EQ(layout.anchor_count(), 16u);
  std::set<std::pair<double, double>> centers;
  for (AnchorId id = 0; id < 16; ++id) {
    const auto a = layout.info(id);
    centers.insert({a.cx, a.cy});
    EXPECT_EQ(a.w, 16);
    EXPECT_EQ(a.h, 16);
  }
  std::set<std::pair<double, double>> expected;
  for (double y : {8, 24, 40, 56}) {
    for (double x : {8, 24, 40, 56}) expected.insert({x, y});
  }
  EXPECT_EQ(centers, expected);
  // row-major within a group
  EXPECT_EQ(layout.info(1).cx, 24);
  EXPECT_EQ(layout.info(4).cy, 24);
}

TEST(BuildLayout, ThreeShiftsQuadruplesAnchors) {
  auto spec = single(16, 16);
  spec.shifts_per_scale[16] = 3;
  const AnchorLayout layout(spec, 64, 64);
  EXPECT_EQ(layout.anchor_count(), 64u);
  // sub-lattice origins: (8,8), (16,8), (8,16), (16,16)
  EXPECT_EQ(layout.info(16).cx, 16);
  EXPECT_EQ(layout.info(16).cy, 8);
  EXPECT_EQ(layout.info(32).cx, 8);
  EXPECT_EQ(layout.info(32).cy, 16);
  EXPECT_EQ(layout.info(48).cx, 16);
  EXPECT_EQ(layout.info(48).cy, 16);
  EXPECT_EQ(layout.info(63).sublattice, 3);
  // boundary anchors are kept uncropped
  EXPECT_EQ(layout.box(63).right(), 72);
}

TEST(BuildLayout, StrideDivisorHalvesStride) {
  AnchorSpec spec;
  spec.scales = {16, 32};
  spec.stride_divisor = 2;
  const AnchorLayout layout(spec, 64, 64);
  EXPECT_EQ(layout.stride(), 8);
  EXPECT_EQ(layout.rows() * layout.cols(), 64u);
  EXPECT_EQ(layout.anchor_count(), 128u);
  EXPECT_EQ(layout.info(0).cx, 4);
}

TEST(BuildLayout, OneShiftIsBottomRight) {
  auto spec = single(16, 16);
  spec.shifts_per_scale[16] = 1;
  const AnchorLayout layout(spec, 32, 32);
  ASSERT_EQ(layout.anchor_count(), 8u);
  EXPECT_EQ(layout.info(4).cx, 16);
  EXPECT_EQ(layout.info(4).cy, 16);
}

TEST(BuildLayout, RatiosPreserveArea) {
  auto spec = single(16, 16);
  spec.ratios = {0.5, 1, 2};
  const AnchorLayout layout(spec, 16, 16);
  ASSERT_EQ(layout.anchor_count(), 3u);
  for (AnchorId id = 0; id < 3; ++id) {
    const auto a = layout.info(id);
    EXPECT_NEAR(a.w * a.h, 256.0, 1e-9);
    EXPECT_NEAR(a.h / a.w, a.ratio, 1e-12);
  }
}

TEST(BuildLayout, RejectsBadPlane) {
  EXPECT_THROW(AnchorLayout(single(16, 16), 0, 64), std::invalid_argument);
  EXPECT_THROW(AnchorLayout(single(16, 16), 64, -1), std::invalid_argument);
}

TEST(BuildLayout, DeterministicIdsAndRegularLattice) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const auto spec = random_spec(rng);
    const AnchorLayout a(spec, 100, 70), b(spec, 100, 70);
    ASSERT_EQ(a.anchor_count(), b.anchor_count());
    for (AnchorId id = 0; id < a.anchor_count(); ++id) ASSERT_EQ(a.box(id), b.box(id));
    for (const auto& g : a.groups()) {
      for (std::size_t c = 1; c < a.cols(); ++c) EXPECT_DOUBLE_EQ(a.center_x(g, c) - a.center_x(g, c - 1), a.stride());
      for (std::size_t r = 1; r < a.rows(); ++r) EXPECT_DOUBLE_EQ(a.center_y(g, r) - a.center_y(g, r - 1), a.stride());
    }
  }
}

TEST(EffectiveStride, Patterns) {
  auto spec = single(16, 16);
  EXPECT_EQ(effective_anchor_stride(spec, 16), 16);
  spec.shifts_per_scale[16] = 1;
  EXPECT_NEAR(effective_anchor_stride(spec, 16), 11.3137084989848, 1e-12);
  auto halved = single(16, 16, 2);
  halved.shifts_per_scale[16] = 3;
  EXPECT_EQ(effective_anchor_stride(halved, 16), 4);
  EXPECT_THROW(effective_anchor_stride(spec, 32), std::invalid_argument);
}

TEST(EffectiveStride, MonotoneInShifts) {
  for (int div : {1, 2, 4}) {
    auto s0 = single(16, 16, div), s1 = s0, s3 = s0;
    s1.shifts_per_scale[16] = 1;
    s3.shifts_per_scale[16] = 3;
    EXPECT_LE(effective_anchor_stride(s1, 16), effective_anchor_stride(s0, 16));
    EXPECT_LE(effective_anchor_stride(s3, 16), effective_anchor_stride(s1, 16));
    EXPECT_EQ(effective_anchor_stride(s3, 16), effective_anchor_stride(s0, 16) / 2);
  }
}

namespace {

// Largest distance to the nearest center of `scale`, on a grid over one
// interior period cell, by scanning every center.
double measured_covering_radius(const AnchorLayout& layout, double scale, double step) {
  std::vector<std::pair<double, double>> centers;
  for (AnchorId id = 0; id < layout.anchor_count(); ++id) {
    const auto a = layout.info(id);
    if (a.scale == scale) centers.emplace_back(a.cx, a.cy);
  }
  const double s = layout.stride();
  const double x0 = s / 2 + s * static_cast<double>(layout.cols() / 2 - 1);
  const double y0 = s / 2 + s * static_cast<double>(layout.rows() / 2 - 1);
  double worst = 0;
  for (double y = y0; y <= y0 + s + 1e-9; y += step) {
    for (double x = x0; x <= x0 + s + 1e-9; x += step) {
      double best = INFINITY;
      for (const auto& [cx, cy] : centers) best = std::min(best, std::hypot(x - cx, y - cy));
      worst = std::max(worst, best);
    }
  }
  return worst;
}

}  // namespace

TEST(CoveringRadius, AnalyticValues) {
  auto spec = single(16, 16);
  EXPECT_NEAR(covering_radius(AnchorLayout(spec, 64, 64), 16), 8 * std::numbers::sqrt2, 1e-12);
  spec.shifts_per_scale[16] = 1;
  EXPECT_NEAR(covering_radius(AnchorLayout(spec, 64, 64), 16), 8, 1e-12);
  spec.shifts_per_scale[16] = 3;
  EXPECT_NEAR(covering_radius(AnchorLayout(spec, 64, 64), 16), 4 * std::numbers::sqrt2, 1e-12);
  EXPECT_THROW(covering_radius(AnchorLayout(spec, 64, 64), 8), std::invalid_argument);
}

TEST(CoveringRadius, MatchesFineGridSearch) {
  const double step = 0.125;
  for (int n : {0, 1, 3}) {
    auto spec = single(16, 16);
    spec.shifts_per_scale[16] = n;
    const AnchorLayout layout(spec, 96, 96);
    EXPECT_NEAR(measured_covering_radius(layout, 16, step), covering_radius(layout, 16), step) << n;
  }
}

TEST(NearestCenters, PointOnAnchorCenter) {
  const AnchorLayout layout(single(16, 16), 64, 64);
  const auto ids = layout.nearest_centers(24, 40, 16);
  bool found = false;
  for (auto id : ids) {
    const auto a = layout.info(id);
    if (a.cx == 24 && a.cy == 40) found = true;
  }
  EXPECT_TRUE(found);
}

TEST(NearestCenters, CellMiddleHasFourEquidistant) {
  const AnchorLayout layout(single(16, 16), 64, 64);
  const auto ids = layout.nearest_centers(16, 16, 16);
  ASSERT_EQ(ids.size(), 4u);
  for (auto id : ids) {
    const auto a = layout.info(id);
    EXPECT_DOUBLE_EQ(std::hypot(a.cx - 16, a.cy - 16), 8 * std::numbers::sqrt2);
  }
}

TEST(NearestCenters, UnknownScaleThrows) {
  const AnchorLayout layout(single(16, 16), 64, 64);
  EXPECT_THROW(layout.nearest_centers(1, 1, 32), std::invalid_argument);
}

TEST(NearestCenters, ThreeShiftsContainBruteForceMax) {
  auto spec = single(16, 16);
  spec.shifts_per_scale[16] = 3;
  const AnchorLayout layout(spec, 128, 128);
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> pos(0, 128);
  for (int i = 0; i < 300; ++i) {
    const double px = pos(rng), py = pos(rng);
    const auto ids = layout.nearest_centers(px, py, 16);
    ASSERT_LE(ids.size(), 16u);
    const auto face = RectBox::from_center(px, py, 16, 16);
    double best = 0;
    for (auto id : ids) best = std::max(best, iou(face, layout.box(id)));
    EXPECT_EQ(best, oracle::max_iou_at_scale(layout, face, 16));
  }
}

TEST(NearestCenters, SoundOnRandomSpecsAndFaces) {
  std::mt19937_64 rng(29);
  for (int trial = 0; trial < 60; ++trial) {
    const auto spec = random_spec(rng);
    std::uniform_real_distribution<double> extent(8, 256);
    const AnchorLayout layout(spec, extent(rng), extent(rng));
    std::uniform_real_distribution<double> px(-10, layout.plane_w() + 10), py(-10, layout.plane_h() + 10);
    std::uniform_real_distribution<double> size(2, 80);
    for (int f = 0; f < 10; ++f) {
      const auto face = RectBox::from_center(px(rng), py(rng), size(rng), size(rng));
      for (double scale : spec.scales) {
        double best = 0;
        for (auto id : layout.nearest_centers(face.cx(), face.cy(), scale)) best = std::max(best, iou(face, layout.box(id)));
        // flat-top maxima differ by a few ulps between lattice positions
        const double exhaustive = oracle::max_iou_at_scale(layout, face, scale);
        ASSERT_NEAR(best, exhaustive, 1e-12 * exhaustive);
      }
    }
  }
}

TEST(BestAnchor, EqualsExhaustiveScanIncludingTies) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 80; ++trial) {
    const auto spec = random_spec(rng);
    std::uniform_int_distribution<int> extent(8, 160);
    const AnchorLayout layout(spec, extent(rng), extent(rng));
    std::uniform_int_distribution<int> pos(-8, 170), size(1, 90);
    for (int f = 0; f < 15; ++f) {
      // integer boxes make exact ties common
      const RectBox face(pos(rng), pos(rng), size(rng), size(rng));
      const auto fast = layout.best_anchor(face);
      const auto slow = oracle::best_anchor(layout, face);
      ASSERT_EQ(fast.id, slow.id);
      ASSERT_EQ(fast.iou, slow.iou);
      ASSERT_EQ(layout.max_iou(face), slow.iou);
    }
  }
}

TEST(BestAnchor, SmallFaceInsideManyLargeAnchorsPicksLowestId) {
  AnchorSpec spec;
  spec.scales = {512};
  spec.base_stride = 4;
  const AnchorLayout layout(spec, 1024, 1024);
  const RectBox face(500, 500, 16, 16);
  const auto fast = layout.best_anchor(face);
  const auto slow = oracle::best_anchor(layout, face);
  EXPECT_EQ(fast.id, slow.id);
  EXPECT_DOUBLE_EQ(fast.iou, 256.0 / (512.0 * 512.0));
}

TEST(BestAnchor, TallFaceOverIrrationalAnchorsPicksLowestId) {
  // several rows contain the anchor fully; their intersections differ by
  // an ulp but round to the same IoU
  AnchorSpec spec;
  spec.scales = {16};
  spec.ratios = {2.0};
  spec.base_stride = 24;
  const AnchorLayout layout(spec, 96, 96);
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> x(-4, 40), y(-20, 0), w(1, 8), h(50, 70);
  for (int i = 0; i < 2000; ++i) {
    const RectBox face(x(rng), y(rng), w(rng), h(rng));
    const auto fast = layout.best_anchor(face);
    const auto slow = oracle::best_anchor(layout, face);
    ASSERT_EQ(fast.id, slow.id);
    ASSERT_EQ(fast.iou, slow.iou);
  }
}

TEST(ForEachOverlapping, EqualsExhaustivePositiveSet) {
  std::mt19937_64 rng(37);
  for (int trial = 0; trial < 40; ++trial) {
    const auto spec = random_spec(rng);
    const AnchorLayout layout(spec, 96, 80);
    std::uniform_real_distribution<double> pos(-20, 110), size(1, 70);
    for (int f = 0; f < 10; ++f) {
      const RectBox face(pos(rng), pos(rng), size(rng), size(rng));
      std::vector<std::pair<AnchorId, double>> fast, slow;
      layout.for_each_overlapping(face, [&](AnchorId id, double v) { fast.emplace_back(id, v); });
      layout.for_each_anchor([&](AnchorId id, const RectBox& a) {
        const double v = iou(face, a);
        if (v > 0) slow.emplace_back(id, v);
      });
      ASSERT_EQ(fast, slow);
    }
  }
}
