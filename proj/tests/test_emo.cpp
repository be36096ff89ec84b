#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "anchorlab/emo.hpp"
#include "golden_emo.hpp"

namespace anchorlab {
namespace {

double closed(double l, double s, int cells = 512) {
  EmoQuery q;
  q.face_side = l;
  q.anchor_stride = s;
  q.quadrature_cells = cells;
  return emo_closed_form(q).value;
}

TEST(EmoClosedForm, MatchesFrozenOracleValues) {
  for (const auto& g : golden::kEmo) {
    EXPECT_NEAR(closed(g.scale, g.stride), g.emo, 1e-5) << g.scale << "/" << g.stride;
  }
}

TEST(EmoClosedForm, FineStrideApproachesOne) {
  const double v = closed(16, 16.0 / 256.0);
  EXPECT_NEAR(v, golden::kEmoFineStride, 1e-6);
  EXPECT_GT(v, 0.99);
}

TEST(EmoClosedForm, SixteenAtSixteenIsInsideTheWorstCaseBounds) {
  const double v = closed(16, 16);
  EXPECT_GT(v, 1.0 / 7.0);
  EXPECT_LT(v, 1.0);
}

TEST(EmoClosedForm, QuadratureConverges) {
  for (const auto& g : golden::kEmo) {
    EXPECT_LT(std::fabs(closed(g.scale, g.stride, 512) - closed(g.scale, g.stride, 1024)), 1e-6);
  }
}

TEST(EmoClosedForm, StrictlyIncreasingInScale) {
  for (double s : {4.0, 8.0, 16.0}) {
    double prev = 0.0;
    for (double l : {16.0, 32.0, 64.0, 128.0, 256.0, 512.0}) {
      const double v = closed(l, s);
      EXPECT_GT(v, prev) << l << "/" << s;
      prev = v;
    }
  }
}

TEST(EmoClosedForm, StrictlyDecreasingInStride) {
  for (double l : {16.0, 24.0, 64.0}) {
    double prev = 1.0;
    for (double s = 1.0; s < 2.0 * l; s += 1.5) {
      const double v = closed(l, s);
      EXPECT_LT(v, prev) << l << "/" << s;
      prev = v;
    }
  }
}

TEST(EmoClosedForm, BoundedByWorstOffsetAndOne) {
  const double eps = 1e-9;
  for (double l : {16.0, 40.0, 512.0}) {
    for (double s : {2.0, 8.0, 16.0, 30.0}) {
      if (!(s / 2.0 < l)) continue;
      const double v = closed(l, s);
      EXPECT_LT(iou_offset_square(l, s / 2.0 - eps, s / 2.0 - eps), v);
      EXPECT_LT(v, 1.0);
      EXPECT_GT(v, 0.0);
    }
  }
}

TEST(EmoClosedForm, Deterministic) { EXPECT_EQ(closed(37, 11), closed(37, 11)); }

TEST(EmoClosedForm, RejectsOutOfDomainAndBadQueries) {
  EXPECT_THROW(closed(16, 32), ClosedFormInvalid);
  EXPECT_THROW(closed(16, 40), ClosedFormInvalid);
  EXPECT_THROW(closed(16, 16, 8), std::invalid_argument);
  EmoQuery q;
  q.mc_samples = 10;
  EXPECT_THROW(emo_closed_form(q), std::invalid_argument);
  q = {};
  q.face_side = -1;
  EXPECT_THROW(emo_closed_form(q), std::invalid_argument);
}

TEST(EmoTable, ScaleColumnIncreases) {
  const auto t = emo_table({512, 16, 64, 32, 256, 128}, {16});
  ASSERT_EQ(t.size(), 6u);
  for (std::size_t i = 0; i < t.size(); ++i) {
    ASSERT_TRUE(t[i].estimate.has_value());
    if (i > 0) {
      EXPECT_LT(t[i - 1].scale, t[i].scale);
      EXPECT_LT(t[i - 1].estimate->value, t[i].estimate->value);
    }
  }
}

TEST(EmoTable, StrideRowDecreases) {
  const auto t = emo_table({16}, {16, 4, 8});
  ASSERT_EQ(t.size(), 3u);
  EXPECT_EQ(t[0].stride, 4);
  EXPECT_GT(t[0].estimate->value, t[1].estimate->value);
  EXPECT_GT(t[1].estimate->value, t[2].estimate->value);
}

TEST(EmoTable, InvalidCellIsAbsentWithReason) {
  const auto t = emo_table({16}, {32, 8});
  ASSERT_EQ(t.size(), 2u);
  EXPECT_TRUE(t[0].estimate.has_value());
  EXPECT_FALSE(t[1].estimate.has_value());
  EXPECT_EQ(t[1].reason, "closed-form invalid");
}

TEST(EmoMonteCarlo, AgreesWithClosedFormWithinThreeSigma) {
  for (const auto& [l, s] : std::vector<std::pair<double, double>>{{16, 16}, {16, 4}, {64, 8}, {512, 16}}) {
    const auto mc = emo_monte_carlo(emo_lattice(l, s), l, l, 100000, 11);
    EXPECT_EQ(mc.method, EmoMethod::monte_carlo);
    EXPECT_GT(mc.std_error, 0.0);
    EXPECT_LE(std::fabs(mc.value - closed(l, s)), 3.0 * mc.std_error) << l << "/" << s;
  }
}

TEST(EmoMonteCarlo, BitIdenticalForAnyWorkerCount) {
  const auto layout = emo_lattice(16, 16);
  const auto a = emo_monte_carlo(layout, 16, 16, 50000, 3, 1);
  const auto b = emo_monte_carlo(layout, 16, 16, 50000, 3, 3);
  const auto c = emo_monte_carlo(layout, 16, 16, 50000, 3, 8);
  EXPECT_EQ(a.value, b.value);
  EXPECT_EQ(a.value, c.value);
  EXPECT_EQ(a.std_error, c.std_error);
  EXPECT_NE(a.value, emo_monte_carlo(layout, 16, 16, 50000, 4, 1).value);
}

TEST(EmoMonteCarlo, DenseLatticeNearOne) {
  // at exactly 0.01 * l the expectation is 0.99007, too close to call
  const auto mc = emo_monte_carlo(emo_lattice(64, 0.5), 64, 64, 20000, 5);
  EXPECT_GT(mc.value, 0.99);
  EXPECT_LE(std::fabs(mc.value - closed(64, 0.5)), 3.0 * mc.std_error);
}

TEST(EmoMonteCarlo, ShiftedAnchorsRaiseSmallFaceOverlap) {
  const auto plain = emo_monte_carlo(emo_lattice(16, 16, 0), 16, 16, 1000000, 21);
  const auto shifted = emo_monte_carlo(emo_lattice(16, 16, 3), 16, 16, 1000000, 22);
  const double sigma = std::hypot(plain.std_error, shifted.std_error);
  EXPECT_GT(shifted.value - plain.value, 3.0 * sigma);
  // n = 3 halves the effective stride
  EXPECT_LE(std::fabs(shifted.value - closed(16, 8)), 3.0 * shifted.std_error);
}

TEST(EmoMonteCarlo, RejectsBadInputs) {
  const auto layout = emo_lattice(16, 16);
  EXPECT_THROW(emo_monte_carlo(layout, 16, 16, 999, 0), std::invalid_argument);
  EXPECT_THROW(emo_monte_carlo(layout, 0, 16, 5000, 0), std::invalid_argument);
  EXPECT_THROW(emo_monte_carlo(layout, 400, 400, 5000, 0), std::invalid_argument);
  AnchorSpec one;
  one.scales = {16};
  EXPECT_THROW(emo_monte_carlo(AnchorLayout(one, 16, 16), 8, 8, 5000, 0), std::invalid_argument);
}

TEST(EmoMonteCarlo, OutOfClosedFormDomainStillEstimable) {
  const auto mc = emo_monte_carlo(emo_lattice(16, 40), 16, 16, 20000, 9);
  EXPECT_GE(mc.value, 0.0);
  EXPECT_LT(mc.value, closed(16, 16));
}

}  // namespace
}  // namespace anchorlab
