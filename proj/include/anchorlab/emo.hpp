#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "anchorlab/anchor_layout.hpp"
#include "anchorlab/geometry.hpp"
#include "anchorlab/parallel.hpp"
#include "anchorlab/rng.hpp"

namespace anchorlab {

enum class EmoMethod { closed_form, monte_carlo };

inline const char* to_string(EmoMethod m) noexcept {
  return m == EmoMethod::closed_form ? "closed_form" : "monte_carlo";
}

/// Square face of side `face_side` against same-size anchors spaced
/// `anchor_stride` apart, face center uniform over the plane.
struct EmoQuery {
  double face_side = 16.0;
  double anchor_stride = 16.0;
  int quadrature_cells = 512;
  std::int64_t mc_samples = 100000;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(face_side > 0.0) || !std::isfinite(face_side)) {
      throw std::invalid_argument("EmoQuery: face_side must be positive");
    }
    if (!(anchor_stride > 0.0) || !std::isfinite(anchor_stride)) {
      throw std::invalid_argument("EmoQuery: anchor_stride must be positive");
    }
    if (quadrature_cells < 16) throw std::invalid_argument("EmoQuery: quadrature_cells must be >= 16");
    if (mc_samples < 1000) throw std::invalid_argument("EmoQuery: mc_samples must be >= 1000");
  }
};

struct EmoEstimate {
  double value = 0.0;
  double std_error = 0.0;
  EmoMethod method = EmoMethod::closed_form;
};

/// Raised when the single-period closed form does not apply (s_A / 2 >= l):
/// some offsets in the period would leave the face without overlap.
class ClosedFormInvalid : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Midpoint-rule quadrature of the expected IoU between the face and its
/// nearest anchor, with the center offset uniform over [0, s_A/2]^2.
inline EmoEstimate emo_closed_form(const EmoQuery& q) {
  q.validate();
  const double l = q.face_side;
  const double half = q.anchor_stride / 2.0;
  if (!(half < l)) {
    throw ClosedFormInvalid("closed-form invalid: scale " + std::to_string(l) + " stride " +
                            std::to_string(q.anchor_stride) + " (stride/2 must be below the face side)");
  }
  const auto n = static_cast<std::size_t>(q.quadrature_cells);
  const double h = half / static_cast<double>(n);
  std::vector<double> kept(n);
  for (std::size_t i = 0; i < n; ++i) kept[i] = l - (static_cast<double>(i) + 0.5) * h;
  const double two_l2 = 2.0 * l * l;
  std::vector<double> row(n);
  std::vector<double> rows(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double p = kept[i] * kept[j];
      row[j] = p / (two_l2 - p);
    }
    rows[i] = pairwise_sum(row);
  }
  const double value = pairwise_sum(rows) / static_cast<double>(n * n);
  return {value, 0.0, EmoMethod::closed_form};
}

/// Samples per Monte Carlo chunk. Fixed so chunk seeds, and therefore
/// results, are independent of the worker count.
inline constexpr std::int64_t kMonteCarloChunk = 16384;

/// Monte Carlo estimate of the expected max IoU (over all anchors) of a
/// face_w x face_h face whose center is uniform over one period cell of the
/// layout. The cell is taken near the middle of the plane.
inline EmoEstimate emo_monte_carlo(const AnchorLayout& layout, double face_w, double face_h,
                                   std::int64_t samples, std::uint64_t seed, unsigned workers = 0) {
  if (layout.anchor_count() == 0) throw std::invalid_argument("emo_monte_carlo: empty layout");
  if (samples < 1000) throw std::invalid_argument("emo_monte_carlo: samples must be >= 1000");
  if (!(face_w > 0.0) || !(face_h > 0.0)) {
    throw std::invalid_argument("emo_monte_carlo: face size must be positive");
  }
  if (layout.cols() < 2 || layout.rows() < 2) {
    throw std::invalid_argument("emo_monte_carlo: layout needs at least 2x2 sliding locations");
  }
  const double s = layout.stride();
  const double x0 = s / 2.0 + static_cast<double>((layout.cols() - 1) / 2) * s;
  const double y0 = s / 2.0 + static_cast<double>((layout.rows() - 1) / 2) * s;
  if (x0 - face_w / 2.0 < 0.0 || x0 + s + face_w / 2.0 > layout.plane_w() ||
      y0 - face_h / 2.0 < 0.0 || y0 + s + face_h / 2.0 > layout.plane_h()) {
    throw std::invalid_argument("emo_monte_carlo: face does not fit the sampling region of the plane");
  }

  const auto chunks = static_cast<std::size_t>((samples + kMonteCarloChunk - 1) / kMonteCarloChunk);
  std::vector<double> sums(chunks);
  std::vector<double> squares(chunks);
  parallel_chunks(chunks, workers, [&](std::size_t chunk) {
    const std::int64_t begin = static_cast<std::int64_t>(chunk) * kMonteCarloChunk;
    const std::int64_t count = std::min(kMonteCarloChunk, samples - begin);
    CounterStream rng(seed, chunk);
    std::vector<double> v(static_cast<std::size_t>(count));
    std::vector<double> v2(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double cx = x0 + rng.next_double() * s;
      const double cy = y0 + rng.next_double() * s;
      v[i] = layout.max_iou(RectBox::from_center(cx, cy, face_w, face_h));
      v2[i] = v[i] * v[i];
    }
    sums[chunk] = pairwise_sum(v);
    squares[chunk] = pairwise_sum(v2);
  });
  const auto n = static_cast<double>(samples);
  const double mean = pairwise_sum(sums) / n;
  const double var = std::max(0.0, (pairwise_sum(squares) - n * mean * mean) / (n - 1.0));
  return {mean, std::sqrt(var / n), EmoMethod::monte_carlo};
}

/// Single-scale square lattice (anchor side `side`, sliding stride `stride`,
/// `shifts` extra sub-lattices) on a square plane just large enough for
/// emo_monte_carlo to sample a full period cell near its middle.
inline AnchorLayout emo_lattice(double side, double stride, int shifts = 0) {
  AnchorSpec spec;
  spec.scales = {side};
  spec.base_stride = stride;
  if (shifts != 0) spec.shifts_per_scale[side] = shifts;
  const double extent = stride * std::ceil((2.0 * side + 4.0 * stride) / stride);
  return AnchorLayout(spec, extent, extent);
}

struct EmoCell {
  double scale = 0.0;
  double stride = 0.0;
  std::optional<EmoEstimate> estimate;
  std::string reason;
};

/// Closed-form EMO for every (scale, stride) pair, sorted by (scale, stride).
/// Pairs outside the closed form's domain come back without an estimate and
/// with reason "closed-form invalid".
inline std::vector<EmoCell> emo_table(std::vector<double> scales, std::vector<double> strides,
                                      const EmoQuery& defaults = {}) {
  std::sort(scales.begin(), scales.end());
  std::sort(strides.begin(), strides.end());
  std::vector<EmoCell> table;
  table.reserve(scales.size() * strides.size());
  for (double l : scales) {
    for (double s : strides) {
      EmoQuery q = defaults;
      q.face_side = l;
      q.anchor_stride = s;
      EmoCell cell{l, s, std::nullopt, {}};
      try {
        cell.estimate = emo_closed_form(q);
      } catch (const ClosedFormInvalid&) {
        cell.reason = "closed-form invalid";
      }
      table.push_back(std::move(cell));
    }
  }
  return table;
}

}  // namespace anchorlab
