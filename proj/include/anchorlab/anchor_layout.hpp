#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "anchorlab/geometry.hpp"

namespace anchorlab {

using AnchorId = std::size_t;

/// Declarative anchor design.
///
/// `shifts_per_scale` maps a scale to the number of extra shifted anchors
/// attached to every sliding-window location for that scale: 0, 1 (one
/// anchor at +(s/2, s/2)) or 3 (anchors at +(s/2, 0), +(0, s/2), +(s/2, s/2)),
/// where s is the sliding stride base_stride / stride_divisor.
struct AnchorSpec {
  std::vector<double> scales;
  std::vector<double> ratios{1.0};
  double base_stride = 16.0;
  int stride_divisor = 1;
  std::map<double, int> shifts_per_scale;

  /// S = {16, 32, ..., 512}, R = {1}, stride 16, no shifts.
  static AnchorSpec baseline() {
    AnchorSpec spec;
    spec.scales = {16, 32, 64, 128, 256, 512};
    return spec;
  }

  double sliding_stride() const { return base_stride / stride_divisor; }

  int shifts_for(double scale) const {
    auto it = shifts_per_scale.find(scale);
    return it == shifts_per_scale.end() ? 0 : it->second;
  }

  bool has_scale(double scale) const {
    return std::binary_search(scales.begin(), scales.end(), scale);
  }

  /// Anchors attached to one sliding-window location.
  int anchors_per_location() const {
    int count = 0;
    for (double s : scales) count += (1 + shifts_for(s)) * static_cast<int>(ratios.size());
    return count;
  }

  void validate() const {
    if (scales.empty()) throw std::invalid_argument("AnchorSpec: scales must not be empty");
    for (std::size_t i = 0; i < scales.size(); ++i) {
      if (!(scales[i] > 0.0) || !std::isfinite(scales[i])) {
        throw std::invalid_argument("AnchorSpec: scales must be positive");
      }
      if (i > 0 && !(scales[i - 1] < scales[i])) {
        throw std::invalid_argument("AnchorSpec: scales must be strictly ascending");
      }
    }
    if (ratios.empty()) throw std::invalid_argument("AnchorSpec: ratios must not be empty");
    for (std::size_t i = 0; i < ratios.size(); ++i) {
      if (!(ratios[i] > 0.0) || !std::isfinite(ratios[i])) {
        throw std::invalid_argument("AnchorSpec: ratios must be positive");
      }
      for (std::size_t j = 0; j < i; ++j) {
        if (ratios[j] == ratios[i]) throw std::invalid_argument("AnchorSpec: duplicate ratio");
      }
    }
    if (!(base_stride > 0.0) || !std::isfinite(base_stride)) {
      throw std::invalid_argument("AnchorSpec: base_stride must be positive");
    }
    if (stride_divisor != 1 && stride_divisor != 2 && stride_divisor != 4) {
      throw std::invalid_argument("AnchorSpec: stride_divisor must be 1, 2 or 4");
    }
    for (const auto& [scale, n] : shifts_per_scale) {
      if (!has_scale(scale)) {
        throw std::invalid_argument("AnchorSpec: shifts_per_scale key " + std::to_string(scale) +
                                    " is not one of the scales");
      }
      if (n != 0 && n != 1 && n != 3) {
        throw std::invalid_argument("AnchorSpec: shift count must be 0, 1 or 3");
      }
    }
  }

  friend bool operator==(const AnchorSpec&, const AnchorSpec&) = default;
};

/// Offsets of the sub-lattices for a shift count; index 0 is the unshifted one.
inline std::vector<std::pair<double, double>> sublattice_offsets(int shifts, double stride) {
  const double half = stride / 2.0;
  switch (shifts) {
    case 0: return {{0.0, 0.0}};
    case 1: return {{0.0, 0.0}, {half, half}};
    case 3: return {{0.0, 0.0}, {half, 0.0}, {0.0, half}, {half, half}};
    default: throw std::invalid_argument("unsupported shift count " + std::to_string(shifts));
  }
}

/// Nearest-neighbour spacing of the anchor centers of one scale.
inline double effective_anchor_stride(const AnchorSpec& spec, double scale) {
  if (!spec.has_scale(scale)) {
    throw std::invalid_argument("effective_anchor_stride: unknown scale " + std::to_string(scale));
  }
  const double s = spec.sliding_stride();
  switch (spec.shifts_for(scale)) {
    case 0: return s;
    case 1: return s / std::numbers::sqrt2;
    case 3: return s / 2.0;
    default: throw std::invalid_argument("unsupported shift count");
  }
}

/// One regularly tiled family of identical anchors: a (scale, ratio,
/// sub-lattice) triple. All groups of a layout share rows, cols and stride.
struct LatticeGroup {
  std::size_t scale_index;
  double scale;
  double ratio;
  double width;
  double height;
  int sublattice;
  double origin_x;
  double origin_y;
  AnchorId first_id;
};

struct AnchorInfo {
  AnchorId id;
  double scale;
  double ratio;
  int sublattice;
  std::size_t row;
  std::size_t col;
  double cx;
  double cy;
  double w;
  double h;
};

struct BestAnchor {
  AnchorId id = 0;
  double iou = 0.0;
};

/// Materialized anchor set over a W x H plane.
///
/// Anchors are not stored; each ID maps to (group, row, col) and the box is
/// recomputed on demand. IDs enumerate (scale, ratio, sub-lattice, row, col)
/// in that order. Sliding-window locations sit at (s/2 + i s, s/2 + j s) for
/// i < ceil(W / s), j < ceil(H / s); anchors crossing the plane boundary are
/// kept as is.
class AnchorLayout {
 public:
  AnchorLayout(AnchorSpec spec, double plane_w, double plane_h)
      : spec_(std::move(spec)), plane_w_(plane_w), plane_h_(plane_h) {
    spec_.validate();
    if (!(plane_w > 0.0) || !(plane_h > 0.0) || !std::isfinite(plane_w) || !std::isfinite(plane_h)) {
      throw std::invalid_argument("AnchorLayout: plane dimensions must be positive");
    }
    stride_ = spec_.sliding_stride();
    cols_ = static_cast<std::size_t>(std::ceil(plane_w / stride_));
    rows_ = static_cast<std::size_t>(std::ceil(plane_h / stride_));
    const double origin = stride_ / 2.0;
    AnchorId next = 0;
    for (std::size_t si = 0; si < spec_.scales.size(); ++si) {
      const double scale = spec_.scales[si];
      const auto offsets = sublattice_offsets(spec_.shifts_for(scale), stride_);
      for (double ratio : spec_.ratios) {
        const double root = std::sqrt(ratio);
        for (std::size_t k = 0; k < offsets.size(); ++k) {
          groups_.push_back(LatticeGroup{si, scale, ratio, scale / root, scale * root,
                                         static_cast<int>(k), origin + offsets[k].first,
                                         origin + offsets[k].second, next});
          next += rows_ * cols_;
        }
      }
    }
    anchor_count_ = next;
  }

  const AnchorSpec& spec() const noexcept { return spec_; }
  double plane_w() const noexcept { return plane_w_; }
  double plane_h() const noexcept { return plane_h_; }
  double stride() const noexcept { return stride_; }
  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t anchor_count() const noexcept { return anchor_count_; }
  std::size_t per_group() const noexcept { return rows_ * cols_; }
  const std::vector<LatticeGroup>& groups() const noexcept { return groups_; }

  const LatticeGroup& group_of(AnchorId id) const {
    if (id >= anchor_count_) throw std::out_of_range("anchor id out of range");
    return groups_[id / per_group()];
  }

  double center_x(const LatticeGroup& g, std::size_t col) const noexcept {
    return g.origin_x + static_cast<double>(col) * stride_;
  }
  double center_y(const LatticeGroup& g, std::size_t row) const noexcept {
    return g.origin_y + static_cast<double>(row) * stride_;
  }

  RectBox group_box(const LatticeGroup& g, std::size_t row, std::size_t col) const {
    return RectBox::from_center(center_x(g, col), center_y(g, row), g.width, g.height);
  }

  AnchorId id_of(const LatticeGroup& g, std::size_t row, std::size_t col) const noexcept {
    return g.first_id + row * cols_ + col;
  }

  RectBox box(AnchorId id) const {
    const auto& g = group_of(id);
    const std::size_t local = id - g.first_id;
    return group_box(g, local / cols_, local % cols_);
  }

  AnchorInfo info(AnchorId id) const {
    const auto& g = group_of(id);
    const std::size_t local = id - g.first_id;
    const std::size_t row = local / cols_;
    const std::size_t col = local % cols_;
    return AnchorInfo{id, g.scale, g.ratio, g.sublattice, row, col,
                      center_x(g, col), center_y(g, row), g.width, g.height};
  }

  /// Anchors of `scale` in the lattice cell enclosing (px, py), for every
  /// ratio and sub-lattice: at most 4 per group, ascending IDs. The same-scale
  /// max-IoU anchor of any face centered at (px, py) is among them.
  std::vector<AnchorId> nearest_centers(double px, double py, double scale) const {
    if (!spec_.has_scale(scale)) {
      throw std::invalid_argument("nearest_centers: unknown scale " + std::to_string(scale));
    }
    std::vector<AnchorId> ids;
    for (const auto& g : groups_) {
      if (g.scale != scale) continue;
      const auto [c0, c1] = enclosing(px, g.origin_x, cols_);
      const auto [r0, r1] = enclosing(py, g.origin_y, rows_);
      for (std::size_t r = r0; r <= r1; ++r) {
        for (std::size_t c = c0; c <= c1; ++c) ids.push_back(id_of(g, r, c));
      }
    }
    return ids;
  }

  /// Max IoU of `face` over every anchor with the lowest ID among exact ties,
  /// identical to an exhaustive scan.
  BestAnchor best_anchor(const RectBox& face) const { return search(face, true); }

  /// Max IoU of `face` over every anchor, without locating the anchor.
  double max_iou(const RectBox& face) const { return search(face, false).iou; }

  /// Calls fn(id, iou) for every anchor with positive IoU against `face`, in
  /// ascending ID order.
  template <typename Fn>
  void for_each_overlapping(const RectBox& face, Fn&& fn) const {
    const double face_area = face.area();
    std::vector<std::pair<std::size_t, double>> xs;
    std::vector<std::pair<std::size_t, double>> ys;
    for (const auto& g : groups_) {
      collect_axis(face.x(), face.right(), g.origin_x, g.width, cols_, xs);
      if (xs.empty()) continue;
      collect_axis(face.y(), face.bottom(), g.origin_y, g.height, rows_, ys);
      const double anchor_area = g.width * g.height;
      for (const auto& [r, iy] : ys) {
        for (const auto& [c, ix] : xs) {
          fn(id_of(g, r, c), iou_from_intersection(ix * iy, face_area, anchor_area));
        }
      }
    }
  }

  /// Every anchor ID in order; exhaustive but O(anchor_count).
  template <typename Fn>
  void for_each_anchor(Fn&& fn) const {
    for (const auto& g : groups_) {
      for (std::size_t r = 0; r < rows_; ++r) {
        for (std::size_t c = 0; c < cols_; ++c) fn(id_of(g, r, c), group_box(g, r, c));
      }
    }
  }

 private:
  std::pair<std::size_t, std::size_t> enclosing(double p, double origin, std::size_t count) const {
    if (count == 1) return {0, 0};
    const double k = std::floor((p - origin) / stride_);
    const double last = static_cast<double>(count - 2);
    const auto k0 = static_cast<std::size_t>(std::clamp(k, 0.0, last));
    return {k0, k0 + 1};
  }

  // Overlap along one axis between [lo, hi) and an anchor centered at `center`.
  static double axis_overlap(double lo, double hi, double center, double extent) {
    const double a0 = center - extent / 2.0;
    return overlap_1d(lo, hi, a0, a0 + extent);
  }

  // Lattice indices along one axis whose overlap with [lo, hi) may be the
  // maximum. In exact arithmetic the overlap is a symmetric trapezoid in the
  // center position, maximal at the nearest center and possibly on a wider
  // flat top; in floating point the flat top varies by a few ulps, so every
  // index within rounding distance of the peak is kept and the caller compares
  // exact products.
  struct AxisRange {
    std::size_t first = 0;
    std::vector<double> overlap;
    double max = 0.0;
  };

  void axis_range(double lo, double hi, double origin, double extent, std::size_t count, AxisRange& out) const {
    out.overlap.clear();
    out.max = 0.0;
    const auto at = [&](std::size_t i) {
      return axis_overlap(lo, hi, origin + static_cast<double>(i) * stride_, extent);
    };
    const double center = (lo + hi) / 2.0;
    const double k = std::floor((center - origin) / stride_);
    const double last = static_cast<double>(count - 1);
    const auto a = static_cast<std::size_t>(std::clamp(k - 1.0, 0.0, last));
    const auto b = static_cast<std::size_t>(std::clamp(k + 2.0, 0.0, last));
    double peak = 0.0;
    std::size_t peak_at = a;
    for (std::size_t i = a; i <= b; ++i) {
      const double v = at(i);
      if (v > peak) {
        peak = v;
        peak_at = i;
      }
    }
    if (peak <= 0.0) return;
    const double magnitude = std::fabs(lo) + std::fabs(hi) + std::fabs(origin) + last * stride_ + extent;
    const double floor_value = peak - 64.0 * std::numeric_limits<double>::epsilon() * magnitude;
    std::size_t first = peak_at;
    while (first > 0 && at(first - 1) >= floor_value) --first;
    std::size_t final = peak_at;
    while (final + 1 < count && at(final + 1) >= floor_value) ++final;
    out.first = first;
    for (std::size_t i = first; i <= final; ++i) {
      out.overlap.push_back(at(i));
      out.max = std::max(out.max, out.overlap.back());
    }
  }

  void collect_axis(double lo, double hi, double origin, double extent, std::size_t count,
                    std::vector<std::pair<std::size_t, double>>& out) const {
    out.clear();
    const double last = static_cast<double>(count - 1);
    const double k_lo = std::ceil((lo - extent / 2.0 - origin) / stride_) - 1.0;
    const double k_hi = std::floor((hi + extent / 2.0 - origin) / stride_) + 1.0;
    if (k_hi < 0.0 || k_lo > last) return;
    const auto first = static_cast<std::size_t>(std::clamp(k_lo, 0.0, last));
    const auto final = static_cast<std::size_t>(std::clamp(k_hi, 0.0, last));
    for (std::size_t i = first; i <= final; ++i) {
      const double v = axis_overlap(lo, hi, origin + static_cast<double>(i) * stride_, extent);
      if (v > 0.0) out.emplace_back(i, v);
    }
  }

  BestAnchor search(const RectBox& face, bool lowest_tie) const {
    BestAnchor best{0, -1.0};
    const double face_area = face.area();
    AxisRange xs;
    AxisRange ys;
    for (const auto& g : groups_) {
      BestAnchor candidate{g.first_id, 0.0};
      axis_range(face.x(), face.right(), g.origin_x, g.width, cols_, xs);
      if (xs.max > 0.0) axis_range(face.y(), face.bottom(), g.origin_y, g.height, rows_, ys);
      if (xs.max > 0.0 && ys.max > 0.0) {
        // Rounding is monotone, so no product exceeds xs.max * ys.max.
        const double inter = xs.max * ys.max;
        candidate.iou = iou_from_intersection(inter, face_area, g.width * g.height);
        candidate.id = lowest_tie ? lowest_tie_id(g, xs, ys, face_area, candidate.iou) : g.first_id;
      }
      if (candidate.iou > best.iou) best = candidate;
    }
    return best;
  }

  // Intersections an ulp apart can round to the same IoU, so ties are
  // decided on the IoU itself.
  AnchorId lowest_tie_id(const LatticeGroup& g, const AxisRange& xs, const AxisRange& ys, double face_area,
                         double target) const {
    const double anchor_area = g.width * g.height;
    const auto hits = [&](double inter) { return iou_from_intersection(inter, face_area, anchor_area) == target; };
    for (std::size_t r = 0; r < ys.overlap.size(); ++r) {
      if (!hits(xs.max * ys.overlap[r])) continue;
      for (std::size_t c = 0; c < xs.overlap.size(); ++c) {
        if (hits(xs.overlap[c] * ys.overlap[r])) return id_of(g, ys.first + r, xs.first + c);
      }
    }
    return g.first_id;  // unreachable: the row holding ys.max always matches
  }

  AnchorSpec spec_;
  double plane_w_;
  double plane_h_;
  double stride_ = 0.0;
  std::size_t cols_ = 0;
  std::size_t rows_ = 0;
  std::vector<LatticeGroup> groups_;
  AnchorId anchor_count_ = 0;
};

/// Largest distance from a point of the (unbounded, periodic) plane to the
/// nearest anchor center of `scale`.
inline double covering_radius(const AnchorLayout& layout, double scale) {
  return effective_anchor_stride(layout.spec(), scale) * std::numbers::sqrt2 / 2.0;
}

}  // namespace anchorlab
