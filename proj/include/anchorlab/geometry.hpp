#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace anchorlab {

/// Axis-aligned rectangle in continuous image coordinates.
///
/// (x, y) is the top-left corner and y grows downward. Width and height must
/// be strictly positive; corrupt boxes are rejected when constructed rather
/// than clamped. Coordinates may lie outside any image (anchors are never
/// clipped).
class RectBox {
 public:
  RectBox(double x, double y, double w, double h) : x_(x), y_(y), w_(w), h_(h) {
    if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(w) || !std::isfinite(h)) {
      throw std::invalid_argument("RectBox: non-finite coordinate");
    }
    if (!(w > 0.0) || !(h > 0.0)) {
      throw std::invalid_argument("RectBox: width and height must be positive, got " +
                                  std::to_string(w) + "x" + std::to_string(h));
    }
  }

  static RectBox from_center(double cx, double cy, double w, double h) {
    return RectBox(cx - w / 2.0, cy - h / 2.0, w, h);
  }

  double x() const noexcept { return x_; }
  double y() const noexcept { return y_; }
  double w() const noexcept { return w_; }
  double h() const noexcept { return h_; }
  double right() const noexcept { return x_ + w_; }
  double bottom() const noexcept { return y_ + h_; }
  double cx() const noexcept { return x_ + w_ / 2.0; }
  double cy() const noexcept { return y_ + h_ / 2.0; }
  double area() const noexcept { return w_ * h_; }

  RectBox translated(double dx, double dy) const { return RectBox(x_ + dx, y_ + dy, w_, h_); }

  friend bool operator==(const RectBox&, const RectBox&) = default;

 private:
  double x_;
  double y_;
  double w_;
  double h_;
};

/// Length of the overlap of [a0, a1) and [b0, b1), zero when disjoint.
inline double overlap_1d(double a0, double a1, double b0, double b1) noexcept {
  return std::max(0.0, std::min(a1, b1) - std::max(a0, b0));
}

inline double intersect_area(const RectBox& a, const RectBox& b) noexcept {
  return overlap_1d(a.x(), a.right(), b.x(), b.right()) *
         overlap_1d(a.y(), a.bottom(), b.y(), b.bottom());
}

/// IoU from a precomputed intersection; shared by every max-IoU path so that
/// fast and exhaustive searches produce bit-identical values.
inline double iou_from_intersection(double inter, double area_a, double area_b) noexcept {
  if (inter <= 0.0) return 0.0;
  return inter / (area_a + area_b - inter);
}

inline double iou(const RectBox& a, const RectBox& b) noexcept {
  return iou_from_intersection(intersect_area(a, b), a.area(), b.area());
}

/// IoU of two side x side squares whose centers differ by (dx, dy), both
/// offsets in [0, side).
inline double iou_offset_square(double side, double dx, double dy) {
  if (!(side > 0.0)) throw std::invalid_argument("iou_offset_square: side must be positive");
  if (!(dx >= 0.0 && dx < side) || !(dy >= 0.0 && dy < side)) {
    throw std::invalid_argument("iou_offset_square: offsets must lie in [0, side)");
  }
  const double kept = (side - dx) * (side - dy);
  return kept / (2.0 * side * side - kept);
}

}  // namespace anchorlab
