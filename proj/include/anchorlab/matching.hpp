#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "anchorlab/anchor_layout.hpp"
#include "anchorlab/geometry.hpp"
#include "anchorlab/parallel.hpp"
#include "anchorlab/rng.hpp"

namespace anchorlab {

/// Assignment thresholds. t_low is not fixed by the method itself; 0.3 is the
/// usual region-proposal default.
struct MatchConfig {
  double t_high = 0.5;
  double t_low = 0.3;
  int hc_n = 5;
  bool jitter = false;
  std::uint64_t jitter_seed = 0;

  void validate() const {
    if (!(t_low > 0.0) || !(t_high < 1.0) || !(t_low <= t_high)) {
      throw std::invalid_argument("MatchConfig: need 0 < t_low <= t_high < 1");
    }
    if (hc_n < 0) throw std::invalid_argument("MatchConfig: hc_n must be >= 0");
  }
};

enum class AnchorLabel : std::uint8_t { negative, ignore, positive };

inline const char* to_string(AnchorLabel l) noexcept {
  switch (l) {
    case AnchorLabel::negative: return "negative";
    case AnchorLabel::ignore: return "ignore";
    case AnchorLabel::positive: return "positive";
  }
  return "?";
}

struct JitterOffset {
  int dx = 0;
  int dy = 0;
  friend bool operator==(const JitterOffset&, const JitterOffset&) = default;
};

struct FaceMatch {
  double max_iou = 0.0;
  AnchorId argmax = 0;
  std::vector<AnchorId> assigned;  // ascending
};

inline constexpr std::int32_t kNoFace = -1;

struct MatchResult {
  std::vector<FaceMatch> faces;
  std::vector<AnchorLabel> labels;
  std::vector<std::int32_t> source_face;  // kNoFace unless positive
  JitterOffset jitter;

  std::size_t count(AnchorLabel label) const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), label));
  }
};

/// Number of jitter offsets per axis for an anchor stride: {0, ..., s/2 - 1},
/// with s/2 rounded down for non-integral strides.
inline int jitter_support(double anchor_stride) {
  if (!(anchor_stride >= 2.0)) throw std::invalid_argument("apply_jitter: anchor_stride must be >= 2");
  return static_cast<int>(std::floor(anchor_stride / 2.0));
}

inline JitterOffset draw_jitter(double anchor_stride, std::uint64_t seed) {
  const auto support = static_cast<std::uint64_t>(jitter_support(anchor_stride));
  CounterStream rng(seed, 0);
  const auto dx = static_cast<int>(rng.next_below(support));
  const auto dy = static_cast<int>(rng.next_below(support));
  return {dx, dy};
}

inline std::vector<RectBox> translate_faces(std::span<const RectBox> faces, JitterOffset offset) {
  std::vector<RectBox> out;
  out.reserve(faces.size());
  for (const auto& f : faces) out.push_back(f.translated(offset.dx, offset.dy));
  return out;
}

/// Shifts every face right/down by one offset drawn uniformly from
/// {0, ..., s/2 - 1} per axis.
inline std::pair<std::vector<RectBox>, JitterOffset> apply_jitter(std::span<const RectBox> faces,
                                                                  double anchor_stride,
                                                                  std::uint64_t seed) {
  const auto offset = draw_jitter(anchor_stride, seed);
  return {translate_faces(faces, offset), offset};
}

/// Jitter range for a layout: the smallest effective stride over its scales.
inline double jitter_stride(const AnchorLayout& layout) {
  double s = std::numeric_limits<double>::infinity();
  for (double scale : layout.spec().scales) s = std::min(s, effective_anchor_stride(layout.spec(), scale));
  return s;
}

namespace detail {

struct Claim {
  double iou = -1.0;
  std::int32_t face = kNoFace;

  // Higher IoU wins, then the lower face index.
  void offer(double v, std::int32_t f) {
    if (v > iou || (v == iou && f < face)) {
      iou = v;
      face = f;
    }
  }
};

inline void check_face_count(std::size_t n) {
  if (n > static_cast<std::size_t>(std::numeric_limits<std::int32_t>::max())) {
    throw std::length_error("too many faces");
  }
}

}  // namespace detail

/// Anchor assignment: an anchor is positive if it is some face's max-IoU
/// anchor (with positive IoU) or its IoU with any face reaches t_high;
/// negative if its IoU with every face is below t_low; ignored otherwise.
/// A positive anchor's source is the claiming face with the highest IoU.
/// When cfg.jitter is set, faces are first shifted by one random offset.
inline MatchResult match_faces(std::span<const RectBox> input_faces, const AnchorLayout& layout,
                               const MatchConfig& cfg, unsigned workers = 0) {
  cfg.validate();
  if (layout.anchor_count() == 0) throw std::invalid_argument("match_faces: empty layout");
  detail::check_face_count(input_faces.size());
  MatchResult result;
  std::vector<RectBox> jittered;
  std::span<const RectBox> faces = input_faces;
  if (cfg.jitter) {
    auto [shifted, offset] = apply_jitter(input_faces, jitter_stride(layout), cfg.jitter_seed);
    jittered = std::move(shifted);
    faces = jittered;
    result.jitter = offset;
  }

  const std::size_t n_anchors = layout.anchor_count();
  result.faces.resize(faces.size());
  std::vector<std::vector<std::pair<AnchorId, double>>> overlaps(faces.size());
  parallel_chunks(faces.size(), workers, [&](std::size_t f) {
    const auto best = layout.best_anchor(faces[f]);
    result.faces[f].max_iou = best.iou;
    result.faces[f].argmax = best.id;
    layout.for_each_overlapping(faces[f], [&](AnchorId id, double v) { overlaps[f].emplace_back(id, v); });
  });

  std::vector<double> anchor_best(n_anchors, 0.0);
  std::vector<detail::Claim> claims(n_anchors);
  for (std::size_t f = 0; f < faces.size(); ++f) {
    const auto fi = static_cast<std::int32_t>(f);
    auto& fm = result.faces[f];
    for (const auto& [id, v] : overlaps[f]) {
      anchor_best[id] = std::max(anchor_best[id], v);
      if (v >= cfg.t_high) {
        claims[id].offer(v, fi);
        fm.assigned.push_back(id);
      }
    }
    if (fm.max_iou > 0.0) {
      claims[fm.argmax].offer(fm.max_iou, fi);
      if (fm.max_iou < cfg.t_high) fm.assigned.push_back(fm.argmax);
    }
    std::sort(fm.assigned.begin(), fm.assigned.end());
  }

  result.labels.assign(n_anchors, AnchorLabel::negative);
  result.source_face.assign(n_anchors, kNoFace);
  for (std::size_t id = 0; id < n_anchors; ++id) {
    if (claims[id].face != kNoFace) {
      result.labels[id] = AnchorLabel::positive;
      result.source_face[id] = claims[id].face;
    } else if (anchor_best[id] >= cfg.t_low) {
      result.labels[id] = AnchorLabel::ignore;
    }
  }
  return result;
}

/// Top-N anchors of `face` by IoU (positive IoU only), ties by ascending ID.
inline std::vector<std::pair<AnchorId, double>> top_anchors(const AnchorLayout& layout,
                                                            const RectBox& face, std::size_t n) {
  std::vector<std::pair<AnchorId, double>> all;
  layout.for_each_overlapping(face, [&](AnchorId id, double v) { all.emplace_back(id, v); });
  const auto better = [](const auto& a, const auto& b) {
    return a.second > b.second || (a.second == b.second && a.first < b.first);
  };
  const std::size_t keep = std::min(n, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep), all.end(), better);
  all.resize(keep);
  return all;
}

/// Hard face compensation: every face whose max IoU is below t_high also gets
/// its top hc_n anchors. Existing positives keep their source face; newly
/// positive anchors go to the claiming hard face with the highest IoU.
/// `faces` are the unshifted inputs; the result's jitter offset is reapplied.
inline MatchResult compensate_hard_faces(MatchResult result, std::span<const RectBox> input_faces,
                                         const AnchorLayout& layout, const MatchConfig& cfg,
                                         unsigned workers = 0) {
  cfg.validate();
  if (cfg.hc_n < 1) throw std::invalid_argument("compensate_hard_faces: hc_n must be >= 1");
  if (result.faces.size() != input_faces.size() || result.labels.size() != layout.anchor_count()) {
    throw std::invalid_argument("compensate_hard_faces: result does not match faces/layout");
  }
  detail::check_face_count(input_faces.size());
  const auto faces = translate_faces(input_faces, result.jitter);

  std::vector<std::vector<std::pair<AnchorId, double>>> tops(faces.size());
  parallel_chunks(faces.size(), workers, [&](std::size_t f) {
    if (result.faces[f].max_iou < cfg.t_high) {
      tops[f] = top_anchors(layout, faces[f], static_cast<std::size_t>(cfg.hc_n));
    }
  });

  std::vector<std::pair<AnchorId, detail::Claim>> fresh;
  for (std::size_t f = 0; f < faces.size(); ++f) {
    auto& assigned = result.faces[f].assigned;
    for (const auto& [id, v] : tops[f]) {
      assigned.push_back(id);
      if (result.labels[id] != AnchorLabel::positive) {
        detail::Claim c;
        c.offer(v, static_cast<std::int32_t>(f));
        fresh.emplace_back(id, c);
      }
    }
    std::sort(assigned.begin(), assigned.end());
    assigned.erase(std::unique(assigned.begin(), assigned.end()), assigned.end());
  }
  std::vector<detail::Claim> claims(layout.anchor_count());
  for (const auto& [id, c] : fresh) claims[id].offer(c.iou, c.face);
  for (const auto& [id, c] : fresh) {
    result.labels[id] = AnchorLabel::positive;
    result.source_face[id] = claims[id].face;
  }
  return result;
}

}  // namespace anchorlab
