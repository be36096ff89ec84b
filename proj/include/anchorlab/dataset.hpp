#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "anchorlab/anchor_layout.hpp"
#include "anchorlab/geometry.hpp"
#include "anchorlab/matching.hpp"
#include "anchorlab/parallel.hpp"
#include "anchorlab/rng.hpp"

namespace anchorlab {

struct FaceRecord {
  std::string image_id;
  RectBox box;
  double image_w = 0.0;  // 0 = unknown
  double image_h = 0.0;
};

struct ParsedAnnotations {
  std::vector<FaceRecord> faces;
  std::size_t face_lines = 0;
  std::size_t skipped = 0;  // degenerate boxes (w <= 0 or h <= 0)
};

class AnnotationParseError : public std::runtime_error {
 public:
  AnnotationParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// Leading whitespace-separated numbers of a line; stops at the first token
// that is not a number.
inline std::vector<double> leading_numbers(std::string_view s, std::size_t want) {
  std::vector<double> out;
  while (out.size() < want) {
    s = trim(s);
    if (s.empty()) break;
    const auto end = s.find_first_of(" \t");
    const auto token = s.substr(0, end);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
    if (ec != std::errc() || ptr != token.data() + token.size()) break;
    out.push_back(v);
    if (end == std::string_view::npos) break;
    s = s.substr(end);
  }
  return out;
}

}  // namespace detail

/// Parses a Wider Face style listing: repeated groups of an image path line, a
/// face count line, then one line per face starting with "x y w h" (extra
/// columns ignored). A zero-count group may be followed by one all-numeric
/// placeholder line, which is skipped. Degenerate boxes are dropped and
/// counted in `skipped`.
inline ParsedAnnotations parse_annotations(std::istream& in) {
  ParsedAnnotations out;
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  std::size_t i = 0;
  const auto number = [](std::size_t idx) { return idx + 1; };
  while (i < lines.size()) {
    const auto path = detail::trim(lines[i]);
    if (path.empty()) {
      ++i;
      continue;
    }
    const std::size_t path_line = i;
    ++i;
    if (i >= lines.size()) throw AnnotationParseError(number(i), "missing face count after " + std::string(path));
    const auto count_text = detail::trim(lines[i]);
    long long count = -1;
    const auto [ptr, ec] = std::from_chars(count_text.data(), count_text.data() + count_text.size(), count);
    if (count_text.empty() || ec != std::errc() || ptr != count_text.data() + count_text.size() || count < 0) {
      throw AnnotationParseError(number(i), "malformed face count '" + std::string(count_text) + "'");
    }
    ++i;
    if (count == 0) {
      if (i < lines.size() && !detail::trim(lines[i]).empty() &&
          detail::leading_numbers(lines[i], 4).size() == 4) {
        ++i;
      }
      continue;
    }
    for (long long k = 0; k < count; ++k, ++i) {
      if (i >= lines.size()) {
        throw AnnotationParseError(number(i), "truncated group for " + std::string(path) + ": expected " +
                                                  std::to_string(count) + " faces, got " + std::to_string(k));
      }
      const auto v = detail::leading_numbers(lines[i], 4);
      if (v.size() < 4) {
        throw AnnotationParseError(number(i), "expected 'x y w h' for face " + std::to_string(k + 1) + " of " +
                                                  std::string(lines[path_line]));
      }
      for (double c : v) {
        if (!std::isfinite(c)) throw AnnotationParseError(number(i), "non-finite coordinate");
      }
      ++out.face_lines;
      if (!(v[2] > 0.0) || !(v[3] > 0.0)) {
        ++out.skipped;
        continue;
      }
      out.faces.push_back(FaceRecord{std::string(path), RectBox(v[0], v[1], v[2], v[3])});
    }
  }
  return out;
}

inline std::vector<double> default_bucket_edges() { return {8, 16, 32, 64, 128, 256, 512}; }

/// Face scale: geometric mean of width and height.
inline double face_scale(const RectBox& b) { return std::sqrt(b.w() * b.h()); }

struct BucketStat {
  double lo = 0.0;
  double hi = std::numeric_limits<double>::infinity();
  std::size_t count = 0;
  double mean_max_iou = std::numeric_limits<double>::quiet_NaN();  // NaN when empty
  double recall = std::numeric_limits<double>::quiet_NaN();
};

/// Buckets are [0, e0), [e0, e1), ..., [e_last, inf), so every face lands in
/// exactly one bucket.
struct ScaleBucketReport {
  std::vector<double> edges;
  double tau = 0.5;
  std::vector<BucketStat> buckets;
  BucketStat overall;
};

inline void validate_edges(std::span<const double> edges) {
  if (edges.empty()) throw std::invalid_argument("bucket edges must not be empty");
  for (std::size_t i = 0; i < edges.size(); ++i) {
    if (!(edges[i] > 0.0) || !std::isfinite(edges[i])) throw std::invalid_argument("bucket edges must be positive");
    if (i > 0 && !(edges[i - 1] < edges[i])) throw std::invalid_argument("bucket edges must be strictly increasing");
  }
}

inline void validate_tau(double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw std::invalid_argument("tau must lie in [0, 1]");
}

inline std::size_t bucket_index(std::span<const double> edges, double scale) {
  return static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), scale) - edges.begin());
}

/// Exhaustive max IoU of a face over every anchor; reference path for audits.
inline double brute_force_max_iou(const AnchorLayout& layout, const RectBox& face) {
  double best = 0.0;
  layout.for_each_anchor([&](AnchorId, const RectBox& a) { best = std::max(best, iou(face, a)); });
  return best;
}

inline constexpr std::size_t kFaceChunk = 4096;

/// Max IoU of every face against the layout. When audit_every > 0, every
/// audit_every-th face is rechecked by exhaustive scan and a mismatch throws
/// std::logic_error.
inline std::vector<double> face_max_ious(std::span<const RectBox> faces, const AnchorLayout& layout,
                                         unsigned workers = 0, std::size_t audit_every = 0) {
  std::vector<double> out(faces.size());
  const std::size_t chunks = (faces.size() + kFaceChunk - 1) / kFaceChunk;
  parallel_chunks(chunks, workers, [&](std::size_t c) {
    const std::size_t end = std::min(faces.size(), (c + 1) * kFaceChunk);
    for (std::size_t i = c * kFaceChunk; i < end; ++i) {
      out[i] = layout.max_iou(faces[i]);
      if (audit_every > 0 && i % audit_every == 0 && brute_force_max_iou(layout, faces[i]) != out[i]) {
        throw std::logic_error("max-IoU audit failed for face " + std::to_string(i));
      }
    }
  });
  return out;
}

inline BucketStat summarize(double lo, double hi, const std::vector<double>& values, double tau) {
  BucketStat b{lo, hi, values.size()};
  if (values.empty()) return b;
  const auto hits = std::count_if(values.begin(), values.end(), [&](double v) { return v >= tau; });
  b.mean_max_iou = pairwise_sum(values) / static_cast<double>(values.size());
  b.recall = static_cast<double>(hits) / static_cast<double>(values.size());
  return b;
}

/// Groups per-face max IoUs by face scale.
inline ScaleBucketReport bucket_report(std::span<const RectBox> faces, std::span<const double> max_ious,
                                       std::span<const double> edges, double tau) {
  validate_edges(edges);
  validate_tau(tau);
  std::vector<std::vector<double>> per(edges.size() + 1);
  for (std::size_t i = 0; i < faces.size(); ++i) per[bucket_index(edges, face_scale(faces[i]))].push_back(max_ious[i]);
  ScaleBucketReport report;
  report.edges.assign(edges.begin(), edges.end());
  report.tau = tau;
  for (std::size_t b = 0; b < per.size(); ++b) {
    const double lo = b == 0 ? 0.0 : edges[b - 1];
    const double hi = b < edges.size() ? edges[b] : std::numeric_limits<double>::infinity();
    report.buckets.push_back(summarize(lo, hi, per[b], tau));
  }
  report.overall = summarize(0.0, std::numeric_limits<double>::infinity(),
                             std::vector<double>(max_ious.begin(), max_ious.end()), tau);
  return report;
}

inline std::vector<RectBox> boxes_of(std::span<const FaceRecord> faces) {
  std::vector<RectBox> out;
  out.reserve(faces.size());
  for (const auto& f : faces) out.push_back(f.box);
  return out;
}

inline ScaleBucketReport bucket_stats(std::span<const RectBox> faces, const AnchorLayout& layout,
                                      std::span<const double> edges, double tau, unsigned workers = 0,
                                      std::size_t audit_every = 0) {
  if (faces.empty()) throw std::invalid_argument("bucket_stats: no faces");
  validate_edges(edges);
  validate_tau(tau);
  const auto v = face_max_ious(faces, layout, workers, audit_every);
  return bucket_report(faces, v, edges, tau);
}

inline ScaleBucketReport bucket_stats(std::span<const FaceRecord> faces, const AnchorLayout& layout,
                                      std::span<const double> edges, double tau, unsigned workers = 0,
                                      std::size_t audit_every = 0) {
  const auto boxes = boxes_of(faces);
  return bucket_stats(std::span<const RectBox>(boxes), layout, edges, tau, workers, audit_every);
}

/// Plane large enough for every face and every known image size.
struct PlaneSize {
  double w = 1.0;
  double h = 1.0;
};

inline PlaneSize covering_plane(std::span<const FaceRecord> faces) {
  PlaneSize p;
  for (const auto& f : faces) {
    p.w = std::max({p.w, f.box.right(), f.image_w});
    p.h = std::max({p.h, f.box.bottom(), f.image_h});
  }
  return {std::ceil(p.w), std::ceil(p.h)};
}

struct JitterBucket {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
  double mean = std::numeric_limits<double>::quiet_NaN();  // of per-trial bucket means
  double min = std::numeric_limits<double>::quiet_NaN();
  double max = std::numeric_limits<double>::quiet_NaN();
};

struct JitterReport {
  std::vector<double> edges;
  std::vector<JitterOffset> offsets;  // one per trial
  std::vector<JitterBucket> buckets;
};

/// Seed tag for per-trial jitter draws.
inline constexpr std::uint32_t kJitterTrialTag = 0x4a495454u;

/// Runs bucket statistics once per offset and reports, per bucket, the mean,
/// min and max of the per-trial mean max IoU.
inline JitterReport jitter_experiment(std::span<const RectBox> faces, const AnchorLayout& layout,
                                      std::span<const double> edges, double tau,
                                      std::span<const JitterOffset> offsets, unsigned workers = 0) {
  if (offsets.empty()) throw std::invalid_argument("jitter_experiment: trials must be >= 1");
  if (faces.empty()) throw std::invalid_argument("jitter_experiment: no faces");
  validate_edges(edges);
  validate_tau(tau);
  JitterReport report;
  report.edges.assign(edges.begin(), edges.end());
  report.offsets.assign(offsets.begin(), offsets.end());
  std::vector<std::vector<double>> means(edges.size() + 1);
  std::vector<std::size_t> counts(edges.size() + 1);
  for (const auto& off : offsets) {
    const auto shifted = translate_faces(faces, off);
    const auto r = bucket_stats(std::span<const RectBox>(shifted), layout, edges, tau, workers);
    for (std::size_t b = 0; b < r.buckets.size(); ++b) {
      counts[b] = r.buckets[b].count;
      if (r.buckets[b].count > 0) means[b].push_back(r.buckets[b].mean_max_iou);
    }
  }
  for (std::size_t b = 0; b < means.size(); ++b) {
    JitterBucket jb;
    jb.lo = b == 0 ? 0.0 : edges[b - 1];
    jb.hi = b < edges.size() ? edges[b] : std::numeric_limits<double>::infinity();
    jb.count = counts[b];
    if (!means[b].empty()) {
      jb.mean = pairwise_sum(means[b]) / static_cast<double>(means[b].size());
      jb.min = *std::min_element(means[b].begin(), means[b].end());
      jb.max = *std::max_element(means[b].begin(), means[b].end());
    }
    report.buckets.push_back(jb);
  }
  return report;
}

/// Random-offset variant: trial t uses the offset drawn from
/// derive_seed(seed, kJitterTrialTag, t) over the layout's jitter range.
inline JitterReport jitter_experiment(std::span<const RectBox> faces, const AnchorLayout& layout,
                                      std::span<const double> edges, double tau, int trials,
                                      std::uint64_t seed, unsigned workers = 0) {
  if (trials < 1) throw std::invalid_argument("jitter_experiment: trials must be >= 1");
  const double stride = jitter_stride(layout);
  std::vector<JitterOffset> offsets;
  for (int t = 0; t < trials; ++t) {
    offsets.push_back(draw_jitter(stride, derive_seed(seed, kJitterTrialTag, static_cast<std::uint64_t>(t))));
  }
  return jitter_experiment(faces, layout, edges, tau, offsets, workers);
}

/// Every offset in {0, ..., s/2 - 1}^2, row-major.
inline std::vector<JitterOffset> all_jitter_offsets(double anchor_stride) {
  const int n = jitter_support(anchor_stride);
  std::vector<JitterOffset> out;
  for (int dy = 0; dy < n; ++dy) {
    for (int dx = 0; dx < n; ++dx) out.push_back({dx, dy});
  }
  return out;
}

/// Bucket statistics for the same faces under several anchor designs.
inline std::vector<ScaleBucketReport> compare_layouts(std::span<const RectBox> faces,
                                                      std::span<const AnchorSpec> specs,
                                                      std::span<const double> edges, double tau,
                                                      PlaneSize plane, unsigned workers = 0) {
  if (specs.size() < 2) throw std::invalid_argument("compare_layouts: need at least 2 specs");
  std::vector<ScaleBucketReport> out;
  for (const auto& spec : specs) {
    const AnchorLayout layout(spec, plane.w, plane.h);
    out.push_back(bucket_stats(faces, layout, edges, tau, workers));
  }
  return out;
}

}  // namespace anchorlab
