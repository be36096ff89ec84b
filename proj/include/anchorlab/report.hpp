#pragma once

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <span>
#include <string>
#include <vector>

#include "anchorlab/anchor_layout.hpp"
#include "anchorlab/config.hpp"
#include "anchorlab/dataset.hpp"
#include "anchorlab/emo.hpp"
#include "anchorlab/matching.hpp"
#include "anchorlab/optimizer.hpp"

namespace anchorlab {

/// Locale-independent text with 9 significant digits; "nan" / "inf" for
/// non-finite values.
inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 9);
  return std::string(buf, r.ptr);
}

/// JSON value carrying the same 9 significant digits as the CSV; null when
/// not finite.
inline json report_number(double v) {
  if (!std::isfinite(v)) return nullptr;
  const auto text = format_number(v);
  double rounded = 0.0;
  std::from_chars(text.data(), text.data() + text.size(), rounded);
  return number_json(rounded);
}

inline std::string csv_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

inline std::string dump_json(const json& j) { return j.dump(2) + "\n"; }

// --- EMO tables -----------------------------------------------------------

struct EmoRow {
  double scale;
  double stride;
  EmoEstimate estimate;
};

inline std::string emo_csv(std::span<const EmoRow> rows) {
  std::string out = "scale,stride,emo,std_error,method\n";
  for (const auto& r : rows) {
    out += format_number(r.scale) + ',' + format_number(r.stride) + ',' + format_number(r.estimate.value) + ',' +
           format_number(r.estimate.std_error) + ',' + to_string(r.estimate.method) + '\n';
  }
  return out;
}

inline std::string emo_json(std::span<const EmoRow> rows) {
  json arr = json::array();
  for (const auto& r : rows) {
    arr.push_back({{"scale", report_number(r.scale)},
                   {"stride", report_number(r.stride)},
                   {"emo", report_number(r.estimate.value)},
                   {"std_error", report_number(r.estimate.std_error)},
                   {"method", to_string(r.estimate.method)}});
  }
  return dump_json(arr);
}

// --- anchor dumps ----------------------------------------------------------

inline std::string grid_csv(const AnchorLayout& layout) {
  std::string out = "id,scale,ratio,sublattice,cx,cy,w,h\n";
  for (AnchorId id = 0; id < layout.anchor_count(); ++id) {
    const auto a = layout.info(id);
    out += std::to_string(a.id) + ',' + format_number(a.scale) + ',' + format_number(a.ratio) + ',' +
           std::to_string(a.sublattice) + ',' + format_number(a.cx) + ',' + format_number(a.cy) + ',' +
           format_number(a.w) + ',' + format_number(a.h) + '\n';
  }
  return out;
}

inline std::string grid_json(const AnchorLayout& layout) {
  json arr = json::array();
  for (AnchorId id = 0; id < layout.anchor_count(); ++id) {
    const auto a = layout.info(id);
    arr.push_back({{"id", a.id},
                   {"scale", report_number(a.scale)},
                   {"ratio", report_number(a.ratio)},
                   {"sublattice", a.sublattice},
                   {"cx", report_number(a.cx)},
                   {"cy", report_number(a.cy)},
                   {"w", report_number(a.w)},
                   {"h", report_number(a.h)}});
  }
  return dump_json(arr);
}

// --- bucket reports --------------------------------------------------------

inline std::string bucket_row(const BucketStat& b) {
  return format_number(b.lo) + ',' + format_number(b.hi) + ',' + std::to_string(b.count) + ',' +
         format_number(b.mean_max_iou) + ',' + format_number(b.recall) + '\n';
}

inline json bucket_object(const BucketStat& b) {
  return {{"bucket_lo", report_number(b.lo)},
          {"bucket_hi", std::isinf(b.hi) ? json("inf") : report_number(b.hi)},
          {"count", b.count},
          {"mean_max_iou", report_number(b.mean_max_iou)},
          {"recall_at_tau", report_number(b.recall)}};
}

inline std::string bucket_csv(const ScaleBucketReport& r) {
  std::string out = "bucket_lo,bucket_hi,count,mean_max_iou,recall_at_tau\n";
  for (const auto& b : r.buckets) out += bucket_row(b);
  return out;
}

inline std::string bucket_json(const ScaleBucketReport& r) {
  json arr = json::array();
  for (const auto& b : r.buckets) arr.push_back(bucket_object(b));
  return dump_json(arr);
}

inline std::string compare_csv(std::span<const ScaleBucketReport> reports) {
  std::string out = "spec,bucket_lo,bucket_hi,count,mean_max_iou,recall_at_tau\n";
  for (std::size_t i = 0; i < reports.size(); ++i) {
    for (const auto& b : reports[i].buckets) out += std::to_string(i) + ',' + bucket_row(b);
  }
  return out;
}

inline std::string compare_json(std::span<const ScaleBucketReport> reports) {
  json arr = json::array();
  for (std::size_t i = 0; i < reports.size(); ++i) {
    for (const auto& b : reports[i].buckets) {
      auto o = bucket_object(b);
      o["spec"] = i;
      arr.push_back(o);
    }
  }
  return dump_json(arr);
}

inline std::string jitter_csv(const JitterReport& r) {
  std::string out = "bucket_lo,bucket_hi,count,mean_max_iou,min_mean_max_iou,max_mean_max_iou\n";
  for (const auto& b : r.buckets) {
    out += format_number(b.lo) + ',' + format_number(b.hi) + ',' + std::to_string(b.count) + ',' +
           format_number(b.mean) + ',' + format_number(b.min) + ',' + format_number(b.max) + '\n';
  }
  return out;
}

inline std::string jitter_json(const JitterReport& r) {
  json arr = json::array();
  for (const auto& b : r.buckets) {
    arr.push_back({{"bucket_lo", report_number(b.lo)},
                   {"bucket_hi", std::isinf(b.hi) ? json("inf") : report_number(b.hi)},
                   {"count", b.count},
                   {"mean_max_iou", report_number(b.mean)},
                   {"min_mean_max_iou", report_number(b.min)},
                   {"max_mean_max_iou", report_number(b.max)}});
  }
  json offsets = json::array();
  for (const auto& o : r.offsets) offsets.push_back({o.dx, o.dy});
  return dump_json({{"buckets", arr}, {"offsets", offsets}});
}

// --- matching --------------------------------------------------------------

inline std::string join_ids(const std::vector<AnchorId>& ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += std::to_string(ids[i]);
  }
  return out;
}

/// Two CSV tables separated by a blank line: one row per face, then one row
/// per positive or ignored anchor (all other anchors are negative).
inline std::string match_csv(const MatchResult& m, std::span<const FaceRecord> faces, const AnchorLayout& layout,
                             double t_high) {
  std::string out = "face,image_id,x,y,w,h,max_iou,argmax,hard,assigned\n";
  for (std::size_t f = 0; f < m.faces.size(); ++f) {
    const auto& fm = m.faces[f];
    const auto& b = faces[f].box;
    out += std::to_string(f) + ',' + csv_quote(faces[f].image_id) + ',' + format_number(b.x()) + ',' +
           format_number(b.y()) + ',' + format_number(b.w()) + ',' + format_number(b.h()) + ',' +
           format_number(fm.max_iou) + ',' + std::to_string(fm.argmax) + ',' + (fm.max_iou < t_high ? "1" : "0") +
           ',' + join_ids(fm.assigned) + '\n';
  }
  out += "\nanchor,label,source_face,cx,cy,w,h\n";
  for (AnchorId id = 0; id < m.labels.size(); ++id) {
    if (m.labels[id] == AnchorLabel::negative) continue;
    const auto a = layout.info(id);
    out += std::to_string(id) + ',' + to_string(m.labels[id]) + ',' +
           (m.source_face[id] == kNoFace ? std::string() : std::to_string(m.source_face[id])) + ',' +
           format_number(a.cx) + ',' + format_number(a.cy) + ',' + format_number(a.w) + ',' + format_number(a.h) +
           '\n';
  }
  return out;
}

inline std::string match_json(const MatchResult& m, std::span<const FaceRecord> faces, const AnchorLayout& layout,
                              double t_high) {
  json fs = json::array();
  for (std::size_t f = 0; f < m.faces.size(); ++f) {
    const auto& fm = m.faces[f];
    const auto& b = faces[f].box;
    fs.push_back({{"face", f},
                  {"image_id", faces[f].image_id},
                  {"x", report_number(b.x())},
                  {"y", report_number(b.y())},
                  {"w", report_number(b.w())},
                  {"h", report_number(b.h())},
                  {"max_iou", report_number(fm.max_iou)},
                  {"argmax", fm.argmax},
                  {"hard", fm.max_iou < t_high},
                  {"assigned", fm.assigned}});
  }
  json as = json::array();
  for (AnchorId id = 0; id < m.labels.size(); ++id) {
    if (m.labels[id] == AnchorLabel::negative) continue;
    const auto a = layout.info(id);
    as.push_back({{"anchor", id},
                  {"label", to_string(m.labels[id])},
                  {"source_face", m.source_face[id] == kNoFace ? json(nullptr) : json(m.source_face[id])},
                  {"cx", report_number(a.cx)},
                  {"cy", report_number(a.cy)},
                  {"w", report_number(a.w)},
                  {"h", report_number(a.h)}});
  }
  return dump_json({{"faces", fs},
                    {"anchors", as},
                    {"counts",
                     {{"positive", m.count(AnchorLabel::positive)},
                      {"ignore", m.count(AnchorLabel::ignore)},
                      {"negative", m.count(AnchorLabel::negative)}}},
                    {"jitter", {m.jitter.dx, m.jitter.dy}}});
}

// --- optimizer -------------------------------------------------------------

inline std::string ranking_csv(std::span<const ConfigScore> ranked) {
  std::string out = "rank,objective,recall,anchors_per_location,spec_json\n";
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    const auto& r = ranked[i];
    out += std::to_string(i + 1) + ',' + format_number(r.objective) + ',' + format_number(r.recall) + ',' +
           std::to_string(r.anchors_per_location) + ',' + csv_quote(spec_json(r.spec)) + '\n';
  }
  return out;
}

inline std::string ranking_json(std::span<const ConfigScore> ranked) {
  json arr = json::array();
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    const auto& r = ranked[i];
    arr.push_back({{"rank", i + 1},
                   {"objective", report_number(r.objective)},
                   {"recall", report_number(r.recall)},
                   {"anchors_per_location", r.anchors_per_location},
                   {"spec", to_json(r.spec)}});
  }
  return dump_json(arr);
}

}  // namespace anchorlab
