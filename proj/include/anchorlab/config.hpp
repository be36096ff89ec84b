#pragma once

#include <charconv>
#include <cmath>
#include <istream>
#include <set>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "anchorlab/anchor_layout.hpp"

namespace anchorlab {

using json = nlohmann::json;

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Shortest round-trip text for a number ("16", "11.5").
inline std::string shortest_number(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

/// JSON number that prints without a trailing ".0" when integral.
inline json number_json(double v) {
  if (std::floor(v) == v && std::fabs(v) < 9007199254740992.0) return static_cast<std::int64_t>(v);
  return v;
}

inline double parse_scale_key(const std::string& key) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(key.data(), key.data() + key.size(), v);
  if (key.empty() || ec != std::errc() || ptr != key.data() + key.size()) {
    throw ConfigError("scale key '" + key + "' is not a number");
  }
  return v;
}

inline void reject_unknown_keys(const json& j, const std::set<std::string>& known, const char* what) {
  if (!j.is_object()) throw ConfigError(std::string(what) + ": expected a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (!known.contains(k)) throw ConfigError(std::string(what) + ": unknown key '" + k + "'");
  }
}

inline json to_json(const AnchorSpec& spec) {
  json scales = json::array();
  for (double s : spec.scales) scales.push_back(number_json(s));
  json ratios = json::array();
  for (double r : spec.ratios) ratios.push_back(number_json(r));
  json shifts = json::object();
  for (const auto& [scale, n] : spec.shifts_per_scale) {
    if (n != 0) shifts[shortest_number(scale)] = n;
  }
  return json{{"scales", scales},
              {"ratios", ratios},
              {"base_stride", number_json(spec.base_stride)},
              {"stride_divisor", spec.stride_divisor},
              {"shifts_per_scale", shifts}};
}

/// Compact canonical text (sorted keys, zero shifts omitted).
inline std::string spec_json(const AnchorSpec& spec) { return to_json(spec).dump(); }

inline AnchorSpec spec_from_json(const json& j) {
  reject_unknown_keys(j, {"scales", "ratios", "base_stride", "stride_divisor", "shifts_per_scale"}, "anchor spec");
  AnchorSpec spec;
  try {
    if (!j.contains("scales")) throw ConfigError("anchor spec: 'scales' is required");
    spec.scales = j.at("scales").get<std::vector<double>>();
    if (j.contains("ratios")) spec.ratios = j.at("ratios").get<std::vector<double>>();
    if (j.contains("base_stride")) spec.base_stride = j.at("base_stride").get<double>();
    if (j.contains("stride_divisor")) spec.stride_divisor = j.at("stride_divisor").get<int>();
    if (j.contains("shifts_per_scale")) {
      const auto& m = j.at("shifts_per_scale");
      if (!m.is_object()) throw ConfigError("anchor spec: shifts_per_scale must be an object");
      for (const auto& [k, v] : m.items()) spec.shifts_per_scale[parse_scale_key(k)] = v.get<int>();
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("anchor spec: ") + e.what());
  }
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return spec;
}

inline json parse_json_document(std::istream& in, const char* what) {
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string(what) + ": " + e.what());
  }
}

inline AnchorSpec load_spec(std::istream& in) { return spec_from_json(parse_json_document(in, "anchor spec")); }

}  // namespace anchorlab
