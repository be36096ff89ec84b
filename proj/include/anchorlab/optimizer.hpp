#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "anchorlab/anchor_layout.hpp"
#include "anchorlab/config.hpp"
#include "anchorlab/dataset.hpp"
#include "anchorlab/parallel.hpp"

namespace anchorlab {

/// Discrete anchor design space. Scales absent from `shifts_per_scale` get no
/// shifted anchors. `budget` caps anchors per sliding-window location.
struct SearchSpace {
  std::vector<int> stride_divisors{1};
  std::map<double, std::vector<int>> shifts_per_scale;
  std::vector<std::vector<double>> scale_sets;
  std::vector<double> ratios{1.0};
  double base_stride = 16.0;
  int budget = 1;

  void validate() const {
    if (stride_divisors.empty()) throw std::invalid_argument("SearchSpace: stride_divisors must not be empty");
    for (int d : stride_divisors) {
      if (d != 1 && d != 2 && d != 4) throw std::invalid_argument("SearchSpace: stride divisors must be 1, 2 or 4");
    }
    for (const auto& [scale, options] : shifts_per_scale) {
      if (options.empty()) throw std::invalid_argument("SearchSpace: empty shift options for a scale");
      for (int n : options) {
        if (n != 0 && n != 1 && n != 3) throw std::invalid_argument("SearchSpace: shift counts must be 0, 1 or 3");
      }
    }
    if (scale_sets.empty()) throw std::invalid_argument("SearchSpace: scale_sets must not be empty");
    if (ratios.empty()) throw std::invalid_argument("SearchSpace: ratios must not be empty");
    if (budget < 1) throw std::invalid_argument("SearchSpace: budget must be >= 1");
  }
};

struct ConfigScore {
  AnchorSpec spec;
  double objective = 0.0;  // mean per-face max IoU
  double recall = 0.0;     // fraction of faces with max IoU >= tau
  int anchors_per_location = 0;
};

/// Cross product of the space (scale set, divisor, shift choices; the last
/// shifted scale varies fastest) filtered by the budget. Duplicate designs are
/// kept once, at their first position.
inline std::vector<AnchorSpec> enumerate_configs(const SearchSpace& space) {
  space.validate();
  std::vector<AnchorSpec> out;
  for (const auto& scales : space.scale_sets) {
    std::vector<double> shifted;
    std::vector<const std::vector<int>*> options;
    for (const auto& [scale, opts] : space.shifts_per_scale) {
      if (std::find(scales.begin(), scales.end(), scale) != scales.end()) {
        shifted.push_back(scale);
        options.push_back(&opts);
      }
    }
    for (int divisor : space.stride_divisors) {
      std::vector<std::size_t> pick(shifted.size(), 0);
      for (;;) {
        AnchorSpec spec;
        spec.scales = scales;
        spec.ratios = space.ratios;
        spec.base_stride = space.base_stride;
        spec.stride_divisor = divisor;
        for (std::size_t k = 0; k < shifted.size(); ++k) {
          const int n = (*options[k])[pick[k]];
          if (n != 0) spec.shifts_per_scale[shifted[k]] = n;
        }
        spec.validate();
        if (spec.anchors_per_location() <= space.budget &&
            std::find(out.begin(), out.end(), spec) == out.end()) {
          out.push_back(std::move(spec));
        }
        std::size_t k = shifted.size();
        while (k > 0 && ++pick[k - 1] == options[k - 1]->size()) pick[--k] = 0;
        if (k == 0) break;
      }
    }
  }
  return out;
}

inline ConfigScore evaluate_config(const AnchorSpec& spec, std::span<const RectBox> faces, double tau,
                                   PlaneSize plane, unsigned workers = 0) {
  if (faces.empty()) throw std::invalid_argument("evaluate_config: no faces");
  const AnchorLayout layout(spec, plane.w, plane.h);
  const std::vector<double> edges{1.0};
  const auto report = bucket_stats(faces, layout, edges, tau, workers);
  return {spec, report.overall.mean_max_iou, report.overall.recall, spec.anchors_per_location()};
}

/// Ranking order: objective descending, then fewer anchors per location, then
/// the canonical JSON text of the spec.
inline bool ranks_before(const ConfigScore& a, const ConfigScore& b) {
  if (a.objective != b.objective) return a.objective > b.objective;
  if (a.anchors_per_location != b.anchors_per_location) return a.anchors_per_location < b.anchors_per_location;
  return spec_json(a.spec) < spec_json(b.spec);
}

struct OptimizeResult {
  std::vector<ConfigScore> ranked;
  std::vector<std::string> failures;  // one message per config that could not be evaluated
};

/// Exhaustive search; ranked.front() is the recommendation.
inline OptimizeResult optimize(const SearchSpace& space, std::span<const RectBox> faces, double tau,
                               PlaneSize plane, unsigned workers = 0) {
  if (faces.empty()) throw std::invalid_argument("optimize: no faces");
  validate_tau(tau);
  const auto configs = enumerate_configs(space);
  if (configs.empty()) throw std::invalid_argument("optimize: the search space is empty under the budget");
  std::vector<std::optional<ConfigScore>> scores(configs.size());
  std::vector<std::string> errors(configs.size());
  parallel_chunks(configs.size(), workers, [&](std::size_t i) {
    try {
      scores[i] = evaluate_config(configs[i], faces, tau, plane, 1);
    } catch (const std::exception& e) {
      errors[i] = spec_json(configs[i]) + ": " + e.what();
    }
  });
  OptimizeResult result;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    if (scores[i]) {
      result.ranked.push_back(std::move(*scores[i]));
    } else {
      result.failures.push_back(std::move(errors[i]));
    }
  }
  std::stable_sort(result.ranked.begin(), result.ranked.end(), ranks_before);
  return result;
}

}  // namespace anchorlab

namespace anchorlab {

inline json to_json(const SearchSpace& space) {
  json sets = json::array();
  for (const auto& set : space.scale_sets) {
    json one = json::array();
    for (double s : set) one.push_back(number_json(s));
    sets.push_back(one);
  }
  json shifts = json::object();
  for (const auto& [scale, options] : space.shifts_per_scale) shifts[shortest_number(scale)] = options;
  json ratios = json::array();
  for (double r : space.ratios) ratios.push_back(number_json(r));
  return json{{"scale_sets", sets},
              {"stride_divisors", space.stride_divisors},
              {"shifts_per_scale", shifts},
              {"ratios", ratios},
              {"base_stride", number_json(space.base_stride)},
              {"budget", space.budget}};
}

inline SearchSpace space_from_json(const json& j) {
  reject_unknown_keys(j, {"scale_sets", "stride_divisors", "shifts_per_scale", "ratios", "base_stride", "budget"},
                      "search space");
  SearchSpace space;
  try {
    if (!j.contains("scale_sets") || !j.contains("budget")) {
      throw ConfigError("search space: 'scale_sets' and 'budget' are required");
    }
    space.scale_sets = j.at("scale_sets").get<std::vector<std::vector<double>>>();
    space.budget = j.at("budget").get<int>();
    if (j.contains("stride_divisors")) space.stride_divisors = j.at("stride_divisors").get<std::vector<int>>();
    if (j.contains("ratios")) space.ratios = j.at("ratios").get<std::vector<double>>();
    if (j.contains("base_stride")) space.base_stride = j.at("base_stride").get<double>();
    if (j.contains("shifts_per_scale")) {
      const auto& m = j.at("shifts_per_scale");
      if (!m.is_object()) throw ConfigError("search space: shifts_per_scale must be an object");
      for (const auto& [k, v] : m.items()) space.shifts_per_scale[parse_scale_key(k)] = v.get<std::vector<int>>();
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("search space: ") + e.what());
  }
  try {
    space.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return space;
}

inline SearchSpace load_space(std::istream& in) {
  return space_from_json(parse_json_document(in, "search space"));
}

}  // namespace anchorlab
