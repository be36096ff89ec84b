#include "cli.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "anchorlab/anchorlab.hpp"

namespace anchorlab::cli {

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out) throw IoError("cannot write " + path);
}

json input_record(const std::string& path, const std::string& content) {
  return {{"path", path}, {"sha256", sha256_hex(content)}};
}

std::string format_of(const json& params) {
  const auto f = params.value("format", std::string("csv"));
  if (f != "csv" && f != "json") throw UsageError("--format must be csv or json");
  return f;
}

PlaneSize plane_from(const json& p) {
  const auto v = p.get<std::vector<double>>();
  if (v.size() != 2 || !(v[0] > 0.0) || !(v[1] > 0.0)) throw UsageError("plane must be two positive numbers");
  return {v[0], v[1]};
}

struct LoadedFaces {
  std::vector<FaceRecord> records;
  std::vector<RectBox> boxes;
};

LoadedFaces load_faces(const json& params, json& inputs) {
  const auto path = params.at("annotations").get<std::string>();
  const auto content = read_file(path);
  inputs["annotations"] = input_record(path, content);
  std::istringstream in(content);
  LoadedFaces faces;
  try {
    faces.records = parse_annotations(in).faces;
  } catch (const AnnotationParseError& e) {
    throw IoError(path + ": " + e.what());
  }
  faces.boxes = boxes_of(faces.records);
  return faces;
}

PlaneSize resolve_plane(const json& params, const std::vector<FaceRecord>& faces) {
  if (params.contains("plane") && !params.at("plane").is_null()) return plane_from(params.at("plane"));
  return covering_plane(faces);
}

std::string pair_text(double scale, double stride) {
  return "scale " + format_number(scale) + " / stride " + format_number(stride);
}

Artifact run_emo(const json& p, unsigned threads) {
  const auto scales = p.at("scales").get<std::vector<double>>();
  const auto strides = p.at("strides").get<std::vector<double>>();
  if (scales.empty() || strides.empty()) throw UsageError("emo: --scales and --strides are required");
  const bool mc = p.at("mc").get<bool>();
  EmoQuery defaults;
  defaults.quadrature_cells = p.at("cells").get<int>();
  defaults.mc_samples = p.at("samples").get<std::int64_t>();
  defaults.seed = p.at("seed").get<std::uint64_t>();

  auto sorted_scales = scales;
  auto sorted_strides = strides;
  std::sort(sorted_scales.begin(), sorted_scales.end());
  std::sort(sorted_strides.begin(), sorted_strides.end());
  std::vector<EmoRow> rows;
  for (double l : sorted_scales) {
    for (double s : sorted_strides) {
      EmoQuery q = defaults;
      q.face_side = l;
      q.anchor_stride = s;
      try {
        q.validate();
        if (mc) {
          const auto layout = emo_lattice(l, s);
          rows.push_back({l, s, emo_monte_carlo(layout, l, l, q.mc_samples, q.seed, threads)});
        } else {
          rows.push_back({l, s, emo_closed_form(q)});
        }
      } catch (const ClosedFormInvalid&) {
        throw UsageError("closed-form invalid for " + pair_text(l, s) + " (stride/2 >= scale; use --mc)");
      } catch (const std::invalid_argument& e) {
        throw UsageError(pair_text(l, s) + ": " + e.what());
      }
    }
  }
  return {format_of(p) == "json" ? emo_json(rows) : emo_csv(rows), json::object()};
}

Artifact run_grid(const json& p, unsigned) {
  const auto spec = spec_from_json(p.at("spec"));
  const auto plane = plane_from(p.at("plane"));
  const AnchorLayout layout(spec, plane.w, plane.h);
  return {format_of(p) == "json" ? grid_json(layout) : grid_csv(layout), json::object()};
}

Artifact run_stats(const json& p, unsigned threads) {
  Artifact art;
  const auto faces = load_faces(p, art.inputs);
  if (faces.boxes.empty()) throw IoError("no valid faces in " + p.at("annotations").get<std::string>());
  std::vector<AnchorSpec> specs;
  for (const auto& s : p.at("specs")) specs.push_back(spec_from_json(s));
  if (specs.empty()) specs.push_back(AnchorSpec::baseline());
  const auto edges = p.at("buckets").get<std::vector<double>>();
  const double tau = p.at("tau").get<double>();
  const auto plane = resolve_plane(p, faces.records);
  const auto audit = p.at("audit_every").get<std::size_t>();
  const bool as_json = format_of(p) == "json";

  if (p.at("jitter").get<bool>()) {
    if (specs.size() != 1) throw UsageError("stats: --jitter takes exactly one --spec");
    const AnchorLayout layout(specs.front(), plane.w, plane.h);
    const auto report = jitter_experiment(faces.boxes, layout, edges, tau, p.at("trials").get<int>(),
                                          p.at("seed").get<std::uint64_t>(), threads);
    art.text = as_json ? jitter_json(report) : jitter_csv(report);
    return art;
  }
  std::vector<ScaleBucketReport> reports;
  for (const auto& spec : specs) {
    const AnchorLayout layout(spec, plane.w, plane.h);
    reports.push_back(bucket_stats(std::span<const RectBox>(faces.boxes), layout, edges, tau, threads, audit));
  }
  if (reports.size() == 1) {
    art.text = as_json ? bucket_json(reports.front()) : bucket_csv(reports.front());
  } else {
    art.text = as_json ? compare_json(reports) : compare_csv(reports);
  }
  return art;
}

Artifact run_match(const json& p, unsigned threads) {
  Artifact art;
  const auto faces = load_faces(p, art.inputs);
  const auto spec = spec_from_json(p.at("spec"));
  MatchConfig cfg;
  cfg.t_high = p.at("th").get<double>();
  cfg.t_low = p.at("tl").get<double>();
  cfg.hc_n = p.at("hc").get<int>();
  cfg.jitter = p.at("jitter").get<bool>();
  cfg.jitter_seed = p.at("seed").get<std::uint64_t>();
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const auto plane = resolve_plane(p, faces.records);
  const AnchorLayout layout(spec, plane.w, plane.h);
  auto result = match_faces(faces.boxes, layout, cfg, threads);
  if (cfg.hc_n > 0) result = compensate_hard_faces(std::move(result), faces.boxes, layout, cfg, threads);
  art.text = format_of(p) == "json" ? match_json(result, faces.records, layout, cfg.t_high)
                                    : match_csv(result, faces.records, layout, cfg.t_high);
  return art;
}

Artifact run_optimize(const json& p, unsigned threads) {
  Artifact art;
  const auto faces = load_faces(p, art.inputs);
  if (faces.boxes.empty()) throw IoError("no valid faces in " + p.at("annotations").get<std::string>());
  const auto space = space_from_json(p.at("space"));
  const auto plane = resolve_plane(p, faces.records);
  OptimizeResult result;
  try {
    result = optimize(space, faces.boxes, p.at("tau").get<double>(), plane, threads);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  for (const auto& f : result.failures) std::cerr << "warning: skipped " << f << '\n';
  art.text = format_of(p) == "json" ? ranking_json(result.ranked) : ranking_csv(result.ranked);
  return art;
}

std::optional<std::uint64_t> env_seed() {
  const char* v = std::getenv(kSeedEnv);
  if (v == nullptr || *v == '\0') return std::nullopt;
  std::uint64_t seed = 0;
  const std::string text(v);
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), seed);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw UsageError(std::string(kSeedEnv) + " must be an unsigned integer");
  }
  return seed;
}

std::vector<double> parse_plane(const std::string& text) {
  const auto x = text.find_first_of("xX");
  if (x == std::string::npos) throw UsageError("--plane must look like WxH, got '" + text + "'");
  std::vector<double> out;
  for (const auto& part : {text.substr(0, x), text.substr(x + 1)}) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
    if (part.empty() || ec != std::errc() || ptr != part.data() + part.size() || !(v > 0.0) || !std::isfinite(v)) {
      throw UsageError("--plane needs two positive sizes, got '" + text + "'");
    }
    out.push_back(v);
  }
  return out;
}

json load_spec_param(const std::string& path, json& digests, const std::string& name) {
  const auto content = read_file(path);
  digests[name] = input_record(path, content);
  std::istringstream in(content);
  return to_json(load_spec(in));
}

// Spec files are embedded in the parameters, so only their digests need to
// match on replay when the file still exists.
void check_inputs(const json& recorded, const json& now) {
  for (const auto& [name, rec] : recorded.items()) {
    if (!now.contains(name)) continue;
    if (now.at(name).at("sha256") != rec.at("sha256")) {
      throw IoError("input '" + rec.at("path").get<std::string>() + "' changed since the manifest was written");
    }
  }
}

void emit(const std::string& subcommand, const json& params, const Artifact& art, const std::string& out_path,
          const std::string& manifest_path, std::ostream& out, std::ostream& err) {
  const auto manifest = dump_json(make_manifest(subcommand, params, art.inputs));
  if (out_path.empty()) {
    out << art.text;
  } else {
    write_file(out_path, art.text);
  }
  if (!manifest_path.empty()) {
    write_file(manifest_path, manifest);
  } else if (!out_path.empty()) {
    write_file(out_path + ".manifest.json", manifest);
  } else {
    err << manifest;
  }
}

}  // namespace

std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex += kHex[md[i] >> 4];
    hex += kHex[md[i] & 0xf];
  }
  return hex;
}

json make_manifest(const std::string& subcommand, const json& params, const json& inputs) {
  return {{"tool", kToolName},
          {"version", kToolVersion},
          {"subcommand", subcommand},
          {"parameters", params},
          {"seed", params.contains("seed") ? params.at("seed") : json(nullptr)},
          {"inputs", inputs}};
}

Artifact execute(const std::string& subcommand, const json& params, unsigned threads) {
  try {
    if (subcommand == "emo") return run_emo(params, threads);
    if (subcommand == "grid") return run_grid(params, threads);
    if (subcommand == "stats") return run_stats(params, threads);
    if (subcommand == "match") return run_match(params, threads);
    if (subcommand == "optimize") return run_optimize(params, threads);
  } catch (const json::exception& e) {
    throw UsageError(std::string("bad parameters: ") + e.what());
  }
  throw UsageError("unknown subcommand '" + subcommand + "'");
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Anchor overlap analysis: EMO tables, anchor layouts, matching and anchor design search",
               kToolName};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  unsigned threads = 0;
  std::string out_path;
  std::string manifest_path;
  std::string format = "csv";
  std::optional<std::uint64_t> seed_flag;
  const auto common = [&](CLI::App* sub) {
    sub->add_option("--out", out_path, "Write the artifact here (manifest goes to PATH.manifest.json)");
    sub->add_option("--manifest", manifest_path, "Write the run manifest here");
    sub->add_option("--threads", threads, "Worker threads (0 = all cores); never changes results");
  };
  const auto with_format = [&](CLI::App* sub) {
    sub->add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  };
  const auto with_seed = [&](CLI::App* sub) {
    sub->add_option("--seed", seed_flag, std::string("Random seed (default: $") + kSeedEnv + " or 0)");
  };

  // emo
  std::vector<double> scales;
  std::vector<double> strides;
  bool mc = false;
  std::int64_t samples = 100000;
  int cells = 512;
  auto* emo = app.add_subcommand("emo", "Expected max overlap for (scale, stride) pairs");
  emo->add_option("--scale,--scales", scales, "Face side lengths")->delimiter(',')->required();
  emo->add_option("--stride,--strides", strides, "Anchor strides")->delimiter(',')->required();
  emo->add_flag("--mc", mc, "Monte Carlo against a plain lattice instead of the closed form");
  emo->add_option("--samples", samples, "Monte Carlo samples")->capture_default_str();
  emo->add_option("--cells", cells, "Quadrature cells per axis")->capture_default_str();
  with_seed(emo);
  with_format(emo);
  common(emo);

  // grid
  std::string spec_path;
  std::vector<std::string> spec_paths;
  std::string plane_text;
  auto* grid = app.add_subcommand("grid", "Dump every anchor of a layout");
  grid->add_option("--spec", spec_path, "Anchor spec (JSON); default: 16..512 at stride 16");
  grid->add_option("--plane", plane_text, "Plane size WxH")->required();
  with_format(grid);
  common(grid);

  // stats
  std::string annotations;
  std::vector<double> buckets = default_bucket_edges();
  double tau = 0.5;
  bool jitter = false;
  int trials = 1;
  std::size_t audit_every = 100;
  auto* stats = app.add_subcommand("stats", "Per-scale max-IoU statistics for an annotation listing");
  stats->add_option("--annotations", annotations, "Face annotation listing")->required();
  stats->add_option("--spec", spec_paths, "Anchor spec (JSON); repeat to compare designs");
  stats->add_option("--buckets", buckets, "Bucket edges (px)")->delimiter(',');
  stats->add_option("--tau", tau, "IoU threshold for recall")->capture_default_str();
  stats->add_flag("--jitter", jitter, "Run the face shift jittering experiment");
  stats->add_option("--trials", trials, "Jitter trials")->capture_default_str();
  stats->add_option("--audit-every", audit_every, "Recheck every k-th face by exhaustive scan (0 = off)")
      ->capture_default_str();
  stats->add_option("--plane", plane_text, "Plane size WxH (default: extent of the faces)");
  with_seed(stats);
  with_format(stats);
  common(stats);

  // match
  double th = 0.5;
  double tl = 0.3;
  int hc = 5;
  auto* match = app.add_subcommand("match", "Assign anchors to faces");
  match->add_option("--annotations", annotations, "Face annotation listing")->required();
  match->add_option("--spec", spec_path, "Anchor spec (JSON)");
  match->add_option("--th", th, "Positive IoU threshold")->capture_default_str();
  match->add_option("--tl", tl, "Background IoU threshold")->capture_default_str();
  match->add_option("--hc", hc, "Hard face compensation count (0 = off)")->capture_default_str();
  match->add_flag("--jitter", jitter, "Shift faces by one random offset first");
  match->add_option("--plane", plane_text, "Plane size WxH (default: extent of the faces)");
  with_seed(match);
  with_format(match);
  common(match);

  // optimize
  std::string space_path;
  auto* opt = app.add_subcommand("optimize", "Exhaustive anchor design search");
  opt->add_option("--annotations", annotations, "Face annotation listing")->required();
  opt->add_option("--space", space_path, "Search space (JSON)")->required();
  opt->add_option("--tau", tau, "IoU threshold for recall")->capture_default_str();
  opt->add_option("--plane", plane_text, "Plane size WxH (default: extent of the faces)");
  with_format(opt);
  common(opt);

  // replay
  std::string replay_path;
  auto* replay = app.add_subcommand("replay", "Re-run a manifest and reproduce its artifact");
  replay->add_option("MANIFEST", replay_path, "Manifest written by an earlier run")->required();
  common(replay);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsageError;
  }

  try {
    const auto seed = [&] {
      if (seed_flag) return *seed_flag;
      return env_seed().value_or(0);
    };
    const auto plane_param = [&]() -> json {
      if (plane_text.empty()) return nullptr;
      return parse_plane(plane_text);
    };
    json params;
    json spec_inputs = json::object();
    std::string subcommand;
    if (emo->parsed()) {
      subcommand = "emo";
      params = {{"scales", scales}, {"strides", strides}, {"mc", mc},      {"samples", samples},
                {"cells", cells},   {"seed", seed()},     {"format", format}};
    } else if (grid->parsed()) {
      subcommand = "grid";
      params = {{"spec", spec_path.empty() ? to_json(AnchorSpec::baseline())
                                           : load_spec_param(spec_path, spec_inputs, "spec")},
                {"plane", parse_plane(plane_text)},
                {"format", format}};
    } else if (stats->parsed()) {
      subcommand = "stats";
      json specs = json::array();
      for (std::size_t i = 0; i < spec_paths.size(); ++i) {
        specs.push_back(load_spec_param(spec_paths[i], spec_inputs, "spec" + std::to_string(i)));
      }
      if (specs.empty()) specs.push_back(to_json(AnchorSpec::baseline()));
      params = {{"annotations", annotations}, {"specs", specs},   {"buckets", buckets},
                {"tau", tau},                 {"jitter", jitter}, {"trials", trials},
                {"seed", seed()},             {"plane", plane_param()}, {"audit_every", audit_every},
                {"format", format}};
    } else if (match->parsed()) {
      subcommand = "match";
      params = {{"annotations", annotations},
                {"spec", spec_path.empty() ? to_json(AnchorSpec::baseline())
                                           : load_spec_param(spec_path, spec_inputs, "spec")},
                {"th", th},
                {"tl", tl},
                {"hc", hc},
                {"jitter", jitter},
                {"seed", seed()},
                {"plane", plane_param()},
                {"format", format}};
    } else if (opt->parsed()) {
      subcommand = "optimize";
      const auto content = read_file(space_path);
      spec_inputs["space"] = input_record(space_path, content);
      std::istringstream in(content);
      params = {{"annotations", annotations},
                {"space", to_json(load_space(in))},
                {"tau", tau},
                {"plane", plane_param()},
                {"format", format}};
    } else {
      const auto manifest = [&] {
        const auto text = read_file(replay_path);
        try {
          return json::parse(text);
        } catch (const json::parse_error& e) {
          throw UsageError(replay_path + ": " + e.what());
        }
      }();
      if (manifest.value("tool", std::string()) != kToolName) throw UsageError(replay_path + " is not a manifest");
      subcommand = manifest.at("subcommand").get<std::string>();
      params = manifest.at("parameters");
      auto art = execute(subcommand, params, threads);
      check_inputs(manifest.at("inputs"), art.inputs);
      art.inputs = manifest.at("inputs");
      emit(subcommand, params, art, out_path, manifest_path, out, err);
      return kOk;
    }
    auto art = execute(subcommand, params, threads);
    art.inputs.update(spec_inputs);
    emit(subcommand, params, art, out_path, manifest_path, out, err);
    return kOk;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kIoError;
  } catch (const AnnotationParseError& e) {
    err << "error: " << e.what() << '\n';
    return kIoError;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const json::exception& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kIoError;
  }
}

}  // namespace anchorlab::cli
