#pragma once

// Command implementations behind the scenesketch CLI. Each writes its
// artifacts under an output directory and is deterministic for a fixed seed
// and configuration; timing only goes to the log stream.

#include <iostream>

#include "scenesketch/data/datasets.hpp"
#include "scenesketch/eval/report.hpp"
#include "scenesketch/service/session.hpp"

namespace scenesketch::cli {

/// Bad invocation: unknown preset, missing input, malformed override. Exit 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

inline void require_file(const std::filesystem::path& p, const std::string& what) {
  if (!std::filesystem::is_regular_file(p)) throw UsageError(what + " not found: " + p.string());
}

inline void require_dir(const std::filesystem::path& p, const std::string& what) {
  if (!std::filesystem::is_directory(p)) throw UsageError(what + " not found: " + p.string());
}

/// "key=value" pairs; the value is read as JSON when it parses, else as a string.
inline Json parse_overrides(const std::vector<std::string>& pairs) {
  Json j = Json::object();
  for (const auto& kv : pairs) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("override '" + kv + "' is not key=value");
    const std::string value = kv.substr(eq + 1);
    Json v = Json::parse(value, nullptr, false);
    j[kv.substr(0, eq)] = v.is_discarded() ? Json(value) : v;
  }
  return j;
}

inline Json read_json_file(const std::filesystem::path& p, const std::string& what) {
  require_file(p, what);
  Json j = Json::parse(read_file(p), nullptr, false);
  if (j.is_discarded()) throw UsageError(what + " is not valid JSON: " + p.string());
  return j;
}

/// Preset, then --config file, then key=value overrides.
template <class Config>
Config resolve_config(const std::string& preset, const std::optional<std::filesystem::path>& config_file,
                      const std::vector<std::string>& overrides) {
  Config c;
  try {
    c = Config::preset_named(preset);
    if (config_file) c.merge_json(read_json_file(*config_file, "config file"));
    c.merge_json(parse_overrides(overrides));
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  } catch (const Json::exception& e) {
    throw UsageError(std::string("bad configuration value: ") + e.what());
  }
  return c;
}

inline void write_run_log(const std::filesystem::path& out, const std::string& command,
                          const Json& config, std::uint64_t seed, Json extra = Json::object()) {
  extra["schema_version"] = kSchemaVersion;
  extra["command"] = command;
  extra["seed"] = seed;
  extra["config"] = config;
  extra["config_hash"] = config_hash(config);
  write_file(out / "run.json", extra.dump(2) + "\n");
}

// ----------------------------------------------------------------------------

struct GenCorpusOptions {
  std::string kind = "layouts";  // layouts | strokes
  std::filesystem::path out;
  std::uint64_t seed = 0;
  std::size_t per_relation = 500;
  std::string family = "tree";
  std::string class_label;  // defaults to the family name
  std::size_t count = 500;
  double ratio_lo = 0.5, ratio_hi = 2.0;
};

inline void cmd_gen_corpus(const GenCorpusOptions& o, std::ostream& log = std::cerr) {
  if (o.out.empty()) throw UsageError("--out is required");
  if (o.kind == "layouts") {
    const auto corpus =
        generate_synthetic_layout_corpus(desk_layout_corpus_spec(o.per_relation), ClassVocabulary::desk(), o.seed);
    write_layout_dataset(o.out, corpus);
    log << "wrote " << corpus.size() << " layouts to " << o.out.string() << "\n";
  } else if (o.kind == "strokes") {
    StrokeFamilySpec fs;
    try {
      fs.family = shape_family_from_string(o.family);
    } catch (const DataError& e) {
      throw UsageError(e.what());
    }
    fs.class_label = o.class_label.empty() ? o.family : o.class_label;
    fs.count = o.count;
    fs.aspect_ratio = {o.ratio_lo, o.ratio_hi};
    if (!(o.ratio_lo > 0) || !(o.ratio_hi >= o.ratio_lo)) throw UsageError("bad aspect ratio range");
    const auto corpus = generate_synthetic_stroke_corpus({fs}, o.seed);
    write_stroke_dataset(o.out, corpus);
    log << "wrote " << corpus.size() << " " << fs.class_label << " sketches to " << o.out.string() << "\n";
  } else {
    throw UsageError("--kind must be 'layouts' or 'strokes'");
  }
}

// ----------------------------------------------------------------------------

struct TrainOptions {
  std::filesystem::path data;
  std::filesystem::path out;
  std::string preset = "desk";
  std::optional<std::filesystem::path> config_file;
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  std::size_t log_every = 100;
  // sketcher only
  std::string class_label;
  std::string fallback;
};

/// Writes composer.ckpt, composer_loss.csv and run.json.
inline void cmd_train_composer(const TrainOptions& o, std::ostream& log = std::cerr) {
  require_file(o.data, "layout corpus");
  if (o.out.empty()) throw UsageError("--out is required");
  auto cfg = resolve_config<ComposerConfig>(o.preset, o.config_file, o.overrides);
  const ClassVocabulary classes = ClassVocabulary::desk();
  const LayoutDataset ds = parse_layout_dataset(o.data, classes);
  log << "composer: " << ds.scenes.size() << " layouts (" << ds.malformed << " malformed skipped)\n";
  const auto r = train_composer(ds.scenes, cfg, classes, o.seed, [&](const ComposerLossRow& row) {
    if (o.log_every && row.step % o.log_every == 0)
      log << "step " << row.step << " L_SC " << format_double(row.total) << "\n";
  });
  log << "trained in " << r.seconds << " s\n";
  write_file(o.out / "composer.ckpt", composer_checkpoint_bytes(r));
  write_file(o.out / "composer_loss.csv", composer_curve_csv(r.curve));
  write_run_log(o.out, "train-composer", r.model.config().to_json(), o.seed,
                {{"data", o.data.filename().string()}, {"layouts", ds.scenes.size()}});
}

/// Writes sketcher_<class>.ckpt and sketcher_<class>_loss.csv, and adds the
/// model to <out>/sketchers.json.
inline void cmd_train_sketcher(const TrainOptions& o, std::ostream& log = std::cerr) {
  require_file(o.data, "stroke corpus");
  if (o.out.empty()) throw UsageError("--out is required");
  if (o.class_label.empty()) throw UsageError("--class is required");
  auto cfg = resolve_config<SketcherConfig>(o.preset, o.config_file, o.overrides);
  const StrokeDataset ds = parse_stroke_dataset(o.data, o.class_label);
  if (ds.records.empty()) throw DataError("stroke corpus " + o.data.string() + " has no usable drawings");
  log << "sketcher '" << o.class_label << "': " << ds.records.size() << " drawings (" << ds.skipped
      << " skipped)\n";
  const auto r = train_sketcher(ds.records, cfg, o.seed, [&](const SketcherLossRow& row) {
    if (o.log_every && row.step % o.log_every == 0)
      log << "step " << row.step << " L_R " << format_double(row.total) << "\n";
  });
  log << "trained in " << r.seconds << " s\n";
  const std::string base = "sketcher_" + o.class_label;
  write_file(o.out / (base + ".ckpt"), sketcher_checkpoint_bytes(r));
  write_file(o.out / (base + "_loss.csv"), sketcher_curve_csv(r.curve));

  const auto manifest_path = o.out / "sketchers.json";
  std::map<std::string, std::string> paths;
  std::string fallback;
  if (std::filesystem::exists(manifest_path)) {
    const Json m = read_json_file(manifest_path, "sketcher registry");
    paths = m.at("sketchers").get<std::map<std::string, std::string>>();
    fallback = m.value("fallback", "");
  }
  paths[o.class_label] = base + ".ckpt";
  if (!o.fallback.empty()) fallback = o.fallback;
  write_file(manifest_path, SketcherRegistry::manifest(paths, fallback).dump(2) + "\n");
  Json run = {{"data", o.data.filename().string()}, {"class", o.class_label}, {"drawings", ds.records.size()}};
  const Json c = r.model.config().to_json();
  run["config_hash"] = config_hash(c);
  write_file(o.out / (base + "_run.json"),
             Json{{"schema_version", kSchemaVersion}, {"command", "train-sketcher"}, {"seed", o.seed},
                  {"config", c}, {"config_hash", config_hash(c)}, {"run", run}}
                     .dump(2) +
                 "\n");
}

// ----------------------------------------------------------------------------

inline Pipeline load_pipeline(const std::filesystem::path& dir) {
  require_dir(dir, "checkpoint directory");
  require_file(dir / "composer.ckpt", "composer checkpoint");
  require_file(dir / "sketchers.json", "sketcher registry");
  return Pipeline::load(dir);
}

struct SampleOptions {
  std::filesystem::path checkpoints;
  std::string description;
  std::filesystem::path out;
  std::uint64_t seed = 0;
  std::size_t k = 1;
  double layout_temperature = 1.0;
  double sketch_temperature = 0.25;
};

inline void write_scene_files(const std::filesystem::path& out, const std::string& stem,
                              const LayoutScene& layout, const SceneSketch& scene) {
  write_file(out / (stem + "_layout.json"), scene_to_json(layout).dump(2) + "\n");
  write_file(out / (stem + ".svg"), render_svg(scene));
  write_file(out / (stem + "_polylines.json"), scene_polylines_json(scene).dump() + "\n");
}

/// Candidate i goes to scene_<i>.svg, scene_<i>_layout.json and
/// scene_<i>_polylines.json.
inline std::vector<LayoutScene> cmd_sample(const SampleOptions& o, std::ostream& log = std::cerr) {
  if (o.description.empty()) throw UsageError("--desc is required");
  if (o.out.empty()) throw UsageError("--out is required");
  if (o.k < 1) throw UsageError("--k must be at least 1");
  Pipeline p = load_pipeline(o.checkpoints);
  const auto layouts =
      sample_layout_candidates(*p.composer, o.description, o.k, o.seed, o.layout_temperature);
  for (std::size_t i = 0; i < layouts.size(); ++i) {
    SceneSketch scene = assemble_scene(layouts[i], p.sketchers, o.sketch_temperature, layouts[i].seed);
    scene.composer_hash = p.composer_hash;
    write_scene_files(o.out, "scene_" + std::to_string(i), layouts[i], scene);
    log << "scene_" << i << ": " << layouts[i].objects.size() << " objects\n";
  }
  return layouts;
}

struct RenderOptions {
  std::filesystem::path checkpoints;
  std::filesystem::path layout;
  std::filesystem::path out;
  std::optional<std::uint64_t> seed;  // defaults to the layout's own seed
  double sketch_temperature = 0.25;
};

/// Sketches an existing layout file into an SVG.
inline void cmd_render(const RenderOptions& o, std::ostream& log = std::cerr) {
  if (o.out.empty()) throw UsageError("--out is required");
  const Json j = read_json_file(o.layout, "layout file");
  Pipeline p = load_pipeline(o.checkpoints);
  LayoutScene layout;
  try {
    layout = scene_from_json(j, p.composer->classes());
  } catch (const std::exception& e) {
    throw UsageError(std::string("layout file: ") + e.what());
  }
  SceneSketch scene =
      assemble_scene(layout, p.sketchers, o.sketch_temperature, o.seed.value_or(layout.seed));
  scene.composer_hash = p.composer_hash;
  write_file(o.out, render_svg(scene));
  log << "rendered " << scene.placed.size() << " objects to " << o.out.string() << "\n";
}

struct EvalOptions {
  std::filesystem::path checkpoints;
  std::filesystem::path data;
  std::filesystem::path out;
  std::vector<std::string> prompts;  // empty: the desk prompts
  EvalConfig config;
};

/// Writes overlap.csv, eval.json and heatmaps/.
inline OverlapReport cmd_eval(const EvalOptions& o, std::ostream& log = std::cerr) {
  require_dir(o.checkpoints, "checkpoint directory");
  require_file(o.checkpoints / "composer.ckpt", "composer checkpoint");
  require_file(o.data, "layout corpus");
  if (o.out.empty()) throw UsageError("--out is required");
  const ComposerModel model = ComposerModel::from_checkpoint(load_checkpoint(o.checkpoints / "composer.ckpt"));
  const LayoutDataset ds = parse_layout_dataset(o.data, model.classes());
  const auto prompts = o.prompts.empty() ? desk_eval_prompts() : o.prompts;
  const OverlapReport rep = run_eval(model, prompts, ds.scenes, o.config, o.out / "heatmaps");
  write_file(o.out / "overlap.csv", rep.csv());
  Json rows = Json::array();
  for (const auto& r : rep.rows) {
    rows.push_back({{"prompt", r.prompt},
                    {"model", r.model.percent()},
                    {"heuristic", r.heuristic.percent()},
                    {"random", r.random.percent()},
                    {"model_se", r.model.std_error()},
                    {"ground_truth_layouts", r.ground_truth},
                    {"relation_rate", r.relation_rate}});
    log << r.prompt << ": model " << r.model.percent() << "  heuristic " << r.heuristic.percent()
        << "  random " << r.random.percent() << "\n";
  }
  const Json c = o.config.to_json();
  write_file(o.out / "eval.json", Json{{"schema_version", kSchemaVersion},
                                       {"config", c},
                                       {"config_hash", config_hash(c)},
                                       {"composer", params_hash(model.params())},
                                       {"rows", rows}}
                                      .dump(2) +
                                      "\n");
  return rep;
}

}  // namespace scenesketch::cli
