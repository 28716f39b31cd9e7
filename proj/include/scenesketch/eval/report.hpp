#pragma once

// Per-prompt overlap table: trained model against the two baselines.

#include "scenesketch/eval/heatmap.hpp"
#include "scenesketch/model/composer_run.hpp"

namespace scenesketch {

struct EvalConfig {
  std::size_t layouts_per_prompt = 100;
  std::size_t points_per_box = 1000;
  double temperature = 1.0;
  std::uint64_t seed = 0;
  std::size_t heatmap_resolution = 64;
  OverlapMatch match = OverlapMatch::kSameClass;
  BaselineConfig baselines;

  Json to_json() const {
    return {{"layouts_per_prompt", layouts_per_prompt},
            {"points_per_box", points_per_box},
            {"temperature", temperature},
            {"seed", seed},
            {"heatmap_resolution", heatmap_resolution},
            {"match", match == OverlapMatch::kSameClass ? "same_class" : "any_box"},
            {"heuristic_size", {baselines.heuristic_size.lo, baselines.heuristic_size.hi}},
            {"random_size", {baselines.random_size.lo, baselines.random_size.hi}}};
  }
};

/// True when the scene has both prompt classes (first occurrence of each)
/// and their centers are ordered as the predicate requires.
inline bool relation_satisfied(const LayoutScene& s, const PromptTriple& t,
                               const ClassVocabulary& classes) {
  const auto tag = classes.tag_of(t.predicate);
  if (!tag) return false;
  std::optional<std::size_t> si, oi;
  for (std::size_t i = 0; i < s.objects.size(); ++i) {
    if (!si && s.objects[i].label == t.subject) si = i;
    else if (!oi && s.objects[i].label == t.object) oi = i;
  }
  return si && oi && relation_holds(*tag, s.objects[*si].box, s.objects[*oi].box);
}

struct OverlapRow {
  std::string prompt;
  OverlapEstimate model, heuristic, random;
  std::size_t ground_truth = 0;
  double relation_rate = 0.0;  // fraction of model layouts satisfying the predicate
};

struct OverlapReport {
  std::vector<OverlapRow> rows;
  EvalConfig config;

  std::string csv() const {
    std::string s = "prompt,model,heuristic,random\n";
    for (const auto& r : rows) {
      s += "\"" + r.prompt + "\"," + format_double(r.model.percent()) + "," +
           format_double(r.heuristic.percent()) + "," + format_double(r.random.percent()) + "\n";
    }
    return s;
  }
};

inline std::string prompt_slug(const std::string& prompt) {
  std::string s;
  for (const auto& w : normalize_words(prompt)) s += (s.empty() ? "" : "_") + w;
  return s;
}

/// Writes <slug>_<source>_<slot>.png/.csv for generated and ground-truth sets.
inline void write_prompt_heatmaps(const std::filesystem::path& dir, const std::string& prompt,
                                  const std::vector<LayoutScene>& generated,
                                  const std::vector<LayoutScene>& ground_truth,
                                  std::size_t resolution) {
  const std::string slug = prompt_slug(prompt);
  for (const auto& [source, set] :
       {std::pair{"generated", &generated}, std::pair{"ground_truth", &ground_truth}}) {
    for (const auto& [slot_name, slot] :
         {std::pair{"subject", ObjectSlot::kSubject}, std::pair{"object", ObjectSlot::kObject}}) {
      const Heatmap h = build_heatmap(*set, slot, resolution);
      const std::string base = slug + "_" + source + "_" + slot_name;
      write_heatmap_png(h, dir / (base + ".png"));
      write_file(dir / (base + ".csv"), heatmap_csv(h));
    }
  }
}

/// Seeds: prompt i draws model layouts from derive_seed(seed, 4i), baselines
/// from 4i+1 and 4i+2, overlap points from 4i+3.
inline OverlapReport run_eval(const ComposerModel& model, const std::vector<std::string>& prompts,
                              const std::vector<LayoutScene>& dataset, const EvalConfig& cfg,
                              const std::optional<std::filesystem::path>& heatmap_dir = std::nullopt) {
  if (prompts.empty()) throw EvalError("run_eval: no prompts");
  const ClassVocabulary& classes = model.classes();
  OverlapReport report;
  report.config = cfg;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    const PromptTriple t = parse_prompt(prompts[i], classes);
    const FilteredLayouts gt = semantic_filter(dataset, t, classes);
    if (gt.no_match()) throw EvalError("no ground-truth layouts match '" + prompts[i] + "'");
    const std::uint64_t base = 4 * i;
    const auto generated = sample_layout_candidates(model, prompts[i], cfg.layouts_per_prompt,
                                                    derive_seed(cfg.seed, base), cfg.temperature);
    const auto heuristic = heuristic_baseline(t, cfg.layouts_per_prompt, derive_seed(cfg.seed, base + 1),
                                              classes, cfg.baselines);
    const auto random = random_baseline(t, cfg.layouts_per_prompt, derive_seed(cfg.seed, base + 2),
                                        classes, cfg.baselines);
    const std::uint64_t pts = derive_seed(cfg.seed, base + 3);
    OverlapRow row;
    row.prompt = prompts[i];
    row.ground_truth = gt.scenes.size();
    // Same point seed for all three sources: differences come from the boxes.
    row.model = mc_overlap(generated, gt.scenes, cfg.points_per_box, pts, cfg.match);
    row.heuristic = mc_overlap(heuristic, gt.scenes, cfg.points_per_box, pts, cfg.match);
    row.random = mc_overlap(random, gt.scenes, cfg.points_per_box, pts, cfg.match);
    std::size_t ok = 0;
    for (const auto& s : generated) ok += relation_satisfied(s, t, classes) ? 1 : 0;
    row.relation_rate = static_cast<double>(ok) / static_cast<double>(generated.size());
    if (heatmap_dir)
      write_prompt_heatmaps(*heatmap_dir, prompts[i], generated, gt.scenes, cfg.heatmap_resolution);
    report.rows.push_back(std::move(row));
  }
  return report;
}

/// The four prompts of the desk corpus.
inline std::vector<std::string> desk_eval_prompts() {
  return {"a person riding a horse", "a dog on a chair", "a horse under a tree",
          "a boat under a bridge"};
}

}  // namespace scenesketch
