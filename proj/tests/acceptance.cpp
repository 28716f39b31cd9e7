// Acceptance run: trains the desk pipeline and checks every primary
// criterion at its stated tolerance. One PASS/FAIL line per criterion;
// exit status 1 if any fails. Artifacts land under --workdir.

#include <chrono>
#include <cstdio>
#include <iostream>

#include "CLI11.hpp"
#include "scenesketch/cli/commands.hpp"
#include "scenesketch/core/gradcheck.hpp"
#include "svg_check.hpp"

using namespace scenesketch;
using namespace scenesketch::cli;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  std::string name;
  bool pass = false;
  std::string detail;
};

std::vector<Outcome> g_results;
Json g_summary = Json::object();

void report(const std::string& name, bool pass, const std::string& detail) {
  g_results.push_back({name, pass, detail});
  std::cout << (pass ? "PASS " : "FAIL ") << name << ": " << detail << std::endl;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

// --- gradients ---------------------------------------------------------------

void check_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  const ClassVocabulary classes = ClassVocabulary::desk();
  const auto corpus = generate_synthetic_layout_corpus(desk_layout_corpus_spec(6), classes, 11);
  std::vector<std::string> texts;
  for (const auto& s : corpus) texts.push_back(s.description);
  const WordVocabulary words = WordVocabulary::build(texts);
  const auto seqs = encode_corpus(corpus, words);
  std::vector<const LayoutSequence*> batch{&seqs[0], &seqs[7], &seqs[13]};
  ComposerModel composer(ComposerConfig::tiny(), words, classes, 5);

  const GradCheckOptions opt{.max_elements_per_param = 24, .seed = 3};
  Json worst = Json::object();
  bool ok = true;
  double max_rel = 0;
  auto record = [&](const std::string& name, const GradCheckReport& r) {
    worst[name] = r.max_relative_error;
    max_rel = std::max(max_rel, r.max_relative_error);
    ok = ok && r.passed;
  };
  using Part = std::function<Var(const ComposerLossParts&)>;
  const std::vector<std::pair<std::string, Part>> parts{
      {"L_xy", [](const ComposerLossParts& p) { return p.xy; }},
      {"L_wh", [](const ComposerLossParts& p) { return p.wh; }},
      {"L_p", [](const ComposerLossParts& p) { return p.p; }},
      {"L_class", [](const ComposerLossParts& p) { return p.cls; }},
      {"L_SC", [&](const ComposerLossParts& p) { return total_loss(p, {1.0, 1.0, 0.5, 0.25}); }}};
  for (const auto& [name, pick] : parts)
    record(name, grad_check([&](Graph& g) { return pick(composer_losses(g, composer, batch)); },
                            composer.params(), opt));

  StrokeFamilySpec fs;
  fs.count = 3;
  const auto strokes = generate_synthetic_stroke_corpus({fs}, 4);
  SketcherModel sketcher(SketcherConfig::tiny(), "tree", 3);
  std::vector<const std::vector<Stroke5>*> sb;
  std::vector<double> ratios;
  for (const auto& rec : strokes) {
    sb.push_back(&rec.strokes);
    ratios.push_back(rec.aspect_ratio);
  }
  record("L_R", grad_check([&](Graph& g) { return reconstruction_loss(sketcher.forward(g, sb, ratios), sb).total; },
                           sketcher.params(), GradCheckOptions{.max_elements_per_param = 40, .seed = 1}));
  const double secs = seconds_since(t0);
  g_summary["gradients"] = {{"max_relative_error", worst}, {"seconds", secs}};
  report("gradient suite", ok && secs < 60,
         "max relative error " + fmt(max_rel, 8) + " (tol 1e-4) over L_xy, L_wh, L_p, L_class, L_SC, L_R in " +
             fmt(secs, 1) + " s (limit 60)");
}

// --- GMM normalization -----------------------------------------------------------

void check_gmm() {
  double worst = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    const std::size_t m = 5;
    std::vector<double> raw(6 * m);
    for (std::size_t i = 0; i < m; ++i) {
      raw[i] = rng.uniform(-1, 1);
      raw[m + i] = rng.uniform(-2, 2);
      raw[2 * m + i] = rng.uniform(-2, 2);
      raw[3 * m + i] = rng.uniform(-1.2, 0.3);
      raw[4 * m + i] = rng.uniform(-1.2, 0.3);
      raw[5 * m + i] = rng.uniform(-1.5, 1.5);
    }
    const MdnParams p = mdn_from_raw(raw, m);
    double lx = 1e9, hx = -1e9, ly = 1e9, hy = -1e9;
    for (std::size_t i = 0; i < m; ++i) {
      lx = std::min(lx, p.mu_x[i] - 6 * p.sigma_x[i]);
      hx = std::max(hx, p.mu_x[i] + 6 * p.sigma_x[i]);
      ly = std::min(ly, p.mu_y[i] - 6 * p.sigma_y[i]);
      hy = std::max(hy, p.mu_y[i] + 6 * p.sigma_y[i]);
    }
    const int n = 800;
    const double dx = (hx - lx) / n, dy = (hy - ly) / n;
    double total = 0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) total += mixture_density(p, lx + (i + 0.5) * dx, ly + (j + 0.5) * dy);
    worst = std::max(worst, std::abs(total * dx * dy - 1.0));
  }
  g_summary["gmm_normalization_max_deviation"] = worst;
  report("GMM normalization", worst <= 0.02,
         "5 random M=5 mixtures, max |integral - 1| = " + fmt(worst, 6) + " (tol 0.02)");
}

// --- overlap oracle ----------------------------------------------------------------

void check_overlap_oracle() {
  const ClassVocabulary classes = ClassVocabulary::desk();
  auto scene = [&](const Box& b) {
    LayoutScene s;
    s.objects = {SceneObject{*classes.id_of("tree"), "tree", b}};
    return s;
  };
  // Generated box, ground-truth box.
  const std::vector<std::pair<Box, Box>> pairs{
      {{0.5, 0.5, 0.2, 0.2}, {0.5, 0.5, 0.6, 0.6}},      // contained: 1
      {{0.2, 0.2, 0.1, 0.1}, {0.7, 0.7, 0.2, 0.2}},      // disjoint: 0
      {{0.5, 0.5, 0.4, 0.4}, {0.4, 0.4, 0.4, 0.4}},      // corner shift: 0.5625
      {{0.5, 0.5, 0.4, 0.4}, {0.35, 0.5, 0.3, 0.8}},     // half in x: 0.5
      {{0.5, 0.5, 0.6, 0.2}, {0.5, 0.5, 0.2, 0.6}},      // cross: 1/3
      {{0.5, 0.5, 0.4, 0.4}, {0.5, 0.5, 0.2, 0.2}},      // GT inside: 0.25
      {{0.3, 0.6, 0.2, 0.4}, {0.35, 0.45, 0.3, 0.3}},    // generic
      {{0.6, 0.3, 0.5, 0.3}, {0.8, 0.35, 0.3, 0.5}},     // generic
      {{0.5, 0.5, 1.0, 1.0}, {0.25, 0.75, 0.5, 0.5}},    // quarter canvas: 0.25
      {{0.45, 0.55, 0.3, 0.3}, {0.6, 0.4, 0.3, 0.3}}};   // 0.25
  const std::size_t n = 1000;
  bool ok = true;
  double worst_sigmas = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& [g, t] = pairs[i];
    const double ix = std::max(0.0, std::min(g.x + g.w / 2, t.x + t.w / 2) - std::max(g.x - g.w / 2, t.x - t.w / 2));
    const double iy = std::max(0.0, std::min(g.y + g.h / 2, t.y + t.h / 2) - std::max(g.y - g.h / 2, t.y - t.h / 2));
    const double exact = ix * iy / (g.w * g.h);
    const double est = mc_overlap({scene(g)}, {scene(t)}, n, 1000 + i).percent() / 100.0;
    const double sigma = std::sqrt(exact * (1 - exact) / static_cast<double>(n));
    if (sigma == 0) {
      ok = ok && est == exact;
    } else {
      const double z = std::abs(est - exact) / sigma;
      worst_sigmas = std::max(worst_sigmas, z);
      ok = ok && z <= 3;
    }
  }
  g_summary["overlap_oracle_worst_sigmas"] = worst_sigmas;
  report("overlap-metric oracle", ok,
         "10 box pairs, 1000 points, worst deviation " + fmt(worst_sigmas, 2) + " sigma (limit 3)");
}

// --- desk pipeline -----------------------------------------------------------------

struct DeskRun {
  fs::path pipeline;
  fs::path layouts;
  double composer_seconds = 0;
  double sketcher_seconds = 0;
};

DeskRun train_desk(const fs::path& work) {
  DeskRun d;
  d.pipeline = work / "pipeline";
  d.layouts = work / "layouts.jsonl";
  std::ostringstream log;
  GenCorpusOptions g;
  g.out = d.layouts;
  g.per_relation = 500;  // 4 relations, 2000 layouts
  g.seed = 1;
  cmd_gen_corpus(g, log);
  g.kind = "strokes";
  g.out = work / "trees.jsonl";
  g.family = "tree";
  g.count = 500;
  g.seed = 2;
  cmd_gen_corpus(g, log);

  TrainOptions tc;
  tc.data = d.layouts;
  tc.out = d.pipeline;
  tc.preset = "desk";
  tc.seed = 7;
  auto t0 = std::chrono::steady_clock::now();
  cmd_train_composer(tc, log);
  d.composer_seconds = seconds_since(t0);
  std::cout << "  desk composer trained in " << fmt(d.composer_seconds, 1) << " s" << std::endl;

  TrainOptions ts = tc;
  ts.data = work / "trees.jsonl";
  ts.class_label = "tree";
  ts.fallback = "tree";  // every other desk class is drawn by the tree sketcher
  t0 = std::chrono::steady_clock::now();
  cmd_train_sketcher(ts, log);
  d.sketcher_seconds = seconds_since(t0);
  std::cout << "  desk tree sketcher trained in " << fmt(d.sketcher_seconds, 1) << " s" << std::endl;
  write_file(work / "train.log", log.str());
  return d;
}

void check_table_and_relations(const DeskRun& d, const fs::path& work) {
  EvalOptions eo;
  eo.checkpoints = d.pipeline;
  eo.data = d.layouts;
  eo.out = work / "eval";
  eo.config.layouts_per_prompt = 100;
  eo.config.points_per_box = 1000;
  eo.config.seed = 3;
  std::ostringstream log;
  const OverlapReport rep = cmd_eval(eo, log);

  bool order = d.composer_seconds <= 600, relations = true;
  std::string table, rel;
  Json rows = Json::array();
  for (const auto& r : rep.rows) {
    const double m = r.model.percent(), h = r.heuristic.percent(), x = r.random.percent();
    order = order && m > h && h > x && m - x >= 20;
    relations = relations && r.relation_rate >= 0.8;
    table += "\n    " + r.prompt + ": model " + fmt(m, 1) + " > heuristic " + fmt(h, 1) + " > random " +
             fmt(x, 1) + " (gap " + fmt(m - x, 1) + ")";
    rel += "\n    " + r.prompt + ": " + fmt(100 * r.relation_rate, 0) + "%";
    rows.push_back({{"prompt", r.prompt}, {"model", m}, {"heuristic", h}, {"random", x},
                    {"relation_rate", r.relation_rate}});
  }
  g_summary["table"] = {{"rows", rows}, {"composer_seconds", d.composer_seconds}};
  report("overlap ordering", order,
         "desk composer trained in " + fmt(d.composer_seconds, 1) +
             " s (limit 600); need model > heuristic > random and gap >= 20 on every prompt" + table);
  report("relational correctness", relations, "center ordering in 100 layouts per prompt (need >= 80%)" + rel);
}

// Extent ratio straight from the offsets: every pen-down move contributes
// both of its endpoints.
double ratio_from_offsets(const std::vector<Stroke5>& strokes, bool& degenerate) {
  double x = 0, y = 0, lx = 1e300, hx = -1e300, ly = 1e300, hy = -1e300;
  for (const auto& s : strokes) {
    if (s.pen == PenState::kEnd) break;
    const double nx = x + s.dx, ny = y + s.dy;
    if (s.pen == PenState::kDown) {
      for (const auto& [px, py] : {std::pair{x, y}, std::pair{nx, ny}}) {
        lx = std::min(lx, px);
        hx = std::max(hx, px);
        ly = std::min(ly, py);
        hy = std::max(hy, py);
      }
    }
    x = nx;
    y = ny;
  }
  degenerate = !(hx > lx) || !(hy > ly);
  return degenerate ? 0.0 : (hy - ly) / (hx - lx);
}

void check_aspect_ratio(const DeskRun& d) {
  const auto model = SketcherModel::from_checkpoint(load_checkpoint(d.pipeline / "sketcher_tree.ckpt"));
  const std::vector<double> rs{0.5, 1.0, 1.5, 2.0};
  std::vector<double> means;
  std::size_t degenerate = 0, mismatched = 0;
  for (std::size_t i = 0; i < rs.size(); ++i) {
    double sum = 0;
    std::size_t used = 0;
    for (std::size_t k = 0; k < 50; ++k) {
      const auto rec = sample_sketch(model, rs[i], model.config().temperature, derive_seed(99, 50 * i + k));
      bool deg = false;
      const double r = ratio_from_offsets(rec.strokes, deg);
      if (deg) {
        ++degenerate;
        continue;
      }
      if (std::abs(r - rec.aspect_ratio) > 1e-9 * std::max(1.0, r)) ++mismatched;
      sum += r;
      ++used;
    }
    means.push_back(used ? sum / static_cast<double>(used) : 0.0);
  }
  const double mr = (0.5 + 1.0 + 1.5 + 2.0) / 4;
  double ma = 0;
  for (double m : means) ma += m / 4;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    sxy += (rs[i] - mr) * (means[i] - ma);
    sxx += (rs[i] - mr) * (rs[i] - mr);
    syy += (means[i] - ma) * (means[i] - ma);
  }
  const double corr = syy > 0 ? sxy / std::sqrt(sxx * syy) : 0.0;
  const bool ok = d.sketcher_seconds <= 300 && corr >= 0.8 && means[3] > means[1] && mismatched == 0;
  g_summary["aspect_ratio"] = {{"requested", rs},          {"mean_achieved", means},
                               {"correlation", corr},      {"degenerate", degenerate},
                               {"record_mismatches", mismatched}, {"sketcher_seconds", d.sketcher_seconds}};
  report("aspect-ratio conditioning", ok,
         "sketcher trained in " + fmt(d.sketcher_seconds, 1) + " s (limit 300); mean achieved ratio " +
             fmt(means[0], 3) + " / " + fmt(means[1], 3) + " / " + fmt(means[2], 3) + " / " + fmt(means[3], 3) +
             " at r = 0.5 / 1 / 1.5 / 2, correlation " + fmt(corr, 4) + " (need >= 0.8), " +
             std::to_string(degenerate) + " degenerate of 200, " + std::to_string(mismatched) +
             " record/offset ratio mismatches");
}

void check_autocomplete(const DeskRun& d) {
  const auto model = ComposerModel::from_checkpoint(load_checkpoint(d.pipeline / "composer.ckpt"));
  const ClassVocabulary& classes = model.classes();
  // The user draws the horse low on the canvas; the tree should come above it.
  const SceneObject user{*classes.id_of("horse"), "horse", Box{0.5, 0.66, 0.35, 0.24}};
  std::size_t verbatim = 0, consistent = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const LayoutScene s = autocomplete_layout(model, "a horse under a tree", {user}, 1.0, seed);
    if (!s.objects.empty() && s.objects[0] == user && s.user_prefix == 1) ++verbatim;
    if (s.objects.size() >= 2 && s.objects[1].label == "tree" &&
        relation_holds(RelationTag::kBelow, s.objects[0].box, s.objects[1].box))
      ++consistent;
  }
  g_summary["autocomplete"] = {{"verbatim", verbatim}, {"consistent", consistent}};
  report("autocompletion contract", verbatim == 100 && consistent >= 80,
         "user box kept verbatim in " + std::to_string(verbatim) + "/100; completed tree above the user's horse in " +
             std::to_string(consistent) + "/100 (need >= 80)");
}

void check_end_to_end(const DeskRun& d, const fs::path& work) {
  std::size_t scenes = 0, boxes = 0, bad = 0;
  double worst = 0;
  std::string problem;
  const auto classes = ClassVocabulary::desk();
  std::size_t pi = 0;
  for (const auto& prompt : desk_eval_prompts()) {
    SampleOptions so;
    so.checkpoints = d.pipeline;
    so.description = prompt;
    so.out = work / "samples" / prompt_slug(prompt);
    so.k = 5;
    so.seed = 40 + pi++;
    std::ostringstream log;
    const auto layouts = cmd_sample(so, log);
    for (std::size_t i = 0; i < layouts.size(); ++i) {
      ++scenes;
      const std::string stem = "scene_" + std::to_string(i);
      const LayoutScene layout =
          scene_from_json(Json::parse(read_file(so.out / (stem + "_layout.json"))), classes);
      svgcheck::ParsedSvg svg;
      try {
        svg = svgcheck::parse_svg(read_file(so.out / (stem + ".svg")));
      } catch (const std::exception& e) {
        ++bad;
        problem = stem + ": " + e.what();
        continue;
      }
      const auto bounds = svgcheck::layer_bounds(svg);
      if (bounds.size() != layout.objects.size()) {
        ++bad;
        problem = prompt + " " + stem + ": " + std::to_string(bounds.size()) + " sketches for " +
                  std::to_string(layout.objects.size()) + " boxes";
      }
      for (const auto& [layer, b] : bounds) {
        if (layer < 0 || static_cast<std::size_t>(layer) >= layout.objects.size()) {
          ++bad;
          continue;
        }
        ++boxes;
        const Box& box = layout.objects[layer].box;
        for (double e : {std::abs(b.min_x - box.left()), std::abs(b.max_x - box.right()),
                         std::abs(b.min_y - box.top()), std::abs(b.max_y - box.bottom())})
          worst = std::max(worst, e);
      }
    }
  }
  g_summary["end_to_end"] = {{"scenes", scenes}, {"boxes", boxes}, {"worst_edge_error", worst}};
  report("end-to-end", bad == 0 && worst <= 1e-6 && boxes > 0,
         std::to_string(scenes) + " SVGs parsed, " + std::to_string(boxes) +
             " placed sketches, worst edge error " + fmt(worst, 9) + " (tol 1e-6)" +
             (problem.empty() ? "" : "; " + problem));
}

// --- determinism ---------------------------------------------------------------------

std::map<std::string, std::string> snapshot_tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = read_file(e.path());
  return out;
}

void run_every_command(const fs::path& dir) {
  std::ostringstream log;
  GenCorpusOptions g;
  g.out = dir / "layouts.jsonl";
  g.per_relation = 25;
  g.seed = 5;
  cmd_gen_corpus(g, log);
  g.kind = "strokes";
  g.out = dir / "trees.jsonl";
  g.count = 40;
  cmd_gen_corpus(g, log);
  TrainOptions tc;
  tc.data = dir / "layouts.jsonl";
  tc.out = dir / "ck";
  tc.preset = "desk";
  tc.overrides = {"steps=40"};
  tc.seed = 5;
  cmd_train_composer(tc, log);
  TrainOptions ts = tc;
  ts.data = dir / "trees.jsonl";
  ts.class_label = "tree";
  ts.fallback = "tree";
  ts.overrides = {"steps=40"};
  cmd_train_sketcher(ts, log);
  SampleOptions so;
  so.checkpoints = dir / "ck";
  so.description = "a dog on a chair";
  so.out = dir / "sample";
  so.k = 3;
  so.seed = 5;
  cmd_sample(so, log);
  RenderOptions ro;
  ro.checkpoints = dir / "ck";
  ro.layout = dir / "sample" / "scene_2_layout.json";
  ro.out = dir / "render.svg";
  cmd_render(ro, log);
  EvalOptions eo;
  eo.checkpoints = dir / "ck";
  eo.data = dir / "layouts.jsonl";
  eo.out = dir / "eval";
  eo.config.layouts_per_prompt = 10;
  eo.config.points_per_box = 100;
  eo.config.heatmap_resolution = 16;
  cmd_eval(eo, log);
}

void check_determinism(const fs::path& work) {
  const fs::path a = work / "determinism" / "a", b = work / "determinism" / "b";
  fs::remove_all(work / "determinism");
  run_every_command(a);
  run_every_command(b);
  const auto ta = snapshot_tree(a), tb = snapshot_tree(b);
  std::size_t same = 0;
  std::string diff;
  for (const auto& [name, bytes] : ta) {
    auto it = tb.find(name);
    if (it != tb.end() && it->second == bytes) ++same;
    else if (diff.empty()) diff = name;
  }
  const bool ok = ta.size() == tb.size() && same == ta.size() && !ta.empty();
  g_summary["determinism"] = {{"files", ta.size()}, {"identical", same}};
  report("determinism", ok,
         std::to_string(same) + "/" + std::to_string(ta.size()) +
             " artifacts byte-identical across two runs of gen-corpus, train-composer, train-sketcher, "
             "sample, render, eval" +
             (diff.empty() ? "" : "; first difference: " + diff));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  fs::path work = "acceptance_artifacts";
  app.add_option("--workdir", work, "Where trained models and outputs are written");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(work);

  auto guarded = [](const std::string& name, auto&& f) {
    try {
      f();
    } catch (const std::exception& e) {
      report(name, false, std::string("threw: ") + e.what());
    }
  };
  guarded("gradient suite", check_gradients);
  guarded("GMM normalization", check_gmm);
  guarded("overlap-metric oracle", check_overlap_oracle);
  guarded("determinism", [&] { check_determinism(work); });

  std::optional<DeskRun> desk;
  try {
    desk = train_desk(work);
  } catch (const std::exception& e) {
    for (const char* n : {"overlap ordering", "relational correctness", "aspect-ratio conditioning",
                          "autocompletion contract", "end-to-end"})
      report(n, false, std::string("desk training threw: ") + e.what());
  }
  if (desk) {
    guarded("overlap ordering", [&] { check_table_and_relations(*desk, work); });
    guarded("aspect-ratio conditioning", [&] { check_aspect_ratio(*desk); });
    guarded("autocompletion contract", [&] { check_autocomplete(*desk); });
    guarded("end-to-end", [&] { check_end_to_end(*desk, work); });
  }

  std::size_t passed = 0;
  Json list = Json::array();
  for (const auto& r : g_results) {
    passed += r.pass;
    list.push_back({{"criterion", r.name}, {"pass", r.pass}, {"detail", r.detail}});
  }
  g_summary["criteria"] = list;
  write_file(work / "acceptance.json", g_summary.dump(2) + "\n");
  std::cout << passed << "/" << g_results.size() << " criteria passed" << std::endl;
  return passed == g_results.size() ? 0 : 1;
}
