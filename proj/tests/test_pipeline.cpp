#include <gtest/gtest.h>

#include <filesystem>
#include <thread>

#include "scenesketch/cli/commands.hpp"
#include "scenesketch/eval/report.hpp"
#include "scenesketch/service/http.hpp"
#include "svg_check.hpp"

using namespace scenesketch;
namespace fs = std::filesystem;

namespace {

LayoutScene one_box_scene(const std::string& label, const Box& b) {
  const auto classes = ClassVocabulary::desk();
  LayoutScene s;
  s.description = "test";
  s.objects.push_back(SceneObject{*classes.id_of(label), label, b});
  return s;
}

SketchRecord square_sketch() {
  return make_sketch_record({{{0, 0}, {1, 0}, {1, 1}, {0, 1}, {0, 0}}}, "box");
}

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("scenesketch_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

/// Untrained tiny composer plus one tiny fallback sketcher: enough for every
/// contract that does not depend on learned geometry.
std::shared_ptr<const Pipeline> tiny_pipeline() {
  static std::shared_ptr<const Pipeline> p = [] {
    const auto classes = ClassVocabulary::desk();
    const auto corpus = generate_synthetic_layout_corpus(desk_layout_corpus_spec(2), classes, 1);
    std::vector<std::string> texts;
    for (const auto& s : corpus) texts.push_back(s.description);
    auto pl = std::make_shared<Pipeline>();
    pl->composer = std::make_shared<const ComposerModel>(ComposerConfig::tiny(), WordVocabulary::build(texts),
                                                        classes, 3);
    pl->sketchers.add(std::make_shared<const SketcherModel>(SketcherConfig::tiny(), "tree", 4));
    pl->sketchers.set_fallback("tree");
    pl->composer_hash = params_hash(pl->composer->params());
    return pl;
  }();
  return p;
}

}  // namespace

// ----------------------------------------------------------------------------
// Assembly

TEST(Assemble, SquareLandsExactlyOnItsBox) {
  const Box b{0.5, 0.5, 0.5, 0.5};
  const PlacedSketch p = fit_sketch_to_box(square_sketch(), b);
  const Extent e = placed_extent(p);
  EXPECT_NEAR(e.min_x, 0.25, 1e-12);
  EXPECT_NEAR(e.max_x, 0.75, 1e-12);
  EXPECT_NEAR(e.min_y, 0.25, 1e-12);
  EXPECT_NEAR(e.max_y, 0.75, 1e-12);
  EXPECT_NEAR(p.transform.scale_x, p.transform.scale_y, 1e-12);  // ratios agree: isotropic
}

TEST(Assemble, AnisotropicFitMatchesEveryBoxEdge) {
  Rng rng(8);
  const auto sk = make_sketch_record({{{0, 0}, {0.3, 1.0}, {1.0, 0.2}}, {{0.5, 0.5}, {0.6, 0.9}}}, "tree");
  for (int i = 0; i < 100; ++i) {
    Box b;
    b.w = rng.uniform(0.01, 1.0);
    b.h = rng.uniform(0.01, 1.0);
    b.x = rng.uniform(b.w / 2, 1 - b.w / 2);
    b.y = rng.uniform(b.h / 2, 1 - b.h / 2);
    const PlacedSketch p = fit_sketch_to_box(sk, b);
    const Extent e = placed_extent(p);
    EXPECT_NEAR(e.min_x, b.left(), 1e-12);
    EXPECT_NEAR(e.max_x, b.right(), 1e-12);
    EXPECT_NEAR(e.min_y, b.top(), 1e-12);
    EXPECT_NEAR(e.max_y, b.bottom(), 1e-12);
    // Strokes keep their count and pen states; only the geometry moves.
    ASSERT_EQ(p.polylines().size(), decode_strokes(sk.strokes).size());
    for (std::size_t k = 0; k < p.polylines().size(); ++k)
      EXPECT_EQ(p.polylines()[k].size(), decode_strokes(sk.strokes)[k].size());
  }
}

TEST(Assemble, FittingTwiceChangesNothing) {
  const Box b{0.4, 0.6, 0.3, 0.5};
  const PlacedSketch once = fit_sketch_to_box(square_sketch(), b);
  // Re-encode the placed geometry and fit again into the same box.
  const PlacedSketch twice = fit_sketch_to_box(make_sketch_record(once.polylines(), "box"), b);
  const auto a = once.polylines(), c = twice.polylines();
  ASSERT_EQ(a.size(), c.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) {
      EXPECT_NEAR(a[i][j].x, c[i][j].x, 1e-12);
      EXPECT_NEAR(a[i][j].y, c[i][j].y, 1e-12);
    }
}

TEST(Assemble, RejectsDegenerateSketchesAndOffCanvasBoxes) {
  SketchRecord flat;
  flat.strokes = {{0.5, 0.0, PenState::kDown}, {0.5, 0.0, PenState::kDown}, {0, 0, PenState::kEnd}};
  EXPECT_THROW(fit_sketch_to_box(flat, Box{0.5, 0.5, 0.2, 0.2}), AssemblyError);
  EXPECT_THROW(fit_sketch_to_box(square_sketch(), Box{0.95, 0.5, 0.2, 0.2}), AssemblyError);
}

TEST(Assemble, MissingSketcherFailsBeforeSampling) {
  SketcherRegistry reg;
  reg.add(std::make_shared<const SketcherModel>(SketcherConfig::tiny(), "tree", 1));
  LayoutScene s = one_box_scene("tree", Box{0.5, 0.5, 0.3, 0.3});
  s.objects.push_back(SceneObject{1, "horse", Box{0.5, 0.5, 0.3, 0.3}});
  EXPECT_THROW(assemble_scene(s, reg, 0.25, 1), RegistryError);
}

TEST(Assemble, SceneIsAFunctionOfItsSeeds) {
  const auto p = tiny_pipeline();
  LayoutScene s = one_box_scene("tree", Box{0.3, 0.6, 0.2, 0.5});
  s.objects.push_back(SceneObject{3, "horse", Box{0.7, 0.5, 0.4, 0.3}});
  const SceneSketch a = assemble_scene(s, p->sketchers, 0.25, 5);
  const SceneSketch b = assemble_scene(s, p->sketchers, 0.25, 5);
  EXPECT_EQ(render_svg(a), render_svg(b));
  ASSERT_EQ(a.placed.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(a.placed[i].layer, i);
    const Extent e = placed_extent(a.placed[i]);
    EXPECT_NEAR(e.min_x, s.objects[i].box.left(), 1e-9);
    EXPECT_NEAR(e.max_y, s.objects[i].box.bottom(), 1e-9);
    EXPECT_DOUBLE_EQ(a.placed[i].requested_ratio, s.objects[i].box.h / s.objects[i].box.w);
  }
  EXPECT_NE(render_svg(a), render_svg(assemble_scene(s, p->sketchers, 0.25, 6)));
}

// ----------------------------------------------------------------------------
// SVG

TEST(Svg, EmptySceneHasNoPaths) {
  SceneSketch empty;
  const auto parsed = svgcheck::parse_svg(render_svg(empty));
  EXPECT_TRUE(parsed.paths.empty());
  EXPECT_EQ(parsed.width, 512);
}

TEST(Svg, SquareIsOneClosedPath) {
  SceneSketch sc;
  sc.placed.push_back(fit_sketch_to_box(square_sketch(), Box{0.5, 0.5, 0.5, 0.5}));
  const std::string svg = render_svg(sc);
  const auto parsed = svgcheck::parse_svg(svg);
  ASSERT_EQ(parsed.paths.size(), 1u);
  EXPECT_TRUE(parsed.paths[0].closed);
  EXPECT_EQ(parsed.paths[0].points.size(), 4u);
  EXPECT_NE(svg.find("M128.0000 128.0000 L384.0000 128.0000 L384.0000 384.0000 L128.0000 384.0000 Z"),
            std::string::npos)
      << svg;
}

TEST(Svg, ProvenanceCommentSurvivesHostileText) {
  SceneSketch sc;
  sc.description = "a dog -- on a chair -->";
  sc.placed.push_back(fit_sketch_to_box(square_sketch(), Box{0.5, 0.5, 0.5, 0.5}));
  const auto parsed = svgcheck::parse_svg(render_svg(sc));
  EXPECT_EQ(parsed.paths.size(), 1u);
  EXPECT_EQ(parsed.comment.find("--"), std::string::npos);
}

TEST(Svg, ByteIdenticalAcrossRenders) {
  const auto p = tiny_pipeline();
  const auto layouts = sample_layout_candidates(*p->composer, "a horse under a tree", 3, 12);
  for (const auto& l : layouts) {
    const auto a = render_svg(assemble_scene(l, p->sketchers, 0.25, l.seed));
    const auto b = render_svg(assemble_scene(l, p->sketchers, 0.25, l.seed));
    EXPECT_EQ(a, b);
    const auto parsed = svgcheck::parse_svg(a);
    for (const auto& [layer, bb] : svgcheck::layer_bounds(parsed)) {
      ASSERT_LT(static_cast<std::size_t>(layer), l.objects.size());
      const Box& box = l.objects[layer].box;
      EXPECT_NEAR(bb.min_x, box.left(), 1e-6);
      EXPECT_NEAR(bb.max_x, box.right(), 1e-6);
      EXPECT_NEAR(bb.min_y, box.top(), 1e-6);
      EXPECT_NEAR(bb.max_y, box.bottom(), 1e-6);
    }
  }
}

// ----------------------------------------------------------------------------
// Overlap estimate

TEST(McOverlap, ExactCases) {
  const auto inside = one_box_scene("tree", Box{0.5, 0.5, 0.2, 0.2});
  const auto cover = one_box_scene("tree", Box{0.5, 0.5, 0.6, 0.6});
  const auto apart = one_box_scene("tree", Box{0.1, 0.1, 0.1, 0.1});
  EXPECT_DOUBLE_EQ(mc_overlap({inside}, {cover}, 500, 1).percent(), 100.0);
  EXPECT_DOUBLE_EQ(mc_overlap({apart}, {cover}, 500, 1).percent(), 0.0);
  // Same geometry, other class: no credit unless any box counts.
  const auto horse = one_box_scene("horse", Box{0.5, 0.5, 0.6, 0.6});
  EXPECT_DOUBLE_EQ(mc_overlap({inside}, {horse}, 500, 1).percent(), 0.0);
  EXPECT_DOUBLE_EQ(mc_overlap({inside}, {horse}, 500, 1, OverlapMatch::kAnyBox).percent(), 100.0);
  EXPECT_THROW(mc_overlap({}, {cover}, 10, 1), EvalError);
  EXPECT_THROW(mc_overlap({inside}, {}, 10, 1), EvalError);
}

TEST(McOverlap, HalfCoverageWithinTwoSigma) {
  const auto gen = one_box_scene("tree", Box{0.5, 0.5, 0.4, 0.4});
  const auto half = one_box_scene("tree", Box{0.35, 0.5, 0.3, 0.8});  // covers x in [0.2, 0.5]
  const auto est = mc_overlap({gen}, {half}, 20000, 3);
  EXPECT_NEAR(est.percent(), 50.0, 2 * 100 * std::sqrt(0.25 / 20000));
  EXPECT_NEAR(est.std_error(), 100 * std::sqrt(0.25 / 20000), 0.01);
}

TEST(McOverlap, ErrorShrinksWithMorePoints) {
  const auto gen = one_box_scene("tree", Box{0.5, 0.5, 0.4, 0.4});
  const auto gt = one_box_scene("tree", Box{0.4, 0.4, 0.4, 0.4});  // exact share 0.75 * 0.75
  double prev = 1e9;
  for (std::size_t n : {100u, 1000u, 10000u, 100000u}) {
    double err = 0;
    for (std::uint64_t s = 0; s < 8; ++s) err += std::abs(mc_overlap({gen}, {gt}, n, s).percent() - 56.25);
    EXPECT_LT(err / 8, prev);
    prev = err / 8;
  }
  EXPECT_LT(prev, 0.5);
}

// ----------------------------------------------------------------------------
// Semantic filter and baselines

TEST(SemanticFilter, MatchesByRelationGroup) {
  const auto classes = ClassVocabulary::desk();
  const auto corpus = generate_synthetic_layout_corpus(desk_layout_corpus_spec(20), classes, 2);
  const auto t = parse_prompt("a person riding a horse", classes);
  EXPECT_EQ(t.subject, "person");
  EXPECT_EQ(t.predicate, "riding");
  EXPECT_EQ(t.object, "horse");
  const auto f = semantic_filter(corpus, t, classes);
  EXPECT_EQ(f.scenes.size(), 20u);
  // "on" and "on top of" fall in the same group as "riding".
  const auto on = semantic_filter(corpus, parse_prompt("a person on top of a horse", classes), classes);
  EXPECT_EQ(on.scenes.size(), f.scenes.size());
  // Filtering a filtered set changes nothing.
  EXPECT_EQ(semantic_filter(f.scenes, t, classes).scenes.size(), f.scenes.size());
  PromptTriple unknown = t;
  unknown.subject = "giraffe";
  EXPECT_TRUE(semantic_filter(corpus, unknown, classes).no_match());
  EXPECT_THROW(parse_prompt("a dog and a chair", classes), EvalError);
}

TEST(Baselines, HeuristicRespectsTheRelation) {
  const auto classes = ClassVocabulary::desk();
  const auto t = parse_prompt("a horse under a tree", classes);
  const auto h = heuristic_baseline(t, 500, 4, classes);
  ASSERT_EQ(h.size(), 500u);
  for (const auto& s : h) {
    EXPECT_TRUE(relation_satisfied(s, t, classes));
    EXPECT_GT(s.objects[0].box.y, 0.5);
    EXPECT_LT(s.objects[1].box.y, 0.5);
    for (const auto& o : s.objects) {
      EXPECT_TRUE(o.box.within_canvas());
      EXPECT_GE(o.box.w, 0.2);
      EXPECT_LE(o.box.w, 0.6);
    }
  }
  EXPECT_EQ(scene_to_json(h[7]).dump(), scene_to_json(heuristic_baseline(t, 500, 4, classes)[7]).dump());
  const auto r = random_baseline(t, 300, 4, classes);
  ASSERT_EQ(r.size(), 300u);
  for (const auto& s : r)
    for (const auto& o : s.objects) EXPECT_TRUE(o.box.within_canvas());
  PromptTriple left = t;
  left.predicate = "left of";
  EXPECT_THROW(heuristic_baseline(left, 5, 1, classes), EvalError);
}

TEST(Baselines, HeuristicBeatsRandomAgainstGroundTruth) {
  const auto classes = ClassVocabulary::desk();
  const auto corpus = generate_synthetic_layout_corpus(desk_layout_corpus_spec(100), classes, 6);
  for (const auto& prompt : desk_eval_prompts()) {
    const auto t = parse_prompt(prompt, classes);
    const auto gt = semantic_filter(corpus, t, classes).scenes;
    const double h = mc_overlap(heuristic_baseline(t, 200, 1, classes), gt, 200, 9).percent();
    const double r = mc_overlap(random_baseline(t, 200, 2, classes), gt, 200, 9).percent();
    EXPECT_GT(h, r) << prompt;
  }
}

// ----------------------------------------------------------------------------
// Heatmap

TEST(Heatmap, AlignedBoxFillsItsCellsExactly) {
  const auto s = one_box_scene("tree", Box{0.375, 0.5, 0.25, 0.5});  // x [0.25, 0.5], y [0.25, 0.75]
  const Heatmap h = build_heatmap({s}, ObjectSlot::kSubject, 8);
  for (std::size_t r = 0; r < 8; ++r)
    for (std::size_t c = 0; c < 8; ++c) {
      const bool in = r >= 2 && r < 6 && c >= 2 && c < 4;
      EXPECT_DOUBLE_EQ(h.at(r, c), in ? 1.0 : 0.0) << r << "," << c;
    }
}

TEST(Heatmap, MassIsAreaTimesCellCount) {
  const auto classes = ClassVocabulary::desk();
  const auto corpus = generate_synthetic_layout_corpus(desk_layout_corpus_spec(10), classes, 3);
  for (std::size_t res : {7u, 32u}) {
    const Heatmap h = build_heatmap(corpus, ObjectSlot::kObject, res);
    double area = 0;
    for (const auto& s : corpus) area += s.objects[s.relation->object].box.area();
    EXPECT_NEAR(h.total(), area * res * res, 1e-9 * h.total());
  }
  EXPECT_THROW(build_heatmap(corpus, ObjectSlot::kObject, 0), EvalError);
}

TEST(Heatmap, PngAndCsvAreWritten) {
  const fs::path d = fresh_dir("heatmap");
  const auto s = one_box_scene("tree", Box{0.5, 0.5, 0.5, 0.5});
  const Heatmap h = build_heatmap({s}, ObjectSlot::kSubject, 4);
  write_heatmap_png(h, d / "h.png");
  const std::string png = read_file(d / "h.png");
  ASSERT_GT(png.size(), 8u);
  EXPECT_EQ(png.substr(1, 3), "PNG");
  const std::string csv = heatmap_csv(h);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
  fs::remove_all(d);
}

// ----------------------------------------------------------------------------
// Sessions, in process

class Sessions : public ::testing::Test {
 protected:
  SessionEngine eng{tiny_pipeline()};
};

TEST_F(Sessions, CandidateRoundsAndSelection) {
  SessionState s = eng.create("s1", "a horse under a tree", 77);
  const CandidateSet& a = eng.candidates(s, 4);
  ASSERT_EQ(a.layouts.size(), 4u);
  EXPECT_EQ(a.id_of(2), "r0-c2");
  const std::string first = scene_to_json(a.layouts[0]).dump();
  // Same round, same k: the cached set.
  EXPECT_EQ(scene_to_json(eng.candidates(s, 4).layouts[0]).dump(), first);
  EXPECT_EQ(s.history.size(), 2u);
  EXPECT_THROW(eng.scene(s), ApiError);  // nothing selected yet
  eng.select(s, "r0-c1");
  EXPECT_EQ(s.round, 1u);
  try {
    eng.select(s, "r0-c2");
    FAIL();
  } catch (const ApiError& e) {
    EXPECT_EQ(e.status(), 409);
  }
  const CandidateSet& b = eng.candidates(s, 4);
  EXPECT_EQ(b.id_of(0), "r1-c0");
  EXPECT_NE(scene_to_json(b.layouts[0]).dump(), first);
  EXPECT_THROW(eng.candidates(s, 0), ApiError);
  EXPECT_THROW(eng.candidates(s, 17), ApiError);
}

TEST_F(Sessions, ResketchTouchesOnlyOneObject) {
  SessionState s = eng.create("s1", "a horse under a tree", 5);
  eng.candidates(s, 2);
  eng.select(s, "r0-c0");
  ASSERT_GE(s.object_seeds.size(), 1u);
  const auto before = eng.scene(s);
  const auto seeds = s.object_seeds;
  eng.resketch(s, 0);
  EXPECT_NE(s.object_seeds[0], seeds[0]);
  for (std::size_t i = 1; i < seeds.size(); ++i) EXPECT_EQ(s.object_seeds[i], seeds[i]);
  const auto after = eng.scene(s);
  for (std::size_t i = 1; i < seeds.size(); ++i)
    EXPECT_EQ(after.placed[i].sketch.strokes, before.placed[i].sketch.strokes);
  EXPECT_THROW(eng.resketch(s, 99), ApiError);
}

TEST_F(Sessions, ReplayReproducesTheSvg) {
  SessionState s = eng.create("s9", "a dog on a chair", 31);
  eng.candidates(s, 3);
  eng.select(s, "r0-c2");
  eng.autocomplete(s, {{"class", "chair"}, {"x", 0.5}, {"y", 0.7}, {"w", 0.3}, {"h", 0.3}}, 2);
  eng.select(s, "r1-c1");
  eng.resketch(s, 0);
  ASSERT_EQ(s.selected->objects[0].label, "chair");
  EXPECT_EQ(s.selected->user_prefix, 1u);
  const SessionState r = eng.replay(s.id, Json::parse(s.history.dump()));
  EXPECT_EQ(render_svg(eng.scene(r)), render_svg(eng.scene(s)));
  EXPECT_EQ(SessionEngine::state_json(r).dump(), SessionEngine::state_json(s).dump());
}

TEST_F(Sessions, BadUserBoxGetsAHint) {
  SessionState s = eng.create("s1", "a dog on a chair", 1);
  try {
    eng.autocomplete(s, {{"class", "chair"}, {"x", 0.95}, {"y", 0.5}, {"w", 0.3}, {"h", 0.3}}, 2);
    FAIL();
  } catch (const ApiError& e) {
    EXPECT_EQ(e.status(), 400);
    EXPECT_TRUE(box_from_json(e.detail().at("suggested_box")).within_canvas());
  }
  EXPECT_THROW(eng.autocomplete(s, {{"class", "unicorn"}, {"x", 0.5}, {"y", 0.5}, {"w", 0.3}, {"h", 0.3}}, 2),
               ApiError);
  EXPECT_THROW(eng.create("s2", "   ", 1), ApiError);
}

TEST(SessionStoreTest, IdempotentRetriesAndUnknownSessions) {
  SessionStore store(tiny_pipeline(), 1);
  const auto c1 = store.create("a horse under a tree", "req-1");
  const auto c2 = store.create("a horse under a tree", "req-1");
  EXPECT_EQ(c1.body, c2.body);
  const auto c3 = store.create("a horse under a tree", "");
  EXPECT_NE(Json::parse(c3.body).at("id"), Json::parse(c1.body).at("id"));
  const std::string id = Json::parse(c1.body).at("id");
  auto op = [&](SessionState& s) {
    store.engine().candidates(s, 2);
    store.engine().select(s, s.pending->id_of(0));
    return SessionStore::json_response(SessionEngine::state_json(s));
  };
  const auto r1 = store.with_session(id, "sel-1", true, op);
  const auto r2 = store.with_session(id, "sel-1", true, op);  // retried, not re-run
  EXPECT_EQ(r1.body, r2.body);
  EXPECT_EQ(Json::parse(r2.body).at("round"), 1);
  EXPECT_EQ(store.with_session("nope", "", false, op).status, 404);
}

TEST(SessionStoreTest, ParallelSessionsMatchSerialOnes) {
  SessionStore store(tiny_pipeline(), 2);
  std::vector<std::string> ids;
  for (int i = 0; i < 4; ++i) ids.push_back(Json::parse(store.create("a boat under a bridge", "").body).at("id"));
  std::vector<std::string> svgs(4);
  std::vector<std::thread> th;
  for (int i = 0; i < 4; ++i) {
    th.emplace_back([&, i] {
      store.with_session(ids[i], "", true, [&](SessionState& s) {
        store.engine().candidates(s, 2);
        store.engine().select(s, "r0-c1");
        svgs[i] = render_svg(store.engine().scene(s));
        return SessionStore::json_response({});
      });
    });
  }
  for (auto& t : th) t.join();
  for (int i = 0; i < 4; ++i) {
    store.with_session(ids[i], "", false, [&](SessionState& s) {
      EXPECT_EQ(render_svg(store.engine().scene(store.engine().replay(s.id, s.history))), svgs[i]);
      return SessionStore::json_response({});
    });
  }
}

// ----------------------------------------------------------------------------
// Sessions over HTTP

class Http : public ::testing::Test {
 protected:
  SessionStore store{tiny_pipeline(), 3};
  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::unique_ptr<httplib::Client> cli;

  void SetUp() override {
    install_routes(server, store);
    port = server.bind_to_any_port("127.0.0.1");
    ASSERT_GT(port, 0);
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
    cli = std::make_unique<httplib::Client>("127.0.0.1", port);
    cli->set_read_timeout(120, 0);
  }
  void TearDown() override {
    server.stop();
    thread.join();
  }
  Json post(const std::string& path, const Json& body, int expect = 200) {
    auto r = cli->Post(path, body.dump(), "application/json");
    EXPECT_TRUE(r);
    if (!r) return {};
    EXPECT_EQ(r->status, expect) << path << " " << r->body;
    EXPECT_EQ(r->get_header_value("X-Schema-Version"), "1");
    return Json::parse(r->body);
  }
  httplib::Result get(const std::string& path) { return cli->Get(path); }
};

TEST_F(Http, FullSessionFlow) {
  const Json created = post("/sessions", {{"description", "a horse under a tree"}, {"request_id", "a"}});
  EXPECT_EQ(created.at("schema_version"), 1);
  const std::string id = created.at("id");
  EXPECT_EQ(post("/sessions", {{"description", "a horse under a tree"}, {"request_id", "a"}}).at("id"), id);

  auto r = get("/sessions/" + id + "/render");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 409);

  r = get("/sessions/" + id + "/candidates?k=4");
  ASSERT_TRUE(r);
  ASSERT_EQ(r->status, 200);
  const Json c = Json::parse(r->body);
  ASSERT_EQ(c.at("candidates").size(), 4u);
  EXPECT_EQ(c.at("candidates")[3].at("id"), "r0-c3");
  EXPECT_TRUE(c.at("candidates")[0].contains("preview"));
  auto again = get("/sessions/" + id + "/candidates?k=4");
  EXPECT_EQ(again->body, r->body);

  post("/sessions/" + id + "/select", {{"candidate", "r0-c3"}});
  post("/sessions/" + id + "/select", {{"candidate", "r0-c3"}}, 409);
  post("/sessions/" + id + "/resketch", {{"object", 0}, {"request_id", "rs"}});
  const Json st = post("/sessions/" + id + "/resketch", {{"object", 0}, {"request_id", "rs"}});
  EXPECT_EQ(st.at("history").size(), 4u);  // the retry did not resketch twice

  r = get("/sessions/" + id + "/render");
  ASSERT_TRUE(r);
  ASSERT_EQ(r->status, 200);
  EXPECT_EQ(r->get_header_value("Content-Type"), "image/svg+xml");
  EXPECT_NO_THROW(svgcheck::parse_svg(r->body));
  auto replay = get("/sessions/" + id + "/replay");
  ASSERT_TRUE(replay);
  EXPECT_EQ(replay->body, r->body);
  auto js = get("/sessions/" + id + "/render?format=json");
  EXPECT_EQ(Json::parse(js->body).at("svg"), r->body);
  EXPECT_EQ(Json::parse(get("/sessions/" + id)->body).at("round"), 1);
}

TEST_F(Http, ErrorsAreJson) {
  auto r = get("/sessions/missing");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 404);
  EXPECT_TRUE(Json::parse(r->body).contains("error"));
  post("/sessions", {{"nodesc", 1}}, 400);
  auto bad = cli->Post("/sessions", "{not json", "application/json");
  EXPECT_EQ(bad->status, 400);
  post("/sessions", {{"description", "x"}, {"schema_version", 2}}, 400);
  const std::string id = post("/sessions", {{"description", "a dog on a chair"}}).at("id");
  EXPECT_EQ(get("/sessions/" + id + "/candidates?k=abc")->status, 400);
  EXPECT_EQ(get("/sessions/" + id + "/candidates?k=99")->status, 400);
  const Json e = post("/sessions/" + id + "/autocomplete",
                      {{"box", {{"class", "chair"}, {"x", -0.2}, {"y", 0.5}, {"w", 0.3}, {"h", 0.3}}}}, 400);
  EXPECT_TRUE(e.at("detail").contains("suggested_box"));
  post("/sessions/" + id + "/select", {{"candidate", 3}}, 400);
}

TEST(BindAddress, ParsesEnvironment) {
  ::setenv("SCENESKETCH_BIND", "0.0.0.0:9123", 1);
  EXPECT_EQ(bind_address_from_env(), (std::pair<std::string, int>{"0.0.0.0", 9123}));
  ::unsetenv("SCENESKETCH_BIND");
  EXPECT_EQ(bind_address_from_env(), (std::pair<std::string, int>{"127.0.0.1", 8080}));
}

// ----------------------------------------------------------------------------
// CLI commands, in process

TEST(Cli, TinyEndToEnd) {
  using namespace scenesketch::cli;
  const fs::path d = fresh_dir("cli");
  std::ostringstream log;
  GenCorpusOptions g;
  g.out = d / "layouts.jsonl";
  g.per_relation = 10;
  cmd_gen_corpus(g, log);
  g.kind = "strokes";
  g.out = d / "trees.jsonl";
  g.count = 12;
  cmd_gen_corpus(g, log);

  TrainOptions tc;
  tc.data = d / "layouts.jsonl";
  tc.out = d / "ck";
  tc.preset = "tiny";
  tc.overrides = {"steps=3"};
  cmd_train_composer(tc, log);
  TrainOptions ts = tc;
  ts.data = d / "trees.jsonl";
  ts.class_label = "tree";
  ts.fallback = "tree";
  cmd_train_sketcher(ts, log);
  for (const char* f : {"composer.ckpt", "composer_loss.csv", "run.json", "sketcher_tree.ckpt",
                        "sketcher_tree_loss.csv", "sketchers.json"})
    EXPECT_TRUE(fs::exists(d / "ck" / f)) << f;

  SampleOptions so;
  so.checkpoints = d / "ck";
  so.description = "a horse under a tree";
  so.out = d / "out";
  so.k = 2;
  const auto layouts = cmd_sample(so, log);
  ASSERT_EQ(layouts.size(), 2u);
  const std::string svg = read_file(d / "out" / "scene_1.svg");
  EXPECT_NO_THROW(svgcheck::parse_svg(svg));

  RenderOptions ro;
  ro.checkpoints = d / "ck";
  ro.layout = d / "out" / "scene_1_layout.json";
  ro.out = d / "rerender.svg";
  cmd_render(ro, log);
  EXPECT_EQ(read_file(d / "rerender.svg"), svg);

  EvalOptions eo;
  eo.checkpoints = d / "ck";
  eo.data = d / "layouts.jsonl";
  eo.out = d / "eval";
  eo.config.layouts_per_prompt = 5;
  eo.config.points_per_box = 20;
  eo.config.heatmap_resolution = 8;
  const auto rep = cmd_eval(eo, log);
  EXPECT_EQ(rep.rows.size(), 4u);
  EXPECT_TRUE(fs::exists(d / "eval" / "overlap.csv"));
  EXPECT_TRUE(fs::exists(d / "eval" / "heatmaps" / "a_horse_under_a_tree_generated_subject.png"));
  fs::remove_all(d);
}

TEST(Cli, UsageErrors) {
  using namespace scenesketch::cli;
  EvalOptions eo;
  eo.checkpoints = "/nonexistent";
  eo.data = "/nonexistent.jsonl";
  eo.out = "/tmp/x";
  EXPECT_THROW(cmd_eval(eo), UsageError);
  TrainOptions t;
  t.data = "/nonexistent.jsonl";
  t.out = "/tmp/x";
  EXPECT_THROW(cmd_train_composer(t), UsageError);
  EXPECT_THROW(resolve_config<ComposerConfig>("huge", std::nullopt, {}), UsageError);
  EXPECT_THROW(resolve_config<ComposerConfig>("tiny", std::nullopt, {"nokey"}), UsageError);
  EXPECT_THROW(resolve_config<SketcherConfig>("tiny", std::nullopt, {"hidden=abc"}), UsageError);
}
