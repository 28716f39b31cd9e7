#pragma once

// Interactive sessions: candidate layouts, autocompletion, selection and
// per-object resketching. Everything a session renders follows from its
// history, so replaying the history reproduces the same SVG bytes.

#include <mutex>
#include <shared_mutex>

#include "scenesketch/render/svg.hpp"

namespace scenesketch {

inline constexpr int kSchemaVersion = 1;

class ApiError : public std::runtime_error {
 public:
  ApiError(int status, const std::string& what, Json detail = Json::object())
      : std::runtime_error(what), status_(status), detail_(std::move(detail)) {}
  int status() const { return status_; }
  const Json& detail() const { return detail_; }

 private:
  int status_;
  Json detail_;
};

/// Loaded models, shared read-only by every session.
struct Pipeline {
  std::shared_ptr<const ComposerModel> composer;
  SketcherRegistry sketchers;
  std::string composer_hash;
  double layout_temperature = 1.0;
  double sketch_temperature = 0.25;

  /// <dir>/composer.ckpt and the registry manifest <dir>/sketchers.json.
  static Pipeline load(const std::filesystem::path& dir) {
    Pipeline p;
    p.composer = std::make_shared<const ComposerModel>(
        ComposerModel::from_checkpoint(load_checkpoint(dir / "composer.ckpt")));
    p.sketchers = SketcherRegistry::load(dir / "sketchers.json");
    p.sketchers.require_total(p.composer->classes().names());
    p.composer_hash = params_hash(p.composer->params());
    return p;
  }
};

struct CandidateSet {
  std::size_t round = 0;
  std::string kind;  // "layouts" or "autocomplete"
  std::size_t k = 0;
  std::vector<LayoutScene> layouts;

  std::string id_of(std::size_t i) const {
    return "r" + std::to_string(round) + "-c" + std::to_string(i);
  }
};

struct SessionState {
  std::string id;
  std::string description;
  std::uint64_t seed = 0;
  std::size_t round = 0;
  std::optional<CandidateSet> pending;
  std::optional<LayoutScene> selected;
  std::vector<std::uint64_t> object_seeds;
  Json history = Json::array();
};

/// One object's starting sketch seed is fixed by its layout, so a preview and
/// the rendered selection agree.
inline std::vector<std::uint64_t> layout_object_seeds(const LayoutScene& layout) {
  return default_object_seeds(layout.objects.size(), layout.seed);
}

class SessionEngine {
 public:
  explicit SessionEngine(std::shared_ptr<const Pipeline> pipeline) : p_(std::move(pipeline)) {}

  const Pipeline& pipeline() const { return *p_; }

  SessionState create(const std::string& id, const std::string& description, std::uint64_t seed) const {
    if (description.find_first_not_of(" \t\r\n") == std::string::npos)
      throw ApiError(400, "description must not be empty");
    SessionState s;
    s.id = id;
    s.description = description;
    s.seed = seed;
    s.history.push_back({{"op", "create"}, {"description", description}, {"seed", seed}});
    return s;
  }

  /// Cached while the current round is unanswered; a new round after selection.
  const CandidateSet& candidates(SessionState& s, std::size_t k) const {
    if (k < 1 || k > 16) throw ApiError(400, "k must be between 1 and 16");
    if (s.pending && s.pending->kind == "layouts" && s.pending->k == k) return *s.pending;
    CandidateSet set{s.round, "layouts", k,
                     sample_layout_candidates(*p_->composer, s.description, k, round_seed(s),
                                              p_->layout_temperature)};
    s.pending = std::move(set);
    s.history.push_back({{"op", "candidates"}, {"k", k}});
    return *s.pending;
  }

  const CandidateSet& autocomplete(SessionState& s, const Json& user_box, std::size_t k) const {
    if (k < 1 || k > 16) throw ApiError(400, "k must be between 1 and 16");
    const SceneObject obj = parse_user_box(user_box);
    CandidateSet set{s.round, "autocomplete", k,
                     sample_layout_candidates(*p_->composer, s.description, k, round_seed(s),
                                              p_->layout_temperature, {obj})};
    s.pending = std::move(set);
    s.history.push_back({{"op", "autocomplete"}, {"box", user_box}, {"k", k}});
    return *s.pending;
  }

  void select(SessionState& s, const std::string& candidate_id) const {
    if (!s.pending) throw ApiError(409, "no candidate round is open");
    for (std::size_t i = 0; i < s.pending->layouts.size(); ++i) {
      if (s.pending->id_of(i) != candidate_id) continue;
      s.selected = s.pending->layouts[i];
      s.object_seeds = layout_object_seeds(*s.selected);
      s.pending.reset();
      ++s.round;
      s.history.push_back({{"op", "select"}, {"candidate", candidate_id}});
      return;
    }
    throw ApiError(409, "candidate '" + candidate_id + "' is not part of the current round");
  }

  void resketch(SessionState& s, std::size_t object) const {
    if (!s.selected) throw ApiError(409, "no layout has been selected");
    if (object >= s.object_seeds.size())
      throw ApiError(400, "object index " + std::to_string(object) + " out of range");
    s.object_seeds[object] = derive_seed(s.object_seeds[object], 1);
    s.history.push_back({{"op", "resketch"}, {"object", object}});
  }

  SceneSketch scene(const SessionState& s) const {
    if (!s.selected) throw ApiError(409, "no layout has been selected");
    return assemble(*s.selected, s.object_seeds);
  }

  SceneSketch assemble(const LayoutScene& layout, const std::vector<std::uint64_t>& seeds) const {
    SceneSketch sc = assemble_scene_with_seeds(layout, p_->sketchers, p_->sketch_temperature, seeds);
    sc.composer_hash = p_->composer_hash;
    return sc;
  }

  /// Rebuilds a session from its history alone.
  SessionState replay(const std::string& id, const Json& history) const {
    if (!history.is_array() || history.empty() || history[0].value("op", "") != "create")
      throw ApiError(400, "history must start with a create event");
    SessionState s = create(id, history[0].at("description").get<std::string>(),
                            history[0].at("seed").get<std::uint64_t>());
    for (std::size_t i = 1; i < history.size(); ++i) {
      const Json& e = history[i];
      const std::string op = e.at("op").get<std::string>();
      if (op == "candidates") candidates(s, e.at("k").get<std::size_t>());
      else if (op == "autocomplete") autocomplete(s, e.at("box"), e.at("k").get<std::size_t>());
      else if (op == "select") select(s, e.at("candidate").get<std::string>());
      else if (op == "resketch") resketch(s, e.at("object").get<std::size_t>());
      else throw ApiError(400, "unknown history event '" + op + "'");
    }
    return s;
  }

  Json candidates_json(const CandidateSet& set) const {
    Json arr = Json::array();
    for (std::size_t i = 0; i < set.layouts.size(); ++i) {
      const auto& l = set.layouts[i];
      arr.push_back({{"id", set.id_of(i)},
                     {"layout", scene_to_json(l)},
                     {"preview", scene_polylines_json(assemble(l, layout_object_seeds(l)))}});
    }
    return {{"round", set.round}, {"kind", set.kind}, {"candidates", arr}};
  }

  static Json state_json(const SessionState& s) {
    Json j = {{"id", s.id},       {"description", s.description}, {"seed", s.seed},
              {"round", s.round}, {"history", s.history}};
    if (s.selected) {
      j["selected"] = scene_to_json(*s.selected);
      j["object_seeds"] = s.object_seeds;
    }
    if (s.pending) {
      Json ids = Json::array();
      for (std::size_t i = 0; i < s.pending->layouts.size(); ++i) ids.push_back(s.pending->id_of(i));
      j["pending"] = {{"round", s.pending->round}, {"kind", s.pending->kind}, {"ids", ids}};
    }
    return j;
  }

 private:
  static std::uint64_t round_seed(const SessionState& s) { return derive_seed(s.seed, s.round); }

  SceneObject parse_user_box(const Json& j) const {
    const ClassVocabulary& classes = p_->composer->classes();
    if (!j.is_object() || !j.contains("class"))
      throw ApiError(400, "user box needs 'class', 'x', 'y', 'w', 'h'");
    const std::string label = j.at("class").get<std::string>();
    const auto id = classes.id_of(label);
    if (!id) throw ApiError(400, "unknown class '" + label + "'");
    Box b;
    try {
      b = box_from_json(j);
    } catch (const Json::exception&) {
      throw ApiError(400, "user box needs numeric 'x', 'y', 'w', 'h'");
    }
    if (!b.within_canvas()) {
      Box hint = b;
      clamp_box(hint);
      throw ApiError(400, "user box must lie within the unit canvas",
                     {{"suggested_box", box_to_json(hint)}});
    }
    return SceneObject{*id, label, b};
  }

  std::shared_ptr<const Pipeline> p_;
};

/// Thread-safe store. Requests for one session are serialized on that
/// session's mutex; distinct sessions proceed in parallel. A (session,
/// request id) pair that was already answered returns the stored response.
class SessionStore {
 public:
  struct Response {
    int status = 200;
    std::string body;
    std::string content_type = "application/json";
  };

  SessionStore(std::shared_ptr<const Pipeline> pipeline, std::uint64_t seed,
               std::optional<std::filesystem::path> snapshot_dir = std::nullopt)
      : engine_(std::move(pipeline)), seed_(seed), snapshot_dir_(std::move(snapshot_dir)) {}

  const SessionEngine& engine() const { return engine_; }

  /// Runs `op` against session `id` under its lock, with idempotency keyed
  /// on `request_id` (empty disables it) and a snapshot after mutations.
  template <class Op>
  Response with_session(const std::string& id, const std::string& request_id, bool mutates, Op&& op) {
    std::shared_ptr<Entry> e;
    try {
      e = find(id);
    } catch (const ApiError& err) {
      return error_response(err.status(), err.what());
    }
    std::lock_guard lock(e->mutex);
    if (!request_id.empty()) {
      auto it = e->answered.find(request_id);
      if (it != e->answered.end()) return it->second;
    }
    Response r = guarded([&] { return op(e->state); });
    if (!request_id.empty() && r.status < 500) e->answered[request_id] = r;
    if (mutates && r.status == 200) snapshot(e->state);
    return r;
  }

  Response create(const std::string& description, const std::string& request_id) {
    std::lock_guard lock(create_mutex_);
    if (!request_id.empty()) {
      auto it = created_.find(request_id);
      if (it != created_.end()) return it->second;
    }
    Response r = guarded([&] {
      std::string id;
      std::uint64_t seed;
      {
        std::unique_lock lk(map_mutex_);
        id = "s" + std::to_string(++counter_);
        seed = derive_seed(seed_, counter_);
      }
      auto e = std::make_shared<Entry>();
      e->state = engine_.create(id, description, seed);
      {
        std::unique_lock lk(map_mutex_);
        sessions_[id] = e;
      }
      snapshot(e->state);
      return json_response(SessionEngine::state_json(e->state));
    });
    if (!request_id.empty() && r.status < 500) created_[request_id] = r;
    return r;
  }

  static Response json_response(Json body, int status = 200) {
    body["schema_version"] = kSchemaVersion;
    return Response{status, body.dump(), "application/json"};
  }

  static Response error_response(int status, const std::string& message, const Json& detail = Json::object()) {
    Json j = {{"error", message}};
    if (!detail.empty()) j["detail"] = detail;
    return json_response(j, status);
  }

 private:
  struct Entry {
    std::mutex mutex;
    SessionState state;
    std::map<std::string, Response> answered;
  };

  template <class F>
  static Response guarded(F&& f) {
    try {
      return f();
    } catch (const ApiError& e) {
      return error_response(e.status(), e.what(), e.detail());
    } catch (const RegistryError& e) {
      return error_response(500, e.what());
    } catch (const std::invalid_argument& e) {
      return error_response(400, e.what());
    } catch (const Json::exception& e) {
      return error_response(400, std::string("malformed request: ") + e.what());
    }
  }

  std::shared_ptr<Entry> find(const std::string& id) {
    std::shared_lock lk(map_mutex_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw ApiError(404, "unknown session '" + id + "'");
    return it->second;
  }

  void snapshot(const SessionState& s) const {
    if (!snapshot_dir_) return;
    write_file(*snapshot_dir_ / (s.id + ".json"), SessionEngine::state_json(s).dump(2) + "\n");
  }

  SessionEngine engine_;
  std::uint64_t seed_;
  std::optional<std::filesystem::path> snapshot_dir_;
  std::shared_mutex map_mutex_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
  std::uint64_t counter_ = 0;
  std::mutex create_mutex_;
  std::map<std::string, Response> created_;
};

}  // namespace scenesketch
