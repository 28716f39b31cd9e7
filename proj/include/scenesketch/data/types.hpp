#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace scenesketch {

using Json = nlohmann::json;

/// Fixed-precision text for CSV columns.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Axis-aligned box on the unit canvas: center (x, y), size (w, h).
/// y grows downward, so "above" means a smaller center y.
struct Box {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  double left() const { return x - w / 2; }
  double right() const { return x + w / 2; }
  double top() const { return y - h / 2; }
  double bottom() const { return y + h / 2; }
  double area() const { return w * h; }

  bool contains(double px, double py) const {
    return px >= left() && px <= right() && py >= top() && py <= bottom();
  }

  bool within_canvas(double tol = 1e-9) const {
    return w > 0 && h > 0 && w <= 1 + tol && h <= 1 + tol && left() >= -tol &&
           right() <= 1 + tol && top() >= -tol && bottom() <= 1 + tol;
  }

  friend bool operator==(const Box&, const Box&) = default;
};

inline Json box_to_json(const Box& b) { return {{"x", b.x}, {"y", b.y}, {"w", b.w}, {"h", b.h}}; }
inline Box box_from_json(const Json& j) {
  return Box{j.at("x").get<double>(), j.at("y").get<double>(), j.at("w").get<double>(),
             j.at("h").get<double>()};
}

/// One step of a layout sequence: [x, y, w, h, class, box, start, end].
struct BoxToken {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;
  std::optional<int> class_id;
  bool is_box = false;
  bool is_start = false;
  bool is_end = false;

  static BoxToken start() {
    BoxToken t;
    t.is_start = true;
    return t;
  }
  static BoxToken end() {
    BoxToken t;
    t.is_end = true;
    return t;
  }
  static BoxToken box(const Box& b, int class_id) {
    BoxToken t;
    t.x = b.x;
    t.y = b.y;
    t.w = b.w;
    t.h = b.h;
    t.class_id = class_id;
    t.is_box = true;
    return t;
  }

  Box geometry() const { return Box{x, y, w, h}; }

  /// 0 = box, 1 = start, 2 = end.
  int flag_index() const { return is_box ? 0 : (is_start ? 1 : 2); }

  std::array<double, 8> values() const {
    return {x, y, w, h, class_id ? static_cast<double>(*class_id) : -1.0,
            is_box ? 1.0 : 0.0, is_start ? 1.0 : 0.0, is_end ? 1.0 : 0.0};
  }

  void validate() const {
    const int flags = int(is_box) + int(is_start) + int(is_end);
    if (flags != 1) throw DataError("BoxToken: exactly one of box/start/end must be set");
    if (is_box) {
      if (!(w > 0 && h > 0)) throw DataError("BoxToken: box token needs positive size");
      if (!class_id) throw DataError("BoxToken: box token needs a class id");
    } else if (x != 0 || y != 0 || w != 0 || h != 0 || class_id) {
      throw DataError("BoxToken: start/end tokens carry zero geometry and no class");
    }
  }

  friend bool operator==(const BoxToken&, const BoxToken&) = default;
};

struct TokenizedDescription {
  std::vector<int> word_ids;
  std::string raw_text;
};

struct LayoutSequence {
  std::vector<BoxToken> tokens;
  TokenizedDescription description;

  std::size_t box_count() const {
    return static_cast<std::size_t>(
        std::count_if(tokens.begin(), tokens.end(), [](const BoxToken& t) { return t.is_box; }));
  }

  void validate(std::size_t max_objects) const {
    if (tokens.size() < 3) throw DataError("LayoutSequence: needs start, at least one box, end");
    if (!tokens.front().is_start) throw DataError("LayoutSequence: first token must be start");
    if (!tokens.back().is_end) throw DataError("LayoutSequence: last token must be end");
    for (std::size_t i = 1; i + 1 < tokens.size(); ++i)
      if (!tokens[i].is_box) throw DataError("LayoutSequence: interior tokens must be boxes");
    for (const auto& t : tokens) t.validate();
    if (box_count() > max_objects) {
      throw DataError("LayoutSequence: " + std::to_string(box_count()) +
                      " objects exceed the maximum of " + std::to_string(max_objects));
    }
  }
};

enum class RelationTag { kAbove, kBelow, kInside, kLeft, kRight };

inline std::string to_string(RelationTag t) {
  switch (t) {
    case RelationTag::kAbove: return "above";
    case RelationTag::kBelow: return "below";
    case RelationTag::kInside: return "inside";
    case RelationTag::kLeft: return "left";
    case RelationTag::kRight: return "right";
  }
  return "?";
}

/// Object classes plus the predicate lexicon (predicate phrase -> relation tag).
class ClassVocabulary {
 public:
  static constexpr std::size_t kPaperScaleBound = 100;

  ClassVocabulary() = default;
  explicit ClassVocabulary(std::vector<std::string> names,
                           std::map<std::string, RelationTag> predicates = default_predicates())
      : names_(std::move(names)), predicates_(std::move(predicates)) {
    if (names_.empty()) throw DataError("ClassVocabulary: no classes");
    if (names_.size() > kPaperScaleBound) {
      throw DataError("ClassVocabulary: " + std::to_string(names_.size()) +
                      " classes exceed the bound of 100");
    }
    for (std::size_t i = 0; i < names_.size(); ++i) {
      if (!ids_.emplace(names_[i], static_cast<int>(i)).second)
        throw DataError("ClassVocabulary: duplicate class " + names_[i]);
    }
  }

  static std::map<std::string, RelationTag> default_predicates() {
    return {{"above", RelationTag::kAbove},     {"on", RelationTag::kAbove},
            {"on top of", RelationTag::kAbove}, {"riding", RelationTag::kAbove},
            {"over", RelationTag::kAbove},      {"atop", RelationTag::kAbove},
            {"sitting on", RelationTag::kAbove}, {"below", RelationTag::kBelow},
            {"under", RelationTag::kBelow},     {"beneath", RelationTag::kBelow},
            {"underneath", RelationTag::kBelow}, {"in", RelationTag::kInside},
            {"inside", RelationTag::kInside},   {"left of", RelationTag::kLeft},
            {"right of", RelationTag::kRight}};
  }

  /// The ten classes used by the desk-scale corpora.
  static ClassVocabulary desk() {
    return ClassVocabulary({"person", "horse", "dog", "chair", "tree", "boat", "bridge", "cloud",
                            "house", "apple"});
  }

  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  const std::map<std::string, RelationTag>& predicates() const { return predicates_; }

  std::optional<int> id_of(const std::string& name) const {
    auto it = ids_.find(name);
    if (it == ids_.end()) return std::nullopt;
    return it->second;
  }
  const std::string& name_of(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= names_.size())
      throw DataError("ClassVocabulary: class id " + std::to_string(id) + " out of range");
    return names_[static_cast<std::size_t>(id)];
  }

  std::optional<RelationTag> tag_of(const std::string& predicate) const {
    auto it = predicates_.find(predicate);
    if (it == predicates_.end()) return std::nullopt;
    return it->second;
  }

  Json to_json() const {
    Json preds = Json::object();
    for (const auto& [k, v] : predicates_) preds[k] = to_string(v);
    return {{"classes", names_}, {"predicates", preds}};
  }

  static ClassVocabulary from_json(const Json& j) {
    std::map<std::string, RelationTag> preds;
    for (const auto& [k, v] : j.at("predicates").items()) {
      const auto s = v.get<std::string>();
      RelationTag t;
      if (s == "above") t = RelationTag::kAbove;
      else if (s == "below") t = RelationTag::kBelow;
      else if (s == "inside") t = RelationTag::kInside;
      else if (s == "left") t = RelationTag::kLeft;
      else if (s == "right") t = RelationTag::kRight;
      else throw DataError("ClassVocabulary: unknown relation tag " + s);
      preds[k] = t;
    }
    return ClassVocabulary(j.at("classes").get<std::vector<std::string>>(), std::move(preds));
  }

 private:
  std::vector<std::string> names_;
  std::map<std::string, RelationTag> predicates_;
  std::map<std::string, int> ids_;
};

struct SceneObject {
  int class_id = 0;
  std::string label;
  Box box;

  friend bool operator==(const SceneObject&, const SceneObject&) = default;
};

/// Index-based relation between two objects of a scene.
struct Relation {
  std::size_t subject = 0;
  std::string predicate;
  std::size_t object = 1;

  friend bool operator==(const Relation&, const Relation&) = default;
};

enum class Provenance { kGroundTruth, kGenerated };

/// Ordered labeled boxes on the unit canvas.
struct LayoutScene {
  std::string description;
  std::vector<SceneObject> objects;
  std::optional<Relation> relation;
  Provenance provenance = Provenance::kGroundTruth;
  std::uint64_t seed = 0;
  /// Some sampled geometry was clamped back onto the canvas.
  bool clamped = false;
  /// Leading objects supplied by a user rather than generated.
  std::size_t user_prefix = 0;
};

inline Json scene_to_json(const LayoutScene& s) {
  Json objs = Json::array();
  for (const auto& o : s.objects) {
    Json jo = box_to_json(o.box);
    jo["class"] = o.label;
    objs.push_back(jo);
  }
  Json j = {{"description", s.description}, {"objects", objs}};
  if (s.relation) {
    j["relation"] = {{"subject", s.relation->subject},
                     {"predicate", s.relation->predicate},
                     {"object", s.relation->object}};
  }
  j["provenance"] = s.provenance == Provenance::kGenerated ? "generated" : "ground_truth";
  if (s.provenance == Provenance::kGenerated) {
    j["seed"] = s.seed;
    j["clamped"] = s.clamped;
    j["user_prefix"] = s.user_prefix;
  }
  return j;
}

inline LayoutScene scene_from_json(const Json& j, const ClassVocabulary& classes) {
  LayoutScene s;
  s.description = j.at("description").get<std::string>();
  for (const auto& jo : j.at("objects")) {
    SceneObject o;
    o.label = jo.at("class").get<std::string>();
    auto id = classes.id_of(o.label);
    if (!id) throw DataError("unknown class " + o.label);
    o.class_id = *id;
    o.box = box_from_json(jo);
    s.objects.push_back(o);
  }
  if (j.contains("relation")) {
    const auto& r = j.at("relation");
    s.relation = Relation{r.at("subject").get<std::size_t>(), r.at("predicate").get<std::string>(),
                          r.at("object").get<std::size_t>()};
  }
  if (j.value("provenance", "ground_truth") == "generated") {
    s.provenance = Provenance::kGenerated;
    s.seed = j.value("seed", std::uint64_t{0});
    s.clamped = j.value("clamped", false);
    s.user_prefix = j.value("user_prefix", std::size_t{0});
  }
  return s;
}

// ----------------------------------------------------------------------------
// Strokes

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

using Polyline = std::vector<Point>;

enum class PenState { kDown = 0, kUp = 1, kEnd = 2 };

/// Pen offset plus one-hot pen state. The state describes the move that
/// reaches this point: kDown draws a segment, kUp moves without drawing,
/// kEnd terminates the sketch (its offset is zero).
struct Stroke5 {
  double dx = 0.0;
  double dy = 0.0;
  PenState pen = PenState::kDown;

  bool p_down() const { return pen == PenState::kDown; }
  bool p_up() const { return pen == PenState::kUp; }
  bool p_end() const { return pen == PenState::kEnd; }

  std::array<double, 5> values() const {
    return {dx, dy, p_down() ? 1.0 : 0.0, p_up() ? 1.0 : 0.0, p_end() ? 1.0 : 0.0};
  }

  friend bool operator==(const Stroke5&, const Stroke5&) = default;
};

struct SketchRecord {
  std::vector<Stroke5> strokes;
  std::string class_label;
  /// Vertical extent over horizontal extent.
  double aspect_ratio = 1.0;
  /// Sampling stopped at the step limit before an end stroke.
  bool truncated = false;
};

}  // namespace scenesketch
