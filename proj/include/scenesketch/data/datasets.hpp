#pragma once

// Line-delimited JSON corpora.
//
// Layout corpus, one record per line:
//   {"description": "a dog on a chair",
//    "canvas": {"width": 800, "height": 600},          (optional; pixels)
//    "objects": [{"class": "dog", "x": .., "y": .., "w": .., "h": ..}, ...],
//    "relation": {"subject": 0, "predicate": "on", "object": 1}}   (optional)
// x, y are box centers. Without "canvas" coordinates are canvas fractions.
//
// Stroke corpus, one drawing per line, class label given per file:
//   {"polylines": [[[x, y], [x, y], ...], ...]}
// or the simplified Quick, Draw! shape {"drawing": [[[x0, x1, ..], [y0, y1, ..]], ...]}.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "scenesketch/data/codec.hpp"
#include "scenesketch/data/types.hpp"

namespace scenesketch {

struct LayoutDataset {
  std::vector<LayoutScene> scenes;
  std::size_t lines = 0;
  std::size_t malformed = 0;
};

namespace detail {

inline std::vector<std::string> read_nonblank_lines(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot read " + path.string());
  std::vector<std::string> lines;
  for (std::string line; std::getline(f, line);) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    lines.push_back(line);
  }
  return lines;
}

inline LayoutScene parse_layout_line(const std::string& line, const ClassVocabulary& classes) {
  const Json j = Json::parse(line);
  LayoutScene s;
  s.description = j.at("description").get<std::string>();
  double sx = 1.0, sy = 1.0;
  if (j.contains("canvas")) {
    sx = j.at("canvas").at("width").get<double>();
    sy = j.at("canvas").at("height").get<double>();
    if (!(sx > 0 && sy > 0)) throw DataError("non-positive canvas size");
  }
  const auto& objs = j.at("objects");
  if (!objs.is_array() || objs.empty()) throw DataError("no objects");
  for (const auto& jo : objs) {
    SceneObject o;
    o.label = jo.at("class").get<std::string>();
    const auto id = classes.id_of(o.label);
    if (!id) throw DataError("unknown class " + o.label);
    o.class_id = *id;
    o.box = Box{jo.at("x").get<double>() / sx, jo.at("y").get<double>() / sy,
                jo.at("w").get<double>() / sx, jo.at("h").get<double>() / sy};
    if (!o.box.within_canvas()) throw DataError("box outside canvas");
    s.objects.push_back(o);
  }
  if (j.contains("relation")) {
    const auto& r = j.at("relation");
    Relation rel{r.at("subject").get<std::size_t>(), r.at("predicate").get<std::string>(),
                 r.at("object").get<std::size_t>()};
    if (rel.subject >= s.objects.size() || rel.object >= s.objects.size())
      throw DataError("relation index out of range");
    s.relation = rel;
  }
  return s;
}

}  // namespace detail

/// Reads a layout corpus. Malformed lines (bad JSON, unknown class, boxes
/// off the canvas) are counted and skipped; more than 10% malformed, an
/// empty file, or an unreadable file is fatal.
inline LayoutDataset parse_layout_dataset(const std::filesystem::path& path,
                                          const ClassVocabulary& classes) {
  const auto lines = detail::read_nonblank_lines(path);
  if (lines.empty()) throw DataError("layout corpus " + path.string() + " is empty");
  LayoutDataset ds;
  ds.lines = lines.size();
  for (const auto& line : lines) {
    try {
      ds.scenes.push_back(detail::parse_layout_line(line, classes));
    } catch (const std::exception&) {
      ds.malformed += 1;
    }
  }
  if (ds.malformed * 10 > ds.lines) {
    throw DataError("layout corpus " + path.string() + ": " + std::to_string(ds.malformed) +
                    " of " + std::to_string(ds.lines) + " lines malformed");
  }
  return ds;
}

inline void write_layout_dataset(const std::filesystem::path& path,
                                 const std::vector<LayoutScene>& scenes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError("cannot write " + path.string());
  for (const auto& s : scenes) {
    Json j = scene_to_json(s);
    j.erase("provenance");
    f << j.dump() << '\n';
  }
}

struct StrokeDataset {
  std::vector<SketchRecord> records;
  std::size_t skipped = 0;
};

namespace detail {

inline std::vector<Polyline> parse_polylines(const Json& j) {
  std::vector<Polyline> out;
  if (j.is_object() && j.contains("drawing")) {
    for (const auto& stroke : j.at("drawing")) {
      const auto xs = stroke.at(0).get<std::vector<double>>();
      const auto ys = stroke.at(1).get<std::vector<double>>();
      if (xs.size() != ys.size()) throw DataError("drawing: x/y length mismatch");
      Polyline pl;
      for (std::size_t i = 0; i < xs.size(); ++i) pl.push_back({xs[i], ys[i]});
      out.push_back(std::move(pl));
    }
    return out;
  }
  const Json& arr = j.is_object() ? j.at("polylines") : j;
  for (const auto& jp : arr) {
    Polyline pl;
    for (const auto& pt : jp) pl.push_back({pt.at(0).get<double>(), pt.at(1).get<double>()});
    out.push_back(std::move(pl));
  }
  return out;
}

}  // namespace detail

/// Reads a single-class stroke corpus; drawings with fewer than two points
/// or zero extent are skipped.
inline StrokeDataset parse_stroke_dataset(const std::filesystem::path& path,
                                          const std::string& class_label) {
  const auto lines = detail::read_nonblank_lines(path);
  StrokeDataset ds;
  for (const auto& line : lines) {
    try {
      ds.records.push_back(make_sketch_record(detail::parse_polylines(Json::parse(line)), class_label));
    } catch (const std::exception&) {
      ds.skipped += 1;
    }
  }
  return ds;
}

inline Json polylines_to_json(const std::vector<Polyline>& polylines) {
  Json arr = Json::array();
  for (const auto& pl : polylines) {
    Json jp = Json::array();
    for (const auto& p : pl) jp.push_back({p.x, p.y});
    arr.push_back(jp);
  }
  return arr;
}

inline void write_stroke_dataset(const std::filesystem::path& path,
                                 const std::vector<SketchRecord>& records) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError("cannot write " + path.string());
  for (const auto& r : records) {
    f << Json{{"polylines", polylines_to_json(decode_strokes(r.strokes))}}.dump() << '\n';
  }
}

}  // namespace scenesketch
