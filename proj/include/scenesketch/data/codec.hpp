#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "scenesketch/data/types.hpp"

namespace scenesketch {

// ----------------------------------------------------------------------------
// Layouts

/// Start token, one box token per object in input order, end token.
inline LayoutSequence encode_scene(const std::vector<SceneObject>& objects,
                                   TokenizedDescription description) {
  if (objects.empty()) throw DataError("encode_scene: empty box list");
  LayoutSequence seq;
  seq.description = std::move(description);
  seq.tokens.reserve(objects.size() + 2);
  seq.tokens.push_back(BoxToken::start());
  for (const auto& o : objects) {
    if (!o.box.within_canvas()) throw DataError("encode_scene: box outside the unit canvas");
    seq.tokens.push_back(BoxToken::box(o.box, o.class_id));
  }
  seq.tokens.push_back(BoxToken::end());
  return seq;
}

/// Boxes of a sequence as (class id, geometry); labels are left empty.
inline std::vector<SceneObject> decode_sequence(const LayoutSequence& seq) {
  std::vector<SceneObject> out;
  for (const auto& t : seq.tokens) {
    if (!t.is_box) continue;
    out.push_back(SceneObject{*t.class_id, {}, t.geometry()});
  }
  return out;
}

// ----------------------------------------------------------------------------
// Strokes

struct Extent {
  double min_x = std::numeric_limits<double>::infinity();
  double max_x = -std::numeric_limits<double>::infinity();
  double min_y = std::numeric_limits<double>::infinity();
  double max_y = -std::numeric_limits<double>::infinity();

  void include(const Point& p) {
    min_x = std::min(min_x, p.x);
    max_x = std::max(max_x, p.x);
    min_y = std::min(min_y, p.y);
    max_y = std::max(max_y, p.y);
  }
  double width() const { return max_x - min_x; }
  double height() const { return max_y - min_y; }
  bool valid() const { return min_x <= max_x; }
};

inline Extent extent_of(const std::vector<Polyline>& polylines) {
  Extent e;
  for (const auto& pl : polylines)
    for (const auto& p : pl) e.include(p);
  return e;
}

/// Polylines (absolute coordinates) to pen offsets. The first vertex of the
/// first polyline is the origin; each later polyline is reached by one pen-up
/// move; a terminal zero-offset end stroke closes the sequence. Polylines
/// with fewer than two vertices carry no drawable segment and are dropped.
inline std::vector<Stroke5> encode_polylines(const std::vector<Polyline>& polylines) {
  std::vector<Stroke5> out;
  bool first = true;
  Point pen;
  for (const auto& pl : polylines) {
    if (pl.size() < 2) continue;
    if (first) {
      pen = pl[0];
      first = false;
    } else {
      out.push_back(Stroke5{pl[0].x - pen.x, pl[0].y - pen.y, PenState::kUp});
      pen = pl[0];
    }
    for (std::size_t i = 1; i < pl.size(); ++i) {
      out.push_back(Stroke5{pl[i].x - pen.x, pl[i].y - pen.y, PenState::kDown});
      pen = pl[i];
    }
  }
  out.push_back(Stroke5{0.0, 0.0, PenState::kEnd});
  return out;
}

/// Inverse of encode_polylines, with the origin at (0, 0). Decoding stops at
/// the first end stroke.
inline std::vector<Polyline> decode_strokes(const std::vector<Stroke5>& strokes) {
  std::vector<Polyline> out;
  Point pen{0.0, 0.0};
  Polyline current{pen};
  for (const auto& s : strokes) {
    if (s.p_end()) break;
    const Point next{pen.x + s.dx, pen.y + s.dy};
    if (s.p_down()) {
      current.push_back(next);
    } else {
      if (current.size() >= 2) out.push_back(std::move(current));
      current = Polyline{next};
    }
    pen = next;
  }
  if (current.size() >= 2) out.push_back(std::move(current));
  return out;
}

inline Extent stroke_extent(const std::vector<Stroke5>& strokes) {
  return extent_of(decode_strokes(strokes));
}

/// Builds a record from absolute polylines: offsets are rescaled so the
/// larger extent equals 1 and the aspect ratio is height / width.
inline SketchRecord make_sketch_record(const std::vector<Polyline>& polylines,
                                       const std::string& class_label) {
  std::size_t points = 0;
  std::vector<Polyline> kept;
  for (const auto& pl : polylines) {
    if (pl.size() >= 2) {
      kept.push_back(pl);
      points += pl.size();
    }
  }
  if (points < 2) throw DataError("sketch: fewer than two points");
  const Extent e = extent_of(kept);
  if (!(e.width() > 0) || !(e.height() > 0)) throw DataError("sketch: zero-extent drawing");
  const double s = 1.0 / std::max(e.width(), e.height());
  SketchRecord rec;
  rec.strokes = encode_polylines(kept);
  for (auto& st : rec.strokes) {
    st.dx *= s;
    st.dy *= s;
  }
  rec.class_label = class_label;
  rec.aspect_ratio = e.height() / e.width();
  return rec;
}

/// Extent ratio recomputed from a record's strokes; 0 if degenerate.
inline double achieved_aspect_ratio(const std::vector<Stroke5>& strokes) {
  const Extent e = stroke_extent(strokes);
  if (!e.valid() || !(e.width() > 0)) return 0.0;
  return e.height() / e.width();
}

}  // namespace scenesketch
