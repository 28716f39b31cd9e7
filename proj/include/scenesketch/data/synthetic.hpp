#pragma once

// Procedural corpora standing in for scene-graph layouts and crowd-sourced
// stroke drawings at desk scale.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "scenesketch/core/rng.hpp"
#include "scenesketch/data/codec.hpp"
#include "scenesketch/data/types.hpp"

namespace scenesketch {

struct Range {
  double lo = 0.0;
  double hi = 0.0;
  double sample(Rng& rng) const { return lo == hi ? lo : rng.uniform(lo, hi); }
};

struct SizePrior {
  Range w;
  Range h;
};

/// One (subject, predicate, object) relation with its geometric priors.
///
/// The object box is drawn from absolute priors; the subject box is placed
/// relative to it according to the predicate's relation tag. `overlap` is
/// the fraction of the subject's extent that may reach into the object box
/// along the relation axis; `lateral_jitter` offsets the subject along the
/// other axis.
struct RelationSpec {
  std::string subject;
  std::string predicate;
  std::string object;
  SizePrior subject_size;
  SizePrior object_size;
  Range object_x;
  Range object_y;
  double lateral_jitter = 0.05;
  Range overlap{0.0, 0.3};
  std::size_t count = 100;
};

struct LayoutCorpusSpec {
  std::vector<RelationSpec> relations;
  std::size_t max_retries = 200;
};

inline std::string relation_description(const std::string& subject, const std::string& predicate,
                                        const std::string& object) {
  return "a " + subject + " " + predicate + " a " + object;
}

/// True when the subject/object boxes satisfy the tag's center ordering.
inline bool relation_holds(RelationTag tag, const Box& subject, const Box& object) {
  switch (tag) {
    case RelationTag::kAbove: return subject.y < object.y;
    case RelationTag::kBelow: return subject.y > object.y;
    case RelationTag::kLeft: return subject.x < object.x;
    case RelationTag::kRight: return subject.x > object.x;
    case RelationTag::kInside:
      return subject.left() >= object.left() && subject.right() <= object.right() &&
             subject.top() >= object.top() && subject.bottom() <= object.bottom();
  }
  return false;
}

inline std::vector<LayoutScene> generate_synthetic_layout_corpus(const LayoutCorpusSpec& spec,
                                                                 const ClassVocabulary& classes,
                                                                 std::uint64_t seed) {
  std::vector<LayoutScene> out;
  for (std::size_t ri = 0; ri < spec.relations.size(); ++ri) {
    const RelationSpec& rs = spec.relations[ri];
    const auto tag = classes.tag_of(rs.predicate);
    if (!tag) throw DataError("synthetic corpus: unknown predicate '" + rs.predicate + "'");
    const auto sid = classes.id_of(rs.subject);
    const auto oid = classes.id_of(rs.object);
    if (!sid || !oid) throw DataError("synthetic corpus: unknown class in relation " + rs.subject +
                                      " " + rs.predicate + " " + rs.object);
    Rng rng(derive_seed(seed, ri));
    for (std::size_t n = 0; n < rs.count; ++n) {
      bool placed = false;
      Box sb, ob;
      for (std::size_t attempt = 0; attempt < spec.max_retries && !placed; ++attempt) {
        ob = Box{rs.object_x.sample(rng), rs.object_y.sample(rng), rs.object_size.w.sample(rng),
                 rs.object_size.h.sample(rng)};
        sb.w = rs.subject_size.w.sample(rng);
        sb.h = rs.subject_size.h.sample(rng);
        const double ov = rs.overlap.sample(rng);
        const double lateral = rng.uniform(-rs.lateral_jitter, rs.lateral_jitter);
        switch (*tag) {
          case RelationTag::kAbove:
            sb.x = ob.x + lateral;
            sb.y = ob.top() - sb.h / 2 + ov * sb.h;
            break;
          case RelationTag::kBelow:
            sb.x = ob.x + lateral;
            sb.y = ob.bottom() + sb.h / 2 - ov * sb.h;
            break;
          case RelationTag::kLeft:
            sb.y = ob.y + lateral;
            sb.x = ob.left() - sb.w / 2 + ov * sb.w;
            break;
          case RelationTag::kRight:
            sb.y = ob.y + lateral;
            sb.x = ob.right() + sb.w / 2 - ov * sb.w;
            break;
          case RelationTag::kInside:
            sb.x = ob.x + rng.uniform(-1, 1) * std::max(0.0, (ob.w - sb.w) / 2);
            sb.y = ob.y + rng.uniform(-1, 1) * std::max(0.0, (ob.h - sb.h) / 2);
            break;
        }
        placed = sb.within_canvas(0.0) && ob.within_canvas(0.0) && relation_holds(*tag, sb, ob);
      }
      if (!placed) {
        throw DataError("synthetic corpus: could not place '" +
                        relation_description(rs.subject, rs.predicate, rs.object) +
                        "' inside the canvas after " + std::to_string(spec.max_retries) +
                        " attempts");
      }
      LayoutScene s;
      s.description = relation_description(rs.subject, rs.predicate, rs.object);
      s.objects = {SceneObject{*sid, rs.subject, sb}, SceneObject{*oid, rs.object, ob}};
      s.relation = Relation{0, rs.predicate, 1};
      out.push_back(std::move(s));
    }
  }
  return out;
}

/// Four relations mirroring the evaluation prompts, `per_relation` layouts each.
inline LayoutCorpusSpec desk_layout_corpus_spec(std::size_t per_relation = 500) {
  LayoutCorpusSpec spec;
  // dog on chair
  spec.relations.push_back({"dog", "on", "chair",
                            {{0.18, 0.26}, {0.14, 0.20}},
                            {{0.28, 0.36}, {0.30, 0.38}},
                            {0.35, 0.65}, {0.60, 0.72},
                            0.04, {0.0, 0.3}, per_relation});
  // horse under tree
  spec.relations.push_back({"horse", "under", "tree",
                            {{0.30, 0.40}, {0.20, 0.28}},
                            {{0.34, 0.46}, {0.46, 0.58}},
                            {0.35, 0.65}, {0.30, 0.40},
                            0.06, {0.0, 0.4}, per_relation});
  // person riding horse
  spec.relations.push_back({"person", "riding", "horse",
                            {{0.12, 0.18}, {0.26, 0.34}},
                            {{0.38, 0.48}, {0.26, 0.34}},
                            {0.38, 0.62}, {0.62, 0.74},
                            0.05, {0.2, 0.45}, per_relation});
  // boat under bridge
  spec.relations.push_back({"boat", "under", "bridge",
                            {{0.16, 0.24}, {0.10, 0.14}},
                            {{0.66, 0.80}, {0.16, 0.24}},
                            {0.44, 0.56}, {0.32, 0.42},
                            0.12, {0.0, 0.2}, per_relation});
  return spec;
}

// ----------------------------------------------------------------------------
// Stroke shape families

enum class ShapeFamily { kTree, kHouse, kCloud, kBox };

inline std::string to_string(ShapeFamily f) {
  switch (f) {
    case ShapeFamily::kTree: return "tree";
    case ShapeFamily::kHouse: return "house";
    case ShapeFamily::kCloud: return "cloud";
    case ShapeFamily::kBox: return "box";
  }
  return "?";
}

inline ShapeFamily shape_family_from_string(const std::string& s) {
  if (s == "tree") return ShapeFamily::kTree;
  if (s == "house") return ShapeFamily::kHouse;
  if (s == "cloud") return ShapeFamily::kCloud;
  if (s == "box") return ShapeFamily::kBox;
  throw DataError("unknown shape family '" + s + "'");
}

struct StrokeFamilySpec {
  ShapeFamily family = ShapeFamily::kTree;
  std::string class_label = "tree";
  Range aspect_ratio{0.5, 2.0};
  std::size_t count = 500;
  /// Relative perturbation of interior vertices.
  double jitter = 0.05;
};

namespace detail {

// Maps every vertex affinely so the extent is exactly [0, 1] x [0, ratio].
inline void fit_extent(std::vector<Polyline>& pls, double ratio) {
  const Extent e = extent_of(pls);
  for (auto& pl : pls) {
    for (auto& p : pl) {
      p.x = (p.x - e.min_x) / e.width();
      p.y = (p.y - e.min_y) / e.height() * ratio;
    }
  }
}

inline Polyline ellipse_loop(double cx, double cy, double rx, double ry, std::size_t n,
                             double start_angle, double jitter, Rng& rng) {
  Polyline pl;
  for (std::size_t i = 0; i <= n; ++i) {
    const double a = start_angle + 2.0 * std::numbers::pi * static_cast<double>(i % n) /
                                       static_cast<double>(n);
    const double j = (i % n == 0) ? 1.0 : 1.0 + rng.uniform(-jitter, jitter);
    pl.push_back({cx + rx * j * std::cos(a), cy + ry * j * std::sin(a)});
  }
  pl.back() = pl.front();
  return pl;
}

}  // namespace detail

/// Absolute polylines for one drawing whose extent ratio (height/width) is `ratio`.
///
/// Tree: a trunk drawn upward into a closed crown loop; the trunk is `ratio`
/// times the crown height. House: body and roof outline plus the eave line.
/// Cloud: a bumpy closed loop. Box: a closed quadrilateral.
inline std::vector<Polyline> make_shape(ShapeFamily family, double ratio, double jitter, Rng& rng) {
  std::vector<Polyline> pls;
  switch (family) {
    case ShapeFamily::kTree: {
      const double height = ratio;
      const double crown = height / (1.0 + ratio);
      const double trunk_x = 0.5 + rng.uniform(-jitter, jitter) * 0.2;
      Polyline pl{{trunk_x, height}, {0.5, crown}};
      // Crown loop starts at its bottom point (angle pi/2 in y-down coordinates).
      Polyline loop = detail::ellipse_loop(0.5, crown / 2, 0.5, crown / 2, 10,
                                           std::numbers::pi / 2, jitter, rng);
      pl.insert(pl.end(), loop.begin() + 1, loop.end());
      pls.push_back(std::move(pl));
      break;
    }
    case ShapeFamily::kHouse: {
      const double roof = 0.4 * ratio * (1.0 + rng.uniform(-jitter, jitter));
      const double h = ratio;
      pls.push_back({{0, h}, {1, h}, {1, roof}, {0.5, 0}, {0, roof}, {0, h}});
      pls.push_back({{0, roof}, {1, roof}});
      break;
    }
    case ShapeFamily::kCloud: {
      Polyline loop = detail::ellipse_loop(0.5, ratio / 2, 0.5, ratio / 2, 12, 0.0,
                                           std::max(jitter, 0.1), rng);
      pls.push_back(std::move(loop));
      break;
    }
    case ShapeFamily::kBox: {
      auto j = [&] { return rng.uniform(-jitter, jitter) * 0.2; };
      pls.push_back({{0 + j(), 0 + j()},
                     {1 + j(), 0 + j()},
                     {1 + j(), ratio + j()},
                     {0 + j(), ratio + j()}});
      pls.back().push_back(pls.back().front());
      break;
    }
  }
  detail::fit_extent(pls, ratio);
  return pls;
}

/// Records whose aspect ratios are stratified over each family's range.
inline std::vector<SketchRecord> generate_synthetic_stroke_corpus(
    const std::vector<StrokeFamilySpec>& families, std::uint64_t seed) {
  std::vector<SketchRecord> out;
  for (std::size_t fi = 0; fi < families.size(); ++fi) {
    const auto& fs = families[fi];
    Rng rng(derive_seed(seed, 1000 + fi));
    std::vector<std::size_t> order(fs.count);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    for (std::size_t i : order) {
      const double u = (static_cast<double>(i) + rng.uniform()) / static_cast<double>(fs.count);
      const double r = fs.aspect_ratio.lo + (fs.aspect_ratio.hi - fs.aspect_ratio.lo) * u;
      out.push_back(make_sketch_record(make_shape(fs.family, r, fs.jitter, rng), fs.class_label));
    }
  }
  return out;
}

}  // namespace scenesketch
