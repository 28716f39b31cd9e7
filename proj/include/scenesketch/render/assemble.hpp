#pragma once

// Placing per-object sketches into their layout boxes.

#include "scenesketch/model/sketcher.hpp"

namespace scenesketch {

class AssemblyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Maps sketch coordinates into canvas coordinates: p' = (sx * x + tx, sy * y + ty).
struct Affine {
  double scale_x = 1.0, scale_y = 1.0;
  double translate_x = 0.0, translate_y = 0.0;

  Point apply(const Point& p) const {
    return {scale_x * p.x + translate_x, scale_y * p.y + translate_y};
  }
};

struct PlacedSketch {
  SketchRecord sketch;
  Box box;
  Affine transform;
  std::size_t layer = 0;
  std::string label;
  double requested_ratio = 0.0;
  std::uint64_t seed = 0;

  /// Pen-down polylines in canvas coordinates.
  std::vector<Polyline> polylines() const {
    auto pls = decode_strokes(sketch.strokes);
    for (auto& pl : pls)
      for (auto& p : pl) p = transform.apply(p);
    return pls;
  }
};

struct SceneSketch {
  std::string description;
  std::vector<PlacedSketch> placed;  // index == layer, bottom first
  double temperature = 0.0;
  std::uint64_t seed = 0;
  std::string composer_hash;
  std::map<std::string, std::string> sketcher_hashes;
};

/// Affine that sends `e` onto `box` exactly; scales differ per axis.
inline Affine fit_extent_to_box(const Extent& e, const Box& box) {
  if (!e.valid() || !(e.width() > 0) || !(e.height() > 0))
    throw AssemblyError("cannot fit a sketch with zero width or height");
  Affine a;
  a.scale_x = box.w / e.width();
  a.scale_y = box.h / e.height();
  a.translate_x = box.left() - a.scale_x * e.min_x;
  a.translate_y = box.top() - a.scale_y * e.min_y;
  return a;
}

inline PlacedSketch fit_sketch_to_box(const SketchRecord& sketch, const Box& box) {
  if (!box.within_canvas()) throw AssemblyError("target box lies outside the canvas");
  PlacedSketch p;
  p.sketch = sketch;
  p.box = box;
  p.label = sketch.class_label;
  p.transform = fit_extent_to_box(stroke_extent(sketch.strokes), box);
  return p;
}

inline Extent placed_extent(const PlacedSketch& p) { return extent_of(p.polylines()); }

/// Degenerate samples (zero extent on an axis) are redrawn with a derived
/// seed; this many attempts are made before giving up.
inline constexpr std::size_t kSketchAttempts = 16;

inline PlacedSketch sketch_object(const SketcherModel& model, const SceneObject& obj,
                                  double temperature, std::uint64_t seed) {
  const double r = obj.box.h / obj.box.w;
  for (std::size_t attempt = 0; attempt < kSketchAttempts; ++attempt) {
    const std::uint64_t s = attempt == 0 ? seed : derive_seed(seed, attempt);
    SketchRecord rec = sample_sketch(model, r, temperature, s);
    const Extent e = stroke_extent(rec.strokes);
    if (!e.valid() || !(e.width() > 0) || !(e.height() > 0)) continue;
    PlacedSketch p = fit_sketch_to_box(rec, obj.box);
    p.label = obj.label;
    p.requested_ratio = r;
    p.seed = s;
    return p;
  }
  throw AssemblyError("sketcher for '" + obj.label + "' produced only degenerate sketches");
}

/// Object i is drawn with object_seeds[i]. Layers follow generation order.
inline SceneSketch assemble_scene_with_seeds(const LayoutScene& layout,
                                             const SketcherRegistry& registry, double temperature,
                                             const std::vector<std::uint64_t>& object_seeds) {
  if (object_seeds.size() != layout.objects.size())
    throw AssemblyError("one sketch seed per layout object is required");
  std::vector<std::string> labels;
  for (const auto& o : layout.objects) labels.push_back(o.label);
  registry.require_total(labels);  // before any sampling

  SceneSketch scene;
  scene.description = layout.description;
  scene.temperature = temperature;
  scene.seed = layout.seed;
  for (std::size_t i = 0; i < layout.objects.size(); ++i) {
    const SketcherModel& m = registry.get(layout.objects[i].label);
    scene.sketcher_hashes[m.class_label()] = params_hash(m.params());
    PlacedSketch p = sketch_object(m, layout.objects[i], temperature, object_seeds[i]);
    p.layer = i;
    scene.placed.push_back(std::move(p));
  }
  return scene;
}

inline std::vector<std::uint64_t> default_object_seeds(std::size_t n, std::uint64_t seed) {
  std::vector<std::uint64_t> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(derive_seed(seed, 100 + i));
  return out;
}

inline SceneSketch assemble_scene(const LayoutScene& layout, const SketcherRegistry& registry,
                                  double temperature, std::uint64_t seed) {
  return assemble_scene_with_seeds(layout, registry, temperature,
                                   default_object_seeds(layout.objects.size(), seed));
}

}  // namespace scenesketch
