#pragma once

#include <cstdio>

#include "scenesketch/render/assemble.hpp"

namespace scenesketch {

inline constexpr int kCanvasPixels = 512;

namespace detail {

inline std::string px(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v * kCanvasPixels);
  std::string s = buf;
  if (s == "-0.0000") s = "0.0000";
  return s;
}

// "--" may not appear inside an XML comment.
inline std::string comment_safe(std::string s) {
  for (std::size_t i = s.find("--"); i != std::string::npos; i = s.find("--", i)) s.replace(i, 2, "- -");
  if (!s.empty() && s.back() == '-') s += ' ';
  return s;
}

inline bool closed(const Polyline& pl) {
  return pl.size() >= 3 && std::abs(pl.front().x - pl.back().x) < 1e-9 &&
         std::abs(pl.front().y - pl.back().y) < 1e-9;
}

}  // namespace detail

/// Path data for one polyline in canvas pixels; closed loops end in Z.
inline std::string polyline_path_data(const Polyline& pl) {
  std::string d;
  const bool closed = detail::closed(pl);
  const std::size_t n = closed ? pl.size() - 1 : pl.size();
  for (std::size_t i = 0; i < n; ++i) {
    d += (i == 0 ? "M" : " L");
    d += detail::px(pl[i].x) + " " + detail::px(pl[i].y);
  }
  if (closed) d += " Z";
  return d;
}

inline Json scene_provenance(const SceneSketch& scene) {
  Json seeds = Json::array();
  for (const auto& p : scene.placed) seeds.push_back(p.seed);
  return {{"description", scene.description}, {"layout_seed", scene.seed},
          {"object_seeds", seeds},            {"temperature", scene.temperature},
          {"composer", scene.composer_hash},  {"sketchers", scene.sketcher_hashes}};
}

/// Pure function of the scene: same scene, same bytes.
inline std::string render_svg(const SceneSketch& scene) {
  const std::string size = std::to_string(kCanvasPixels);
  std::string out = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" + size +
         "\" height=\"" + size + "\" viewBox=\"0 0 " + size + " " + size + "\">\n";
  out += "<!-- scenesketch " + detail::comment_safe(scene_provenance(scene).dump()) + " -->\n";
  out += "<rect width=\"" + size + "\" height=\"" + size + "\" fill=\"white\"/>\n";
  out += "<g fill=\"none\" stroke=\"black\" stroke-width=\"2\" stroke-linecap=\"round\" "
         "stroke-linejoin=\"round\">\n";
  for (const auto& p : scene.placed) {
    for (const auto& pl : p.polylines()) {
      if (pl.size() < 2) continue;
      out += "<path data-layer=\"" + std::to_string(p.layer) + "\" d=\"" + polyline_path_data(pl) +
             "\"/>\n";
    }
  }
  out += "</g>\n</svg>\n";
  return out;
}

/// Flattened polylines for clients that draw on their own canvas.
inline Json scene_polylines_json(const SceneSketch& scene) {
  Json objs = Json::array();
  for (const auto& p : scene.placed) {
    Json pls = Json::array();
    for (const auto& pl : p.polylines()) {
      Json pts = Json::array();
      for (const auto& pt : pl) pts.push_back({pt.x, pt.y});
      pls.push_back(pts);
    }
    objs.push_back({{"layer", p.layer},
                    {"class", p.label},
                    {"box", box_to_json(p.box)},
                    {"requested_ratio", p.requested_ratio},
                    {"achieved_ratio", p.sketch.aspect_ratio},
                    {"seed", p.seed},
                    {"polylines", pls}});
  }
  return {{"description", scene.description}, {"objects", objs}};
}

}  // namespace scenesketch
