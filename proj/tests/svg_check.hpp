#pragma once

// Reads rendered SVG back with an XML parser that knows nothing about the
// renderer: well-formedness plus per-layer point sets from the path data.

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace svgcheck {

struct ParsedPath {
  int layer = -1;
  std::vector<std::pair<double, double>> points;  // pixels
  bool closed = false;
};

struct ParsedSvg {
  double width = 0, height = 0;
  std::vector<ParsedPath> paths;
  std::string comment;
};

inline ParsedPath parse_path_data(const std::string& d) {
  ParsedPath p;
  std::istringstream in(d);
  std::string tok;
  while (in >> tok) {
    if (tok == "Z") {
      p.closed = true;
      continue;
    }
    if (tok[0] != 'M' && tok[0] != 'L') throw std::runtime_error("unexpected path token " + tok);
    double x = std::stod(tok.substr(1));
    double y;
    if (!(in >> y)) throw std::runtime_error("dangling coordinate in " + d);
    p.points.emplace_back(x, y);
  }
  return p;
}

namespace detail {
inline void walk(const boost::property_tree::ptree& t, ParsedSvg& out) {
  for (const auto& [name, child] : t) {
    if (name == "path") {
      ParsedPath p = parse_path_data(child.get<std::string>("<xmlattr>.d"));
      p.layer = child.get<int>("<xmlattr>.data-layer");
      out.paths.push_back(std::move(p));
    } else if (name == "<xmlcomment>") {
      out.comment = child.data();
    } else if (name != "<xmlattr>") {
      walk(child, out);
    }
  }
}
}  // namespace detail

/// Throws boost::property_tree::xml_parser_error on malformed XML.
inline ParsedSvg parse_svg(const std::string& text) {
  std::istringstream in(text);
  boost::property_tree::ptree tree;
  boost::property_tree::read_xml(in, tree, boost::property_tree::xml_parser::no_concat_text);
  ParsedSvg out;
  const auto& svg = tree.get_child("svg");
  out.width = svg.get<double>("<xmlattr>.width");
  out.height = svg.get<double>("<xmlattr>.height");
  detail::walk(svg, out);
  return out;
}

struct Bounds {
  double min_x = 1e300, max_x = -1e300, min_y = 1e300, max_y = -1e300;
};

/// Extent of each layer's points, in unit canvas coordinates.
inline std::map<int, Bounds> layer_bounds(const ParsedSvg& svg) {
  std::map<int, Bounds> out;
  for (const auto& p : svg.paths) {
    Bounds& b = out[p.layer];
    for (const auto& [x, y] : p.points) {
      b.min_x = std::min(b.min_x, x / svg.width);
      b.max_x = std::max(b.max_x, x / svg.width);
      b.min_y = std::min(b.min_y, y / svg.height);
      b.max_y = std::max(b.max_y, y / svg.height);
    }
  }
  return out;
}

}  // namespace svgcheck
