#pragma once

// Superposition of box interiors on a grid over the unit canvas.

#include <png.h>

#include <cstdio>
#include <filesystem>

#include "scenesketch/eval/overlap.hpp"

namespace scenesketch {

enum class ObjectSlot { kSubject, kObject };

struct Heatmap {
  std::size_t resolution = 0;
  std::vector<double> cells;  // row-major, row 0 at the top

  double at(std::size_t row, std::size_t col) const { return cells[row * resolution + col]; }
  double total() const {
    double s = 0;
    for (double c : cells) s += c;
    return s;
  }
  double max() const { return cells.empty() ? 0.0 : *std::max_element(cells.begin(), cells.end()); }
};

/// Each cell accumulates the fraction of its area covered by every box, so
/// the total mass is the summed box area times resolution^2.
inline Heatmap build_heatmap(const std::vector<LayoutScene>& layouts, ObjectSlot slot,
                             std::size_t resolution) {
  if (resolution == 0) throw EvalError("heatmap resolution must be positive");
  Heatmap h{resolution, std::vector<double>(resolution * resolution, 0.0)};
  const double cell = 1.0 / static_cast<double>(resolution);
  auto covered = [&](double lo, double hi, std::size_t i) {
    const double a = std::max(lo, static_cast<double>(i) * cell);
    const double b = std::min(hi, static_cast<double>(i + 1) * cell);
    return std::max(0.0, b - a) / cell;
  };
  for (const auto& s : layouts) {
    std::size_t idx = slot == ObjectSlot::kSubject ? 0 : 1;
    if (s.relation) idx = slot == ObjectSlot::kSubject ? s.relation->subject : s.relation->object;
    if (idx >= s.objects.size()) continue;
    const Box& b = s.objects[idx].box;
    for (std::size_t r = 0; r < resolution; ++r) {
      const double fy = covered(b.top(), b.bottom(), r);
      if (fy == 0) continue;
      for (std::size_t c = 0; c < resolution; ++c) {
        const double fx = covered(b.left(), b.right(), c);
        if (fx > 0) h.cells[r * resolution + c] += fx * fy;
      }
    }
  }
  return h;
}

inline std::string heatmap_csv(const Heatmap& h) {
  std::string out;
  for (std::size_t r = 0; r < h.resolution; ++r) {
    for (std::size_t c = 0; c < h.resolution; ++c) {
      if (c) out += ",";
      out += format_double(h.at(r, c));
    }
    out += "\n";
  }
  return out;
}

/// 8-bit grayscale, brightest = densest cell. No timestamps or text chunks,
/// so equal grids give equal files.
inline void write_heatmap_png(const Heatmap& h, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  FILE* fp = std::fopen(path.string().c_str(), "wb");
  if (!fp) throw EvalError("cannot open " + path.string() + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw EvalError("libpng failed writing " + path.string());
  }
  png_init_io(png, fp);
  const auto n = static_cast<png_uint_32>(h.resolution);
  png_set_IHDR(png, info, n, n, 8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const double peak = h.max();
  std::vector<png_byte> row(h.resolution);
  for (std::size_t r = 0; r < h.resolution; ++r) {
    for (std::size_t c = 0; c < h.resolution; ++c)
      row[c] = static_cast<png_byte>(peak > 0 ? std::lround(255.0 * h.at(r, c) / peak) : 0);
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

}  // namespace scenesketch
