// SPDX-FileCopyrightText: Copyright (c) 2026 the lpbf-supportopt authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "lpbf/error.hpp"

namespace lpbf {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

using ElementNodes = std::array<int, 3>;

/// Build chamber discretized as a structured grid of right triangles (two per
/// cell), partitioned into horizontal layers of fixed thickness.
///
/// Node (c, r) has index r * (nx + 1) + c. Cell (c, r) owns elements
/// 2 * (r * nx + c) and 2 * (r * nx + c) + 1. Layers are numbered 1..m from
/// the build plate (y = 0) upwards. Lengths are in mm.
struct BuildModel {
  double width = 0.0;
  double height = 0.0;
  int nx = 0;
  int ny = 0;
  double layer_thickness = 0.0;
  int layer_count = 0;

  std::vector<Point2> nodes;
  std::vector<ElementNodes> elements;
  std::vector<int> layer_of_element;
  std::vector<std::uint8_t> part_mask;
  std::vector<int> plate_nodes;
  /// Nodal weights of the element mean of phi. A designable element averages
  /// over its nodes that touch no part element; empty means 1/3 each.
  std::vector<std::array<double, 3>> mean_weights;

  [[nodiscard]] int node_count() const { return static_cast<int>(nodes.size()); }
  [[nodiscard]] int element_count() const { return static_cast<int>(elements.size()); }
  [[nodiscard]] double cell_width() const { return width / nx; }
  [[nodiscard]] double cell_height() const { return height / ny; }
  [[nodiscard]] int rows_per_layer() const { return ny / layer_count; }
  [[nodiscard]] bool is_part(int e) const { return part_mask[e] != 0; }
  [[nodiscard]] int cell_column(int e) const { return (e / 2) % nx; }
  [[nodiscard]] int cell_row(int e) const { return (e / 2) / nx; }
  [[nodiscard]] int node_index(int c, int r) const { return r * (nx + 1) + c; }
  [[nodiscard]] int first_element_of_cell(int c, int r) const { return 2 * (r * nx + c); }

  [[nodiscard]] double area(int e) const {
    const auto& n = elements[e];
    const Point2& a = nodes[n[0]];
    const Point2& b = nodes[n[1]];
    const Point2& c = nodes[n[2]];
    return 0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y));
  }

  [[nodiscard]] std::array<double, 3> mean_weight(int e) const {
    if (mean_weights.empty()) return {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
    return mean_weights[e];
  }

  [[nodiscard]] Point2 centroid(int e) const {
    const auto& n = elements[e];
    return {(nodes[n[0]].x + nodes[n[1]].x + nodes[n[2]].x) / 3.0,
            (nodes[n[0]].y + nodes[n[1]].y + nodes[n[2]].y) / 3.0};
  }
};

// ---------------------------------------------------------------------------
// Part geometries

/// Vertical column standing on the plate with a horizontal arm at its top,
/// sticking out to the right. The arm is the overhang.
struct OverhangBeam {
  double column_x = 2.0;
  double column_width = 5.0;
  double height = 25.0;
  double arm_length = 16.0;
  double arm_thickness = 4.0;

  [[nodiscard]] bool contains(double x, double y) const {
    const double arm_x0 = column_x + column_width;
    const bool in_column = x >= column_x && x <= arm_x0 && y >= 0.0 && y <= height;
    const bool in_arm = x >= arm_x0 && x <= arm_x0 + arm_length &&
                        y >= height - arm_thickness && y <= height;
    return in_column || in_arm;
  }
  [[nodiscard]] std::array<double, 4> bounds() const {
    return {column_x, 0.0, column_x + column_width + arm_length, height};
  }
};

/// Beam resting on two end posts: a half-beam span whose underside overhangs
/// between the posts.
struct MbbBeam {
  double x0 = 1.0;
  double x1 = 24.0;
  double beam_bottom = 19.0;
  double beam_thickness = 4.0;
  double post_width = 3.0;

  [[nodiscard]] bool contains(double x, double y) const {
    if (x < x0 || x > x1 || y < 0.0) return false;
    if (y >= beam_bottom && y <= beam_bottom + beam_thickness) return true;
    if (y > beam_bottom) return false;
    return x <= x0 + post_width || x >= x1 - post_width;
  }
  [[nodiscard]] std::array<double, 4> bounds() const {
    return {x0, 0.0, x1, beam_bottom + beam_thickness};
  }
};

/// Occupancy grid placed in the chamber's top-left corner; row 0 is the top.
struct RasterMask {
  int rows = 0;
  int cols = 0;
  double cell_size = 0.0;
  std::vector<std::uint8_t> cells;  // row-major

  [[nodiscard]] bool at(int r, int c) const { return cells[static_cast<size_t>(r) * cols + c] != 0; }
  [[nodiscard]] int count() const {
    return static_cast<int>(std::count(cells.begin(), cells.end(), std::uint8_t{1}));
  }
};

enum class PartKind { overhang_beam, mbb_like, raster_mask };

struct PartGeometry {
  std::variant<OverhangBeam, MbbBeam, RasterMask> shape;

  [[nodiscard]] PartKind kind() const { return static_cast<PartKind>(shape.index()); }
};

/// Reads "rows cols cell_size_mm" followed by rows x cols entries of 0/1.
inline RasterMask read_raster_mask(std::istream& in) {
  RasterMask mask;
  if (!(in >> mask.rows >> mask.cols >> mask.cell_size))
    throw ConfigError("raster mask: header must be 'rows cols cell_size_mm'");
  if (mask.rows <= 0 || mask.cols <= 0 || !(mask.cell_size > 0.0))
    throw ConfigError("raster mask: rows, cols and cell_size must be positive");
  mask.cells.resize(static_cast<size_t>(mask.rows) * mask.cols);
  for (auto& cell : mask.cells) {
    int v = -1;
    if (!(in >> v)) throw ConfigError("raster mask: fewer cells than rows*cols");
    if (v != 0 && v != 1) throw ConfigError("raster mask: cells must be 0 or 1");
    cell = static_cast<std::uint8_t>(v);
  }
  std::string extra;
  if (in >> extra) throw ConfigError("raster mask: more cells than rows*cols");
  return mask;
}

inline RasterMask read_raster_mask(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("raster mask: cannot open '" + path + "'");
  return read_raster_mask(static_cast<std::istream&>(in));
}

// ---------------------------------------------------------------------------
// Mesh construction

namespace detail {

inline bool is_integer_ratio(double num, double den, int& out) {
  const double q = num / den;
  const double r = std::round(q);
  if (r < 1.0 || std::abs(q - r) > 1e-9 * std::max(1.0, r)) return false;
  out = static_cast<int>(r);
  return true;
}

}  // namespace detail

inline BuildModel build_mesh(double chamber_width, double chamber_height, int nx, int ny,
                             double layer_thickness) {
  if (!(chamber_width > 0.0) || !(chamber_height > 0.0) || !(layer_thickness > 0.0))
    throw DimensionError("chamber dimensions and layer thickness must be positive");
  if (nx < 1 || ny < 1) throw DimensionError("nx and ny must be at least 1");
  int m = 0;
  if (!detail::is_integer_ratio(chamber_height, layer_thickness, m))
    throw DimensionError("chamber height " + std::to_string(chamber_height) +
                         " is not a multiple of the layer thickness " +
                         std::to_string(layer_thickness));
  if (ny % m != 0)
    throw DimensionError(std::to_string(ny) + " element rows do not align with " +
                         std::to_string(m) + " layers");

  BuildModel model;
  model.width = chamber_width;
  model.height = chamber_height;
  model.nx = nx;
  model.ny = ny;
  model.layer_thickness = layer_thickness;
  model.layer_count = m;

  const double hx = chamber_width / nx;
  const double hy = chamber_height / ny;
  model.nodes.reserve(static_cast<size_t>(nx + 1) * (ny + 1));
  for (int r = 0; r <= ny; ++r)
    for (int c = 0; c <= nx; ++c) model.nodes.push_back({c * hx, r * hy});

  model.elements.reserve(2 * static_cast<size_t>(nx) * ny);
  for (int r = 0; r < ny; ++r) {
    for (int c = 0; c < nx; ++c) {
      const int n0 = model.node_index(c, r);
      const int n1 = model.node_index(c + 1, r);
      const int n2 = model.node_index(c + 1, r + 1);
      const int n3 = model.node_index(c, r + 1);
      model.elements.push_back({n0, n1, n2});
      model.elements.push_back({n0, n2, n3});
    }
  }

  model.layer_of_element.resize(model.elements.size());
  for (int e = 0; e < model.element_count(); ++e) {
    const int layer = static_cast<int>(std::floor(model.centroid(e).y / layer_thickness)) + 1;
    model.layer_of_element[e] = std::clamp(layer, 1, m);
  }
  model.part_mask.assign(model.elements.size(), 0);
  for (int c = 0; c <= nx; ++c) model.plate_nodes.push_back(model.node_index(c, 0));
  return model;
}

inline void validate_part(const BuildModel& model, const PartGeometry& part) {
  constexpr double tol = 1e-9;
  const auto check_bounds = [&](const std::array<double, 4>& b) {
    if (b[0] < -tol || b[1] < -tol || b[2] > model.width + tol || b[3] > model.height + tol ||
        b[2] < b[0] || b[3] < b[1])
      throw DimensionError("part geometry extends outside the build chamber");
  };
  std::visit(
      [&](const auto& shape) {
        using T = std::decay_t<decltype(shape)>;
        if constexpr (std::is_same_v<T, RasterMask>) {
          check_bounds({0.0, model.height - shape.rows * shape.cell_size, shape.cols * shape.cell_size,
                        model.height});
          int ratio = 0;
          if (!detail::is_integer_ratio(shape.cell_size, model.cell_width(), ratio) ||
              !detail::is_integer_ratio(shape.cell_size, model.cell_height(), ratio))
            throw DimensionError("raster cell size must be a whole multiple of the mesh cell size");
        } else {
          check_bounds(shape.bounds());
        }
      },
      part.shape);
}

inline std::vector<std::uint8_t> part_node_mask(const BuildModel& model) {
  std::vector<std::uint8_t> mask(model.nodes.size(), 0);
  for (int e = 0; e < model.element_count(); ++e)
    if (model.is_part(e))
      for (int n : model.elements[e]) mask[n] = 1;
  return mask;
}

/// Fills `mean_weights` from the current part mask. A triangle in a concave
/// corner with all three nodes on the part keeps equal weights and so stays
/// solid.
inline void set_mean_weights(BuildModel& model) {
  const auto part_node = part_node_mask(model);
  model.mean_weights.assign(model.elements.size(), {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0});
  for (int e = 0; e < model.element_count(); ++e) {
    if (model.is_part(e)) continue;
    const auto& n = model.elements[e];
    const int free = !part_node[n[0]] + !part_node[n[1]] + !part_node[n[2]];
    if (free == 3 || free == 0) continue;
    for (int k = 0; k < 3; ++k) model.mean_weights[e][k] = part_node[n[k]] ? 0.0 : 1.0 / free;
  }
}

/// Marks every element whose centroid lies inside the part.
inline BuildModel apply_part_mask(BuildModel model, const PartGeometry& part) {
  validate_part(model, part);
  for (int e = 0; e < model.element_count(); ++e) {
    const Point2 p = model.centroid(e);
    const bool inside = std::visit(
        [&](const auto& shape) -> bool {
          using T = std::decay_t<decltype(shape)>;
          if constexpr (std::is_same_v<T, RasterMask>) {
            const int c = static_cast<int>(std::floor(p.x / shape.cell_size));
            const int r = static_cast<int>(std::floor((model.height - p.y) / shape.cell_size));
            return r >= 0 && r < shape.rows && c >= 0 && c < shape.cols && shape.at(r, c);
          } else {
            return shape.contains(p.x, p.y);
          }
        },
        part.shape);
    model.part_mask[e] = inside ? 1 : 0;
  }
  set_mean_weights(model);
  return model;
}

inline void check_stage(const BuildModel& model, int stage) {
  if (stage < 1 || stage > model.layer_count)
    throw std::out_of_range("stage " + std::to_string(stage) + " outside 1.." +
                            std::to_string(model.layer_count));
}

/// Elements of the active domain at `stage`: every layer up to and including it.
inline std::vector<int> active_elements(const BuildModel& model, int stage) {
  check_stage(model, stage);
  std::vector<int> out;
  for (int e = 0; e < model.element_count(); ++e)
    if (model.layer_of_element[e] <= stage) out.push_back(e);
  return out;
}

// ---------------------------------------------------------------------------
// Derived node/element sets

/// 1 for every node that touches a part element.
inline int designable_node_count(const BuildModel& model) {
  const auto mask = part_node_mask(model);
  return static_cast<int>(std::count(mask.begin(), mask.end(), std::uint8_t{0}));
}

/// Sorted nodes of the part elements that belong to `layer`.
inline std::vector<int> layer_part_nodes(const BuildModel& model, int layer) {
  std::vector<int> out;
  for (int e = 0; e < model.element_count(); ++e)
    if (model.layer_of_element[e] == layer && model.is_part(e))
      out.insert(out.end(), model.elements[e].begin(), model.elements[e].end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

/// Layer owning each node for layer-wise composites. A node on the interface
/// between layers i and i+1 belongs to layer i (it is the top surface of i).
inline std::vector<int> node_layer(const BuildModel& model) {
  std::vector<int> out(model.nodes.size());
  for (int n = 0; n < model.node_count(); ++n) {
    const int layer = static_cast<int>(std::ceil(model.nodes[n].y / model.layer_thickness - 1e-9));
    out[n] = std::clamp(layer, 1, model.layer_count);
  }
  return out;
}

/// Part elements without an unbroken column of part cells beneath them down
/// to the plate.
inline std::vector<std::uint8_t> overhang_mask(const BuildModel& model) {
  std::vector<std::uint8_t> cell_part(static_cast<size_t>(model.nx) * model.ny, 0);
  for (int r = 0; r < model.ny; ++r)
    for (int c = 0; c < model.nx; ++c) {
      const int e = model.first_element_of_cell(c, r);
      cell_part[r * model.nx + c] = model.is_part(e) && model.is_part(e + 1);
    }
  std::vector<std::uint8_t> out(model.elements.size(), 0);
  for (int c = 0; c < model.nx; ++c) {
    bool supported = true;
    for (int r = 0; r < model.ny; ++r) {
      const int e = model.first_element_of_cell(c, r);
      for (int k = 0; k < 2; ++k)
        if (model.is_part(e + k) && !supported) out[e + k] = 1;
      supported = supported && cell_part[r * model.nx + c];
    }
  }
  return out;
}

/// Layers that contain at least one overhang element, ascending.
inline std::vector<int> overhang_layers(const BuildModel& model) {
  const auto mask = overhang_mask(model);
  std::vector<int> layers;
  for (int e = 0; e < model.element_count(); ++e)
    if (mask[e]) layers.push_back(model.layer_of_element[e]);
  std::sort(layers.begin(), layers.end());
  layers.erase(std::unique(layers.begin(), layers.end()), layers.end());
  return layers;
}

}  // namespace lpbf
