// SPDX-FileCopyrightText: Copyright (c) 2026 the lpbf-supportopt authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "lpbf/error.hpp"
#include "lpbf/geometry.hpp"
#include "lpbf/interpolation.hpp"

namespace lpbf {

/// Named nodal (double) and element (int) arrays for one output file.
struct VtkFields {
  std::vector<std::pair<std::string, Vector>> point;
  std::vector<std::pair<std::string, std::vector<int>>> cell;
};

/// Legacy ASCII VTK 2.0 unstructured grid of linear triangles (cell type 5).
inline void write_vtk(std::ostream& out, const BuildModel& model, const VtkFields& fields,
                      const std::string& title = "lpbf-supportopt") {
  const int nn = model.node_count();
  const int ne = model.element_count();
  out.precision(17);
  out << "# vtk DataFile Version 2.0\n" << title << "\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  out << "POINTS " << nn << " double\n";
  for (const auto& p : model.nodes) out << p.x << ' ' << p.y << " 0\n";
  out << "CELLS " << ne << ' ' << 4 * ne << '\n';
  for (const auto& el : model.elements) out << "3 " << el[0] << ' ' << el[1] << ' ' << el[2] << '\n';
  out << "CELL_TYPES " << ne << '\n';
  for (int e = 0; e < ne; ++e) out << "5\n";

  if (!fields.point.empty()) {
    out << "POINT_DATA " << nn << '\n';
    for (const auto& [name, values] : fields.point) {
      if (values.size() != nn) throw DimensionError("point field '" + name + "' has the wrong size");
      out << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
      for (Eigen::Index i = 0; i < values.size(); ++i) out << values[i] << '\n';
    }
  }
  if (!fields.cell.empty()) {
    out << "CELL_DATA " << ne << '\n';
    for (const auto& [name, values] : fields.cell) {
      if (static_cast<int>(values.size()) != ne)
        throw DimensionError("cell field '" + name + "' has the wrong size");
      out << "SCALARS " << name << " int 1\nLOOKUP_TABLE default\n";
      for (int v : values) out << v << '\n';
    }
  }
}

inline void write_vtk(const std::filesystem::path& path, const BuildModel& model,
                      const VtkFields& fields, const std::string& title = "lpbf-supportopt") {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  write_vtk(out, model, fields, title);
  if (!out) throw Error("write to '" + path.string() + "' failed");
}

/// Cell data "chi" (sharp material indicator, 1 on the part) and "layer".
inline std::vector<std::pair<std::string, std::vector<int>>> design_cell_data(
    const BuildModel& model, const LevelSetField& field) {
  std::vector<int> chi(model.elements.size());
  for (int e = 0; e < model.element_count(); ++e)
    chi[e] = model.is_part(e) ? 1 : characteristic(element_mean_phi(model, field, e));
  return {{"chi", std::move(chi)}, {"layer", model.layer_of_element}};
}

}  // namespace lpbf
