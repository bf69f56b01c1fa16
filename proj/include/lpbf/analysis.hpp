// SPDX-FileCopyrightText: Copyright (c) 2026 the lpbf-supportopt authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <limits>
#include <string>
#include <vector>

#include "lpbf/adjoint.hpp"
#include "lpbf/error.hpp"
#include "lpbf/geometry.hpp"
#include "lpbf/interpolation.hpp"
#include "lpbf/process.hpp"

namespace lpbf {

/// Sorted nodes of the elements of `layer` that hold material: part elements
/// and designable elements with chi = 1.
inline std::vector<int> laser_domain_nodes(const BuildModel& model, const LevelSetField& field,
                                           int layer) {
  check_stage(model, layer);
  std::vector<int> out;
  for (int e = 0; e < model.element_count(); ++e) {
    if (model.layer_of_element[e] != layer) continue;
    if (model.is_part(e) || characteristic(element_mean_phi(model, field, e)))
      out.insert(out.end(), model.elements[e].begin(), model.elements[e].end());
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

/// max - min of T over `nodes`; 0 for an empty set.
inline double temperature_range(const Vector& T, const std::vector<int>& nodes) {
  if (nodes.empty()) return 0.0;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (int n : nodes) {
    lo = std::min(lo, T[n]);
    hi = std::max(hi, T[n]);
  }
  return hi - lo;
}

inline double max_temperature(const Vector& T, const std::vector<int>& nodes) {
  double hi = -std::numeric_limits<double>::infinity();
  for (int n : nodes) hi = std::max(hi, T[n]);
  return hi;
}

/// Largest temperature difference inside the laser domain at cooling step
/// `step`, taken over the overhang stages.
struct LaserRange {
  double range = 0.0;
  int stage = 0;  ///< stage attaining it
};

inline LaserRange overhang_laser_range(const std::vector<StageHistory>& histories,
                                       const BuildModel& model, const LevelSetField& field,
                                       int step) {
  if (static_cast<int>(histories.size()) != model.layer_count)
    throw DimensionError("laser range needs one history per layer");
  LaserRange out;
  for (int layer : overhang_layers(model)) {
    const StageHistory& h = histories[layer - 1];
    if (step < 1 || step > static_cast<int>(h.cooling.size()))
      throw DimensionError("stage " + std::to_string(layer) + " lacks cooling step " +
                           std::to_string(step));
    const double r = temperature_range(h.cooling[step - 1], laser_domain_nodes(model, field, layer));
    if (out.stage == 0 || r > out.range) out = {r, layer};
  }
  return out;
}

/// Hottest overhang part node against the hottest supported part node of the
/// same layer, at cooling step `step` of that layer's stage.
struct OverhangContrast {
  int stage = 0;
  double arm_max = 0.0;        ///< deg C
  double supported_max = 0.0;  ///< deg C
  [[nodiscard]] double ratio() const { return arm_max / supported_max; }
};

inline OverhangContrast overhang_contrast(const StageHistory& history, const BuildModel& model,
                                          int step) {
  const int layer = history.stage;
  check_stage(model, layer);
  if (step < 1 || step > static_cast<int>(history.cooling.size()))
    throw DimensionError("stage " + std::to_string(layer) + " lacks cooling step " +
                         std::to_string(step));
  const auto over = overhang_mask(model);
  std::vector<std::uint8_t> kind(model.nodes.size(), 0);  // bit 1 arm, bit 2 supported
  for (int e = 0; e < model.element_count(); ++e) {
    if (model.layer_of_element[e] != layer || !model.is_part(e)) continue;
    for (int n : model.elements[e]) kind[n] |= over[e] ? 1 : 2;
  }
  std::vector<int> arm, supported;
  for (int n = 0; n < model.node_count(); ++n) {
    if (kind[n] & 1) arm.push_back(n);
    else if (kind[n] & 2) supported.push_back(n);
  }
  if (arm.empty() || supported.empty())
    throw DimensionError("layer " + std::to_string(layer) +
                         " needs both overhang and supported part elements");
  const Vector& T = history.cooling[step - 1];
  return {layer, max_temperature(T, arm), max_temperature(T, supported)};
}

/// max - min over the part nodes owned by `layer` in a layer-wise composite.
inline double composite_layer_spread(const Vector& composite, const BuildModel& model, int layer) {
  const auto owner = node_layer(model);
  std::vector<int> nodes;
  for (int n : layer_part_nodes(model, layer))
    if (owner[n] == layer) nodes.push_back(n);
  return temperature_range(composite, nodes);
}

}  // namespace lpbf
