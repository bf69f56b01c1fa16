// SPDX-FileCopyrightText: Copyright (c) 2026 the lpbf-supportopt authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/SparseCholesky>

#include "lpbf/error.hpp"
#include "lpbf/fem.hpp"
#include "lpbf/geometry.hpp"
#include "lpbf/interpolation.hpp"

namespace lpbf {

/// Parameters of the reaction-diffusion level-set evolution.
struct UpdateParams {
  double tau = 1e-4;  ///< regularization strength
  double D = 0.8;     ///< step coefficient
  double ds = 1.0;    ///< fictitious time step

  void validate() const {
    if (!(tau > 0.0)) throw ConfigError("optimization.tau: must be > 0");
    if (!(D > 0.0)) throw ConfigError("optimization.D: must be > 0");
    if (!(ds > 0.0)) throw ConfigError("optimization.ds: must be > 0");
  }

  bool operator==(const UpdateParams&) const = default;
};

/// Uniform field `value` on designable nodes, +1 on every node of the part.
inline LevelSetField initial_field(const BuildModel& model, double value) {
  if (!(value >= -1.0 && value <= 1.0))
    throw ConfigError("optimization.initial_phi: must lie in [-1, 1]");
  LevelSetField field{Vector::Constant(model.node_count(), value)};
  const auto part = part_node_mask(model);
  for (int n = 0; n < model.node_count(); ++n)
    if (part[n]) field.phi[n] = 1.0;
  return field;
}

/// Clamps to [-1, 1] and pins part nodes to +1.
inline void enforce_bounds(const std::vector<std::uint8_t>& part_nodes, LevelSetField& field) {
  for (Eigen::Index n = 0; n < field.phi.size(); ++n)
    field.phi[n] = part_nodes[n] ? 1.0 : std::clamp(field.phi[n], -1.0, 1.0);
}

/// Semi-implicit reaction-diffusion update
///   (M/ds + Y) phi+ = M phi/ds + D M F',  Y = tau D int BᵀB,
/// with F' the negated sensitivity normalized by its largest magnitude and
/// natural (zero-flux) conditions on the whole chamber boundary. The system
/// matrix depends only on the mesh and is factorized once.
class LevelSetUpdater {
 public:
  LevelSetUpdater(const BuildModel& model, const UpdateParams& params)
      : params_(params), part_nodes_(part_node_mask(model)) {
    params.validate();
    const Assembler assembler(model);
    const std::vector<double> ones(model.elements.size(), 1.0);
    const std::vector<double> reg(model.elements.size(), params.tau * params.D);
    M_ = assembler.assemble(ones, Assembler::Kind::mass);
    const SparseMatrix system =
        M_ / params.ds + assembler.assemble(reg, Assembler::Kind::stiffness);
    llt_.compute(system);
    if (llt_.info() != Eigen::Success)
      throw SolverError("level-set update system could not be factorized");
  }

  [[nodiscard]] LevelSetField update(const LevelSetField& field,
                                     const SensitivityField& sens) const {
    if (sens.dphi.size() != field.phi.size())
      throw SolverError("sensitivity and level-set field sizes differ");
    const double scale = sens.dphi.cwiseAbs().maxCoeff();
    Vector descent = Vector::Zero(field.phi.size());
    if (scale > 0.0) descent = -sens.dphi / scale;
    return advance(field, descent);
  }

  /// Same step with F' given directly, without normalization.
  [[nodiscard]] LevelSetField advance(const LevelSetField& field, const Vector& descent) const {
    if (descent.size() != field.phi.size())
      throw SolverError("descent direction and level-set field sizes differ");
    const Vector rhs = M_ * (field.phi / params_.ds + params_.D * descent);
    LevelSetField out{llt_.solve(rhs)};
    if (llt_.info() != Eigen::Success || !out.phi.allFinite())
      throw SolverError("level-set update solve failed");
    enforce_bounds(part_nodes_, out);
    return out;
  }

  [[nodiscard]] const SparseMatrix& mass() const { return M_; }
  [[nodiscard]] const UpdateParams& params() const { return params_; }

 private:
  UpdateParams params_;
  std::vector<std::uint8_t> part_nodes_;
  SparseMatrix M_;
  Eigen::SimplicialLLT<SparseMatrix> llt_;
};

inline LevelSetField update(const LevelSetField& field, const SensitivityField& sens,
                            const UpdateParams& params, const BuildModel& model) {
  return LevelSetUpdater(model, params).update(field, sens);
}

struct VolumeMeasure {
  double area = 0.0;             ///< material area outside the part, mm^2
  double designable_area = 0.0;  ///< chamber area outside the part, mm^2
  double fraction = 0.0;         ///< area / designable_area (0 if nothing is designable)
};

/// Sharp material area over the non-part elements, using the element-mean
/// level-set value.
inline VolumeMeasure volume(const LevelSetField& field, const BuildModel& model) {
  VolumeMeasure v;
  for (int e = 0; e < model.element_count(); ++e) {
    if (model.is_part(e)) continue;
    const double a = model.area(e);
    v.designable_area += a;
    v.area += a * characteristic(element_mean_phi(model, field, e));
  }
  v.fraction = v.designable_area > 0.0 ? v.area / v.designable_area : 0.0;
  return v;
}

}  // namespace lpbf
