// SPDX-FileCopyrightText: Copyright (c) 2026 the lpbf-supportopt authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "lpbf/error.hpp"
#include "lpbf/fem.hpp"
#include "lpbf/geometry.hpp"
#include "lpbf/interpolation.hpp"
#include "lpbf/materials.hpp"
#include "lpbf/parallel.hpp"

namespace lpbf {

/// Temperatures (deg C) of one layer stage: end of heating, then one vector
/// per cooling step j = 1..n.
struct StageHistory {
  int stage = 0;
  Vector heat_end;
  std::vector<Vector> cooling;
};

struct SimulationOptions {
  SolverKind solver = SolverKind::cholesky;
  int threads = 1;
  /// Cooling steps to compute per stage; 0 means t_c / dt_cool.
  int cooling_steps = 0;
};

/// A solved stage together with the data needed to run its adjoint.
struct StageSolution {
  StageHistory history;
  ElementCoeffs coeffs;
  std::shared_ptr<const ImplicitStepper> heating;
  std::shared_ptr<const ImplicitStepper> cooling;
};

/// Layer-by-layer flash-heating simulation on a fixed model. Each stage starts
/// from ambient temperature, is heated in one implicit step of length t_h and
/// then cools with Q = 0 in steps of dt_cool. The build plate is held at T_amb.
class BuildSimulator {
 public:
  BuildSimulator(BuildModel model, const MaterialProps& mat, const ProcessParams& proc,
                 SolverKind solver = SolverKind::cholesky)
      : model_(std::move(model)), mat_(mat), proc_(proc), solver_(solver), assembler_(model_) {
    mat_.validate();
    proc_.validate();
  }

  /// Coefficients and factorized heating/cooling systems of `stage`, without
  /// time stepping.
  [[nodiscard]] StageSolution prepare_stage(const LevelSetField& field, int stage) const {
    check_stage(model_, stage);
    if (field.phi.size() != model_.node_count())
      throw DimensionError("level-set field does not match the mesh");
    try {
      StageSolution out;
      out.history.stage = stage;
      out.coeffs = element_coeffs(model_, field, stage, mat_, proc_);
      const SparseMatrix C = assembler_.assemble(out.coeffs.rho_c, Assembler::Kind::mass);
      const SparseMatrix K = assembler_.assemble(out.coeffs.k, Assembler::Kind::stiffness);
      out.heating = std::make_shared<const ImplicitStepper>(C, K, proc_.t_h, model_.plate_nodes,
                                                            solver_);
      out.cooling = std::make_shared<const ImplicitStepper>(C, K, proc_.dt_cool,
                                                            model_.plate_nodes, solver_);
      return out;
    } catch (const SolverError& e) {
      throw SolverError("stage " + std::to_string(stage) + ": " + e.what());
    }
  }

  [[nodiscard]] StageSolution solve_stage(const LevelSetField& field, int stage,
                                          int cooling_steps = 0) const {
    StageSolution out = prepare_stage(field, stage);
    const int steps = cooling_steps > 0 ? cooling_steps : proc_.n_cool();
    try {
      // Stepped in excess temperature u = T - T_amb with u = 0 on the plate.
      const Vector Q = assemble_Q(model_, field, stage, proc_);
      Vector u = out.heating->step(Vector::Zero(model_.node_count()), Q, 0.0);
      out.history.heat_end = u.array() + proc_.T_amb;
      out.history.cooling.reserve(steps);
      const Vector no_source;
      for (int j = 0; j < steps; ++j) {
        u = out.cooling->step(u, no_source, 0.0);
        out.history.cooling.push_back(u.array() + proc_.T_amb);
      }
      return out;
    } catch (const SolverError& e) {
      throw SolverError("stage " + std::to_string(stage) + ": " + e.what());
    }
  }

  [[nodiscard]] const BuildModel& model() const { return model_; }
  [[nodiscard]] const MaterialProps& material() const { return mat_; }
  [[nodiscard]] const ProcessParams& process() const { return proc_; }
  [[nodiscard]] const Assembler& assembler() const { return assembler_; }
  [[nodiscard]] SolverKind solver() const { return solver_; }

 private:
  BuildModel model_;
  MaterialProps mat_;
  ProcessParams proc_;
  SolverKind solver_;
  Assembler assembler_;
};

inline StageHistory run_stage(const BuildModel& model, const LevelSetField& field,
                              const MaterialProps& mat, const ProcessParams& proc, int stage,
                              const SimulationOptions& options = {}) {
  return BuildSimulator(model, mat, proc, options.solver)
      .solve_stage(field, stage, options.cooling_steps)
      .history;
}

/// All m stages. `order` optionally fixes the sequence in which stages are
/// dispatched; the result is always indexed by stage - 1.
inline std::vector<StageHistory> run_build(const BuildSimulator& sim, const LevelSetField& field,
                                           const SimulationOptions& options = {},
                                           std::span<const int> order = {}) {
  const int m = sim.model().layer_count;
  std::vector<int> sequence(m);
  if (order.empty()) {
    std::iota(sequence.begin(), sequence.end(), 1);
  } else {
    if (static_cast<int>(order.size()) != m) throw DimensionError("stage order must list every stage");
    sequence.assign(order.begin(), order.end());
  }
  std::vector<StageHistory> out(m);
  parallel_for(m, options.threads, [&](int idx) {
    const int stage = sequence[idx];
    out[stage - 1] = sim.solve_stage(field, stage, options.cooling_steps).history;
  });
  return out;
}

inline std::vector<StageHistory> run_build(const BuildModel& model, const LevelSetField& field,
                                           const MaterialProps& mat, const ProcessParams& proc,
                                           const SimulationOptions& options = {},
                                           std::span<const int> order = {}) {
  return run_build(BuildSimulator(model, mat, proc, options.solver), field, options, order);
}

enum class CompositeReduction {
  snapshot,  ///< each node shows its own layer's stage at cooling step j
  sum,       ///< T_amb plus the summed excess of every stage whose laser layer touches the node
};

/// Layer-wise composite at cooling step j (1-based): every layer shown at the
/// moment it has cooled for j steps after its own irradiation.
inline Vector layerwise_cooldown_field(const std::vector<StageHistory>& histories,
                                       const BuildModel& model, const ProcessParams& proc,
                                       int step,
                                       CompositeReduction reduction = CompositeReduction::snapshot) {
  if (static_cast<int>(histories.size()) != model.layer_count)
    throw DimensionError("composite needs one history per layer");
  if (step < 1 || step > proc.n_cool())
    throw std::out_of_range("cooling step " + std::to_string(step) + " outside 1..n_cool");
  for (const auto& h : histories)
    if (static_cast<int>(h.cooling.size()) < step)
      throw DimensionError("stage " + std::to_string(h.stage) + " has fewer cooling steps than requested");

  Vector out(model.node_count());
  if (reduction == CompositeReduction::snapshot) {
    const auto layer = node_layer(model);
    for (int n = 0; n < model.node_count(); ++n)
      out[n] = histories[layer[n] - 1].cooling[step - 1][n];
    return out;
  }
  out.setConstant(proc.T_amb);
  std::vector<std::uint8_t> touched(model.nodes.size());
  for (int i = 1; i <= model.layer_count; ++i) {
    std::fill(touched.begin(), touched.end(), std::uint8_t{0});
    for (int e = 0; e < model.element_count(); ++e)
      if (model.layer_of_element[e] == i)
        for (int n : model.elements[e]) touched[n] = 1;
    const Vector& T = histories[i - 1].cooling[step - 1];
    for (int n = 0; n < model.node_count(); ++n)
      if (touched[n]) out[n] += T[n] - proc.T_amb;
  }
  return out;
}

}  // namespace lpbf
