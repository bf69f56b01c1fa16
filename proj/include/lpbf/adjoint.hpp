// SPDX-FileCopyrightText: Copyright (c) 2026 the lpbf-supportopt authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "lpbf/error.hpp"
#include "lpbf/fem.hpp"
#include "lpbf/geometry.hpp"
#include "lpbf/interpolation.hpp"
#include "lpbf/materials.hpp"
#include "lpbf/parallel.hpp"
#include "lpbf/process.hpp"

namespace lpbf {

/// Heat-dissipation objective: sum over stages i and cooling steps j <= n_obj
/// of (T_i^j - T_amb)^2 dt over the nodes of the part elements in layer i.
/// Units K^2 s.
struct ObjectiveValue {
  double F = 0.0;
  std::vector<double> per_stage;
};

/// Which design dependencies enter the sensitivity.
enum class SensitivityMode {
  /// Adjoint over the cooling residuals only; the heating step, the laser
  /// layer and not-yet-active layers are treated as design independent.
  cooling_only,
  /// Exact gradient of the discrete objective: adds the heating adjoint, the
  /// flux dependence and every designable element of every layer.
  full,
};

inline double stage_objective(const StageHistory& history, const std::vector<int>& qualifying,
                              const ProcessParams& proc) {
  if (static_cast<int>(history.cooling.size()) < proc.n_obj)
    throw DimensionError("stage " + std::to_string(history.stage) + " holds " +
                         std::to_string(history.cooling.size()) +
                         " cooling steps, objective needs " + std::to_string(proc.n_obj));
  double f = 0.0;
  for (int j = 0; j < proc.n_obj; ++j) {
    const Vector& T = history.cooling[j];
    double sum = 0.0;
    for (int n : qualifying) {
      const double excess = T[n] - proc.T_amb;
      sum += excess * excess;
    }
    f += sum * proc.dt_cool;
  }
  return f;
}

inline ObjectiveValue objective(const std::vector<StageHistory>& histories,
                                const BuildModel& model, const ProcessParams& proc) {
  if (static_cast<int>(histories.size()) != model.layer_count)
    throw DimensionError("objective needs one history per layer");
  ObjectiveValue out;
  out.per_stage.resize(histories.size());
  for (int i = 1; i <= model.layer_count; ++i) {
    out.per_stage[i - 1] = stage_objective(histories[i - 1], layer_part_nodes(model, i), proc);
    out.F += out.per_stage[i - 1];
  }
  if (!std::isfinite(out.F)) throw NumericsError("objective is not finite");
  return out;
}

/// Adjoint states of one stage: lambda[j - 1] for cooling step j = 1..n_obj,
/// plus the heating-step adjoint in `full` mode (empty otherwise).
struct StageAdjoint {
  int stage = 0;
  std::vector<Vector> lambda;
  Vector heating;
};

/// Backward recursion
///   A lambda_n = -dF/dT_n,  A lambda_j = -dF/dT_j + (C/dt) lambda_{j+1},
/// with A = C/dt + K the (symmetric) cooling matrix and
/// dF/dT_j = 2 (T_j - T_amb) dt on the qualifying nodes. Steps past n_obj
/// carry no load, so their adjoints vanish and the recursion starts at n_obj.
inline StageAdjoint solve_adjoint_stage(const StageSolution& solution, const BuildModel& model,
                                        const ProcessParams& proc,
                                        SensitivityMode mode = SensitivityMode::cooling_only) {
  const StageHistory& history = solution.history;
  const int n = proc.n_obj;
  if (static_cast<int>(history.cooling.size()) < n)
    throw DimensionError("adjoint needs at least n_obj cooling steps");
  const auto qualifying = layer_part_nodes(model, history.stage);
  const double dt = proc.dt_cool;

  StageAdjoint adj;
  adj.stage = history.stage;
  adj.lambda.resize(n);
  for (int j = n; j >= 1; --j) {
    Vector rhs = j < n ? solution.cooling->apply_capacity(adj.lambda[j])
                       : Vector::Zero(model.node_count());
    const Vector& T = history.cooling[j - 1];
    for (int node : qualifying) rhs[node] -= 2.0 * (T[node] - proc.T_amb) * dt;
    try {
      adj.lambda[j - 1] = solution.cooling->solve_homogeneous(rhs);
    } catch (const SolverError& e) {
      throw SolverError("adjoint stage " + std::to_string(history.stage) + " step " +
                        std::to_string(j) + ": " + e.what());
    }
  }
  if (mode == SensitivityMode::full) {
    try {
      adj.heating = solution.heating->solve_homogeneous(solution.cooling->apply_capacity(adj.lambda[0]));
    } catch (const SolverError& e) {
      throw SolverError("adjoint stage " + std::to_string(history.stage) + " heating: " + e.what());
    }
  }
  return adj;
}

/// Same as above for a stage given only by its history; the systems are
/// rebuilt from the design.
inline StageAdjoint solve_adjoint_stage(const BuildModel& model, const LevelSetField& field,
                                        const MaterialProps& mat, const ProcessParams& proc,
                                        int stage, const StageHistory& history,
                                        SensitivityMode mode = SensitivityMode::cooling_only,
                                        SolverKind solver = SolverKind::cholesky) {
  if (history.stage != stage) throw DimensionError("history belongs to another stage");
  StageSolution solution = BuildSimulator(model, mat, proc, solver).prepare_stage(field, stage);
  solution.history = history;
  return solve_adjoint_stage(solution, model, proc, mode);
}

/// Elements whose design dependence enters the stage sensitivity.
inline bool sensitivity_element(const BuildModel& model, int e, int stage, SensitivityMode mode) {
  if (model.is_part(e)) return false;
  return mode == SensitivityMode::full || model.layer_of_element[e] < stage;
}

/// Adds the stage's term  sum_j lambda_jᵀ dR_j/dPhi  (plus the heating terms in
/// `full` mode) to `out`. Element coefficients depend on the mean of their three
/// nodal values, so every node receives a third of the element derivative.
inline void accumulate_stage_sensitivity(const BuildModel& model, const Assembler& assembler,
                                         const LevelSetField& field, const MaterialProps& mat,
                                         const ProcessParams& proc, const StageHistory& history,
                                         const StageAdjoint& adj, SensitivityMode mode,
                                         Vector& out) {
  const int stage = history.stage;
  const double rc = mat.volumetric_heat_capacity();
  const double dt = proc.dt_cool;
  const bool with_heating = mode == SensitivityMode::full && adj.heating.size() > 0;
  for (int e = 0; e < model.element_count(); ++e) {
    if (!sensitivity_element(model, e, stage, mode)) continue;
    const double phi_mean = element_mean_phi(model, field, e);
    const double ds = property_scale_derivative(model, phi_mean, e, stage, proc);
    if (ds == 0.0) continue;
    const auto& nodes = model.elements[e];
    const Eigen::Matrix3d& Mu = assembler.unit_mass(e);
    const Eigen::Matrix3d& Ku = assembler.unit_stiffness(e);

    Eigen::Vector3d u_prev = gather(history.heat_end, nodes).array() - proc.T_amb;
    double acc = 0.0;
    for (size_t j = 0; j < adj.lambda.size(); ++j) {
      const Eigen::Vector3d u = gather(history.cooling[j], nodes).array() - proc.T_amb;
      const Eigen::Vector3d lam = gather(adj.lambda[j], nodes);
      acc += lam.dot(rc / dt * (Mu * (u - u_prev)) + mat.k * (Ku * u));
      u_prev = u;
    }
    double flux_term = 0.0;
    if (with_heating) {
      const Eigen::Vector3d u0 = gather(history.heat_end, nodes).array() - proc.T_amb;
      const Eigen::Vector3d mu = gather(adj.heating, nodes);
      acc += mu.dot(rc / proc.t_h * (Mu * u0) + mat.k * (Ku * u0));
      if (model.layer_of_element[e] == stage)
        flux_term = proc.q * extended_factor_derivative(phi_mean, proc.w_heaviside, proc.d_void) *
                    model.area(e) / 3.0 * mu.sum();
    }
    const double contribution = ds * acc - flux_term;
    const auto w = model.mean_weight(e);
    for (int k = 0; k < 3; ++k) out[nodes[k]] += contribution * w[k];
  }
}

inline void zero_part_nodes(const BuildModel& model, Vector& v) {
  const auto part = part_node_mask(model);
  for (int n = 0; n < model.node_count(); ++n)
    if (part[n]) v[n] = 0.0;
}

/// Nodal dF/dPhi over all stages; zero on part nodes.
inline SensitivityField assemble_sensitivity(const BuildModel& model, const LevelSetField& field,
                                             const MaterialProps& mat, const ProcessParams& proc,
                                             const std::vector<StageHistory>& histories,
                                             const std::vector<StageAdjoint>& adjoints,
                                             SensitivityMode mode = SensitivityMode::cooling_only) {
  if (histories.size() != adjoints.size())
    throw DimensionError("one adjoint per stage history is required");
  const Assembler assembler(model);
  SensitivityField out{Vector::Zero(model.node_count())};
  for (size_t i = 0; i < histories.size(); ++i)
    accumulate_stage_sensitivity(model, assembler, field, mat, proc, histories[i], adjoints[i],
                                 mode, out.dphi);
  zero_part_nodes(model, out.dphi);
  return out;
}

struct EvaluationOptions {
  int threads = 1;
  SensitivityMode mode = SensitivityMode::cooling_only;
  bool with_sensitivity = true;
  /// Cooling steps per stage; 0 computes only the n_obj the objective needs.
  int cooling_steps = 0;
  bool keep_histories = false;
};

struct DesignEvaluation {
  ObjectiveValue objective;
  SensitivityField sensitivity;
  std::vector<StageHistory> histories;  ///< filled when keep_histories is set
};

/// Forward, objective and adjoint sensitivity in one pass over the stages.
/// Each stage reuses its cooling factorization for the adjoint; per-stage
/// results are reduced in stage order, independent of thread scheduling.
inline DesignEvaluation evaluate_design(const BuildSimulator& sim, const LevelSetField& field,
                                        const EvaluationOptions& options = {}) {
  const BuildModel& model = sim.model();
  const ProcessParams& proc = sim.process();
  const int m = model.layer_count;
  const int steps = options.cooling_steps > 0 ? std::max(options.cooling_steps, proc.n_obj)
                                              : proc.n_obj;
  std::vector<double> per_stage(m, 0.0);
  std::vector<Vector> contributions(options.with_sensitivity ? m : 0);
  std::vector<StageHistory> histories(options.keep_histories ? m : 0);

  parallel_for(m, options.threads, [&](int idx) {
    const int stage = idx + 1;
    StageSolution sol = sim.solve_stage(field, stage, steps);
    const auto qualifying = layer_part_nodes(model, stage);
    per_stage[idx] = stage_objective(sol.history, qualifying, proc);
    if (options.with_sensitivity) {
      Vector contrib = Vector::Zero(model.node_count());
      if (!qualifying.empty()) {
        const StageAdjoint adj = solve_adjoint_stage(sol, model, proc, options.mode);
        accumulate_stage_sensitivity(model, sim.assembler(), field, sim.material(), proc,
                                     sol.history, adj, options.mode, contrib);
      }
      contributions[idx] = std::move(contrib);
    }
    if (options.keep_histories) histories[idx] = std::move(sol.history);
  });

  DesignEvaluation out;
  out.objective.per_stage = per_stage;
  for (double f : per_stage) out.objective.F += f;
  if (!std::isfinite(out.objective.F)) throw NumericsError("objective is not finite");
  out.sensitivity.dphi = Vector::Zero(model.node_count());
  for (const auto& c : contributions) out.sensitivity.dphi += c;
  if (options.with_sensitivity) {
    zero_part_nodes(model, out.sensitivity.dphi);
    if (!out.sensitivity.dphi.allFinite()) throw NumericsError("sensitivity is not finite");
  }
  out.histories = std::move(histories);
  return out;
}

}  // namespace lpbf
