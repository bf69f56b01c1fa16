// SPDX-FileCopyrightText: Copyright (c) 2026 the lpbf-supportopt authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <random>

#include "lpbf/adjoint.hpp"
#include "lpbf/levelset.hpp"
#include "oracles.hpp"

using namespace lpbf;
using namespace lpbf::oracle;

TEST(Objective, SingleNodeExample) {
  StageHistory h;
  h.stage = 1;
  h.heat_end = Vector::Constant(4, 20.0);
  for (int j = 0; j < 10; ++j) {
    Vector T = Vector::Constant(4, 20.0);
    T[2] = 30.0;
    h.cooling.push_back(T);
  }
  EXPECT_DOUBLE_EQ(stage_objective(h, {2}, default_process()), 300.0);
  EXPECT_DOUBLE_EQ(stage_objective(h, {0, 1}, default_process()), 0.0);
  h.cooling.resize(2);
  EXPECT_THROW(stage_objective(h, {2}, default_process()), DimensionError);
}

TEST(Adjoint, SingleDofClosedForm) {
  // Node 0 sits on the plate, node 1 is the only free unknown and the only
  // node entering the objective.
  const double c = 2.0, k = 0.5, dt = 1.0, excess = 7.0;
  SparseMatrix C(2, 2), K(2, 2);
  C.insert(0, 0) = 1.0;
  C.insert(1, 1) = c;
  K.insert(0, 0) = 1.0;
  K.insert(1, 1) = k;
  const std::vector<int> fixed{0};
  const auto stepper = std::make_shared<const ImplicitStepper>(C, K, dt, fixed);

  BuildModel model;
  model.width = model.height = model.layer_thickness = 1.0;
  model.nx = model.ny = model.layer_count = 1;
  model.nodes = {{0.0, 0.0}, {0.0, 1.0}};
  model.elements = {{0, 1, 1}};
  model.layer_of_element = {1};
  model.part_mask = {1};
  model.plate_nodes = fixed;

  ProcessParams p = default_process();
  p.n_obj = 1;
  StageSolution sol;
  sol.history.stage = 1;
  sol.history.cooling = {Vector::Constant(2, p.T_amb)};
  sol.history.cooling[0][1] += excess;
  sol.cooling = stepper;
  sol.heating = stepper;
  const StageAdjoint adj = solve_adjoint_stage(sol, model, p);
  ASSERT_EQ(adj.lambda.size(), 1u);
  EXPECT_NEAR(adj.lambda[0][1], -2.0 * excess * dt / (c / dt + k), 1e-14);
  EXPECT_EQ(adj.lambda[0][0], 0.0);
}


TEST(Adjoint, AmbientHistoryGivesZeroAdjoint) {
  const Toy t = toy();
  const LevelSetField f = random_band_field(t.model, 1);
  StageSolution sol = BuildSimulator(t.model, t.mat, t.proc).prepare_stage(f, 3);
  sol.history.cooling.assign(3, Vector::Constant(t.model.node_count(), t.proc.T_amb));
  sol.history.heat_end = sol.history.cooling[0];
  const StageAdjoint adj = solve_adjoint_stage(sol, t.model, t.proc, SensitivityMode::full);
  for (const auto& l : adj.lambda) EXPECT_EQ(l.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(adj.heating.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Adjoint, CoolingOnlyMatchesFrozenHeatingDifferences) {
  const Toy t = toy();
  ASSERT_LE(t.model.element_count(), 400);
  const LevelSetField f = random_band_field(t.model, 5);
  const BuildSimulator sim(t.model, t.mat, t.proc);
  EvaluationOptions eo;
  eo.keep_histories = true;
  const DesignEvaluation ev = evaluate_design(sim, f, eo);
  EXPECT_NEAR(frozen_objective(t, f, f, ev.histories), ev.objective.F, 1e-9 * ev.objective.F);

  const auto nodes = band_nodes(t.model, f, t.proc.w_heaviside);
  ASSERT_GE(nodes.size(), 20u);
  const double h = 1e-4;
  int checked = 0;
  for (int n : nodes) {
    LevelSetField plus = f, minus = f;
    plus.phi[n] += h;
    minus.phi[n] -= h;
    const double fd = (frozen_objective(t, f, plus, ev.histories) -
                       frozen_objective(t, f, minus, ev.histories)) / (2 * h);
    if (std::abs(fd) < 1e-9 * ev.objective.F) continue;  // node only touches excluded elements
    EXPECT_LE(rel_err(ev.sensitivity.dphi[n], fd), 1e-3) << "node " << n;
    ++checked;
  }
  EXPECT_GE(checked, 20);
}

TEST(Adjoint, FullModeMatchesEndToEndDifferences) {
  const Toy t = toy();
  const LevelSetField f = random_band_field(t.model, 9);
  const BuildSimulator sim(t.model, t.mat, t.proc);
  EvaluationOptions eo;
  eo.mode = SensitivityMode::full;
  const DesignEvaluation ev = evaluate_design(sim, f, eo);
  EXPECT_NEAR(full_objective(t, f), ev.objective.F, 1e-12 * ev.objective.F);

  const auto nodes = band_nodes(t.model, f, t.proc.w_heaviside);
  ASSERT_GE(nodes.size(), 20u);
  const double h = 1e-4;
  for (int n : nodes) {
    LevelSetField plus = f, minus = f;
    plus.phi[n] += h;
    minus.phi[n] -= h;
    const double fd = (full_objective(t, plus) - full_objective(t, minus)) / (2 * h);
    EXPECT_LE(rel_err(ev.sensitivity.dphi[n], fd), 1e-3) << "node " << n << " fd " << fd;
  }
}

TEST(Adjoint, SeparateAssemblyMatchesFusedEvaluation) {
  const Toy t = toy();
  const LevelSetField f = random_band_field(t.model, 13);
  SimulationOptions so;
  so.cooling_steps = t.proc.n_obj;
  const auto histories = run_build(t.model, f, t.mat, t.proc, so);
  std::vector<StageAdjoint> adjoints;
  for (int i = 1; i <= t.model.layer_count; ++i)
    adjoints.push_back(solve_adjoint_stage(t.model, f, t.mat, t.proc, i, histories[i - 1]));
  const SensitivityField s = assemble_sensitivity(t.model, f, t.mat, t.proc, histories, adjoints);
  EvaluationOptions eo;
  eo.threads = 2;
  const DesignEvaluation ev = evaluate_design(BuildSimulator(t.model, t.mat, t.proc), f, eo);
  EXPECT_LT((s.dphi - ev.sensitivity.dphi).cwiseAbs().maxCoeff(),
            1e-12 * ev.sensitivity.dphi.cwiseAbs().maxCoeff());
  EXPECT_NEAR(objective(histories, t.model, t.proc).F, ev.objective.F, 1e-12 * ev.objective.F);
  const auto part = part_node_mask(t.model);
  for (int n = 0; n < t.model.node_count(); ++n)
    if (part[n]) EXPECT_EQ(s.dphi[n], 0.0);
}

TEST(Adjoint, PlateausGiveZeroSensitivity) {
  const Toy t = toy();
  for (double v : {-1.0, 1.0}) {
    const LevelSetField f{Vector::Constant(t.model.node_count(), v)};
    const DesignEvaluation ev = evaluate_design(BuildSimulator(t.model, t.mat, t.proc), f);
    EXPECT_EQ(ev.sensitivity.dphi.cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(Adjoint, NoPartGivesZero) {
  Toy t = toy();
  t.model = build_mesh(5.0, 3.0, 10, 6, 0.5);
  const DesignEvaluation ev =
      evaluate_design(BuildSimulator(t.model, t.mat, t.proc), random_band_field(t.model, 2));
  EXPECT_EQ(ev.objective.F, 0.0);
  EXPECT_EQ(ev.sensitivity.dphi.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Adjoint, BridgingElementHasNegativeSensitivity) {
  // Two layers; a part cell in layer 2 hangs beside a designable column in
  // layer 1 that connects it to the plate.
  Toy t;
  t.model = apply_part_mask(build_mesh(2.0, 1.0, 4, 2, 0.5),
                            PartGeometry{OverhangBeam{0.0, 0.5, 1.0, 1.0, 0.5}});
  LevelSetField f = initial_field(t.model, -0.2);
  const DesignEvaluation ev = evaluate_design(BuildSimulator(t.model, t.mat, t.proc), f);
  EXPECT_EQ(ev.sensitivity.dphi[t.model.node_index(2, 1)], 0.0);  // underside of the arm
  double sum = 0.0;
  for (int c = 1; c <= 3; ++c) sum += ev.sensitivity.dphi[t.model.node_index(c, 0)];
  EXPECT_LT(sum, 0.0);
  const double h = 1e-4;
  LevelSetField plus = f, minus = f;
  for (int c = 1; c <= 3; ++c) {
    plus.phi[t.model.node_index(c, 0)] += h;
    minus.phi[t.model.node_index(c, 0)] -= h;
  }
  EvaluationOptions eo;
  eo.with_sensitivity = false;
  const BuildSimulator sim(t.model, t.mat, t.proc);
  const double fd =
      (evaluate_design(sim, plus, eo).objective.F - evaluate_design(sim, minus, eo).objective.F) / (2 * h);
  EXPECT_LT(fd, 0.0);
}
