// SPDX-FileCopyrightText: Copyright (c) 2026 the lpbf-supportopt authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "lpbf/levelset.hpp"
#include "lpbf/process.hpp"

using namespace lpbf;

namespace {

BuildModel column_model() {
  return apply_part_mask(build_mesh(4.0, 5.0, 16, 20, 0.5),
                         PartGeometry{OverhangBeam{1.0, 2.0, 5.0, 0.0, 0.5}});
}

BuildModel overhang_model() {
  return apply_part_mask(build_mesh(10.0, 6.0, 40, 24, 0.5),
                         PartGeometry{OverhangBeam{1.0, 2.0, 6.0, 5.0, 1.0}});
}

double excess_energy(const SparseMatrix& C, const Vector& T, double T_amb) {
  const Vector u = T.array() - T_amb;
  return u.dot(C * u);
}

bool bitwise_equal(const Vector& a, const Vector& b) {
  return a.size() == b.size() &&
         std::equal(a.data(), a.data() + a.size(), b.data());
}

bool bitwise_equal(const StageHistory& a, const StageHistory& b) {
  if (a.stage != b.stage || !bitwise_equal(a.heat_end, b.heat_end) ||
      a.cooling.size() != b.cooling.size())
    return false;
  for (size_t j = 0; j < a.cooling.size(); ++j)
    if (!bitwise_equal(a.cooling[j], b.cooling[j])) return false;
  return true;
}

}  // namespace

TEST(RunStage, NoSourceStaysAmbient) {
  const BuildModel m = column_model();
  ProcessParams p = default_process();
  p.q = 0.0;
  const auto histories = run_build(m, initial_field(m, -0.5), default_alsi10mg(), p);
  for (const auto& h : histories) {
    EXPECT_EQ(h.heat_end, Vector::Constant(m.node_count(), p.T_amb));
    ASSERT_EQ(static_cast<int>(h.cooling.size()), p.n_cool());
    for (const auto& T : h.cooling) EXPECT_EQ(T, Vector::Constant(m.node_count(), p.T_amb));
  }
  for (auto reduction : {CompositeReduction::snapshot, CompositeReduction::sum})
    EXPECT_EQ(layerwise_cooldown_field(histories, m, p, 1, reduction),
              Vector::Constant(m.node_count(), p.T_amb));
}

TEST(RunStage, ColumnCoolsMonotonically) {
  const BuildModel m = column_model();
  const ProcessParams p = default_process();
  const MaterialProps mat = default_alsi10mg();
  const LevelSetField f = initial_field(m, -1.0);
  const StageHistory h = run_stage(m, f, mat, p, 1);
  const SparseMatrix C = assemble_C(element_coeffs(m, f, 1, mat, p), m);

  EXPECT_GT(excess_energy(C, h.heat_end, p.T_amb), 0.0);
  double max_prev = h.heat_end.maxCoeff();
  double energy_prev = excess_energy(C, h.heat_end, p.T_amb);
  for (const auto& T : h.cooling) {
    ASSERT_TRUE(T.allFinite());
    EXPECT_LE(T.maxCoeff(), max_prev);
    EXPECT_GE(T.minCoeff(), p.T_amb - 1e-9);
    const double energy = excess_energy(C, T, p.T_amb);
    EXPECT_LT(energy, energy_prev);
    for (int n : m.plate_nodes) EXPECT_EQ(T[n], p.T_amb);
    max_prev = T.maxCoeff();
    energy_prev = energy;
  }
  EXPECT_LT(h.cooling.back().maxCoeff() - p.T_amb, 0.05 * (h.heat_end.maxCoeff() - p.T_amb));
}

TEST(RunBuild, SingleLayerEqualsRunStage) {
  const BuildModel m = apply_part_mask(build_mesh(2.0, 0.5, 8, 2, 0.5),
                                       PartGeometry{OverhangBeam{0.5, 1.0, 0.5, 0.0, 0.5}});
  const LevelSetField f = initial_field(m, 0.2);
  const auto all = run_build(m, f, default_alsi10mg(), default_process());
  ASSERT_EQ(all.size(), 1u);
  EXPECT_TRUE(bitwise_equal(all[0], run_stage(m, f, default_alsi10mg(), default_process(), 1)));
}

TEST(RunBuild, StageIndependenceAndOrder) {
  const BuildModel m = overhang_model();
  const MaterialProps mat = default_alsi10mg();
  const ProcessParams p = default_process();
  LevelSetField f = initial_field(m, -0.3);
  for (int n = 0; n < m.node_count(); ++n)
    f.phi[n] = std::clamp(f.phi[n] + 0.1 * std::sin(1.7 * n), -1.0, 1.0);
  const BuildSimulator sim(m, mat, p);
  SimulationOptions opts;
  opts.cooling_steps = 3;
  const auto forward = run_build(sim, f, opts);

  std::vector<int> order(m.layer_count);
  std::iota(order.rbegin(), order.rend(), 1);
  std::rotate(order.begin(), order.begin() + 5, order.end());
  const auto permuted = run_build(sim, f, opts, order);
  opts.threads = 3;
  const auto threaded = run_build(sim, f, opts);
  for (int i = 0; i < m.layer_count; ++i) {
    EXPECT_TRUE(bitwise_equal(forward[i], permuted[i])) << "stage " << i + 1;
    EXPECT_TRUE(bitwise_equal(forward[i], threaded[i])) << "stage " << i + 1;
  }
  const StageHistory alone = sim.solve_stage(f, 7, 3).history;
  EXPECT_TRUE(bitwise_equal(alone, forward[6]));
  const std::vector<int> bad{1, 2};
  EXPECT_THROW(run_build(sim, f, opts, bad), DimensionError);
}

TEST(RunBuild, ColumnPeakUniformAcrossStages) {
  const BuildModel m = column_model();
  SimulationOptions opts;
  opts.cooling_steps = 1;
  const auto h = run_build(m, initial_field(m, -1.0), default_alsi10mg(), default_process(), opts);
  std::vector<double> peaks;
  for (int i = 2; i <= m.layer_count; ++i) peaks.push_back(h[i - 1].heat_end.maxCoeff() - 20.0);
  const auto [lo, hi] = std::minmax_element(peaks.begin(), peaks.end());
  EXPECT_LE(*hi - *lo, 0.05 * *hi);
}

TEST(Composite, OverhangHoldsMaximumAndSpread) {
  const BuildModel m = overhang_model();
  const ProcessParams p = default_process();
  SimulationOptions opts;
  opts.cooling_steps = 1;
  const auto h = run_build(m, initial_field(m, -1.0), default_alsi10mg(), p, opts);
  const Vector comp = layerwise_cooldown_field(h, m, p, 1);

  const auto layer = node_layer(m);
  for (int n = 0; n < m.node_count(); ++n)
    EXPECT_EQ(comp[n], h[layer[n] - 1].cooling[0][n]);

  const auto over = overhang_mask(m);
  std::vector<std::uint8_t> over_node(m.node_count(), 0);
  for (int e = 0; e < m.element_count(); ++e)
    if (over[e])
      for (int n : m.elements[e]) over_node[n] = 1;
  // Hottest part node of the composite.
  const auto part = part_node_mask(m);
  int arg = -1;
  for (int n = 0; n < m.node_count(); ++n)
    if (part[n] && (arg < 0 || comp[n] > comp[arg])) arg = n;
  EXPECT_TRUE(over_node[arg]);

  // Spread over part nodes of each layer: the overhang layers lead.
  std::vector<double> spread(m.layer_count, 0.0);
  for (int i = 1; i <= m.layer_count; ++i) {
    double lo = 1e300, hi = -1e300;
    for (int n : layer_part_nodes(m, i)) {
      lo = std::min(lo, comp[n]);
      hi = std::max(hi, comp[n]);
    }
    spread[i - 1] = hi - lo;
  }
  const auto top = std::max_element(spread.begin(), spread.end()) - spread.begin() + 1;
  const auto layers = overhang_layers(m);
  EXPECT_NE(std::find(layers.begin(), layers.end(), top), layers.end());

  EXPECT_THROW(layerwise_cooldown_field(h, m, p, 2), DimensionError);
  EXPECT_THROW(layerwise_cooldown_field(h, m, p, 0), std::out_of_range);
}
