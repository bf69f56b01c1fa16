// SPDX-FileCopyrightText: Copyright (c) 2026 the lpbf-supportopt authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <random>

#include "lpbf/levelset.hpp"

using namespace lpbf;

TEST(Heaviside, ExactValues) {
  EXPECT_DOUBLE_EQ(heaviside(0.0, 0.9), 0.5);
  EXPECT_DOUBLE_EQ(heaviside(0.9, 0.9), 1.0);
  EXPECT_DOUBLE_EQ(heaviside(-0.9, 0.9), 0.0);
  // t = 1/2: 1/2 + 1/2 (15/16 - 1/4 (5/8 - 3/64)) = 459/512
  EXPECT_DOUBLE_EQ(heaviside(0.45, 0.9), 0.896484375);
  EXPECT_DOUBLE_EQ(heaviside(2.0, 0.9), 1.0);
  EXPECT_DOUBLE_EQ(heaviside(-2.0, 0.9), 0.0);
  EXPECT_THROW(heaviside(0.1, 0.0), ConfigError);
  EXPECT_THROW(heaviside(0.1, -1.0), ConfigError);
}

TEST(Heaviside, MonotoneAndC1) {
  const double w = 0.9;
  double prev = -1.0;
  for (int i = 0; i <= 10000; ++i) {
    const double phi = -1.0 + 2.0 * i / 10000.0;
    const double h = heaviside(phi, w);
    ASSERT_GE(h, prev);
    ASSERT_GE(h, 0.0);
    ASSERT_LE(h, 1.0);
    prev = h;
  }
  const double h = 1e-6;
  for (double edge : {w, -w}) {
    const double inside = edge > 0 ? edge - h : edge + h;
    const double slope = (heaviside(inside + h / 2, w) - heaviside(inside - h / 2, w)) / h;
    EXPECT_NEAR(slope, 0.0, 1e-6);
  }
}

TEST(Heaviside, DerivativeMatchesFiniteDifferences) {
  for (double w : {0.3, 0.9, 1.0})
    for (int i = -20; i <= 20; ++i) {
      const double phi = 0.049 * i;
      const double h = 1e-6;
      const double fd = (heaviside(phi + h, w) - heaviside(phi - h, w)) / (2 * h);
      EXPECT_NEAR(heaviside_derivative(phi, w), fd, 1e-7) << phi << " " << w;
    }
}

TEST(ExtendedProperties, EndpointsAndMidpoint) {
  const double rho = 2.67e-6, w = 0.9, d = 1e-3;
  EXPECT_DOUBLE_EQ(extended_density(1.0, w, d, rho), rho);
  EXPECT_DOUBLE_EQ(extended_density(-1.0, w, d, rho), 1e-3 * rho);
  EXPECT_DOUBLE_EQ(extended_density(0.0, w, d, rho), rho * (1 + d) / 2);
  EXPECT_DOUBLE_EQ(extended_conductivity(-1.0, w, d, 0.119), 1e-3 * 0.119);
  for (int i = 0; i <= 200; ++i) {
    const double phi = -1.0 + i / 100.0;
    const double k = extended_conductivity(phi, w, d, 0.119);
    EXPECT_GE(k, d * 0.119 * (1 - 1e-15));
    EXPECT_LE(k, 0.119);
  }
}

TEST(Characteristic, SharpIndicator) {
  EXPECT_EQ(characteristic(0.0), 1);
  EXPECT_EQ(characteristic(-0.3), 0);
  EXPECT_EQ(characteristic(1.0), 1);
  for (int i = -100; i <= 100; ++i) {
    const double phi = i / 100.0;
    if (phi == 0.0) continue;
    EXPECT_EQ(characteristic(phi) == 1, heaviside(phi, 0.9) > 0.5) << phi;
  }
}

namespace {

BuildModel two_by_two() { return build_mesh(1.0, 1.0, 2, 2, 0.5); }

}  // namespace

TEST(Update, ZeroSensitivityKeepsUniformField) {
  const BuildModel m = two_by_two();
  for (double v : {-1.0, -0.3, 0.0, 0.7, 1.0}) {
    const LevelSetField f{Vector::Constant(m.node_count(), v)};
    const LevelSetField out = update(f, {Vector::Zero(m.node_count())}, UpdateParams{}, m);
    EXPECT_LT((out.phi - f.phi).cwiseAbs().maxCoeff(), 1e-12) << v;
  }
}

TEST(Update, NegativeSensitivityGrowsMaterial) {
  const BuildModel m = two_by_two();
  const LevelSetField f{Vector::Zero(m.node_count())};
  const UpdateParams p{1e-4, 0.8, 1.0};
  const LevelSetField out = update(f, {Vector::Constant(m.node_count(), -3.0)}, p, m);
  // Uniform normalized load: the Laplacian term vanishes and phi+ = phi + D ds.
  EXPECT_GT(out.phi.mean(), f.phi.mean());
  for (Eigen::Index n = 0; n < out.phi.size(); ++n) EXPECT_NEAR(out.phi[n], 0.8, 1e-12);
}

TEST(Update, ClampsAndPinsPartNodes) {
  BuildModel m = apply_part_mask(build_mesh(2.0, 2.0, 4, 4, 0.5),
                                 PartGeometry{OverhangBeam{0.0, 0.5, 2.0, 1.5, 0.5}});
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  const auto part = part_node_mask(m);
  for (int trial = 0; trial < 20; ++trial) {
    LevelSetField f = initial_field(m, 0.0);
    Vector sens(m.node_count());
    for (Eigen::Index n = 0; n < f.phi.size(); ++n) {
      if (!part[n]) f.phi[n] = dist(rng);
      sens[n] = 5.0 * dist(rng);
    }
    const LevelSetField out = update(f, {sens}, UpdateParams{0.05, 0.8, 1.0}, m);
    EXPECT_LE(out.phi.cwiseAbs().maxCoeff(), 1.0);
    for (int n = 0; n < m.node_count(); ++n)
      if (part[n]) EXPECT_EQ(out.phi[n], 1.0);
  }
}

TEST(Update, RegularizationSmoothsAField) {
  const BuildModel m = build_mesh(2.0, 2.0, 8, 8, 0.5);
  LevelSetField f{Vector::Zero(m.node_count())};
  f.phi[m.node_index(4, 4)] = 0.9;
  const LevelSetField weak = update(f, {Vector::Zero(m.node_count())}, UpdateParams{1e-4, 0.8, 1.0}, m);
  const LevelSetField strong = update(f, {Vector::Zero(m.node_count())}, UpdateParams{1e-1, 0.8, 1.0}, m);
  EXPECT_LT(strong.phi[m.node_index(4, 4)], weak.phi[m.node_index(4, 4)]);
  EXPECT_GT(strong.phi[m.node_index(5, 4)], weak.phi[m.node_index(5, 4)]);
}

TEST(Volume, FullEmptyAndHalf) {
  const BuildModel m = build_mesh(1.0, 1.0, 2, 2, 0.5);
  EXPECT_DOUBLE_EQ(volume({Vector::Constant(m.node_count(), 1.0)}, m).fraction, 1.0);
  EXPECT_DOUBLE_EQ(volume({Vector::Constant(m.node_count(), -1.0)}, m).fraction, 0.0);

  // Interface nodes at 0: lower-row element means are +2/3 or +1/3, upper-row
  // means are -1/3 or -2/3, so exactly the lower half counts.
  LevelSetField f{Vector::Zero(m.node_count())};
  for (int n = 0; n < m.node_count(); ++n) {
    const double y = m.nodes[n].y;
    f.phi[n] = y < 0.25 ? 1.0 : (y > 0.75 ? -1.0 : 0.0);
  }
  const VolumeMeasure v = volume(f, m);
  EXPECT_DOUBLE_EQ(v.fraction, 0.5);
  EXPECT_DOUBLE_EQ(v.area, 0.5);
}

TEST(Volume, ExcludesPartAndOutsideIsZero) {
  const BuildModel m = apply_part_mask(build_mesh(2.0, 1.0, 4, 2, 0.5),
                                       PartGeometry{OverhangBeam{0.0, 1.0, 1.0, 0.0, 0.5}});
  LevelSetField f = initial_field(m, -1.0);
  const VolumeMeasure v = volume(f, m);
  EXPECT_DOUBLE_EQ(v.designable_area, 1.0);
  // Elements next to the part average over their designable nodes only.
  EXPECT_EQ(v.fraction, 0.0);
  EXPECT_EQ(v.area, 0.0);
  EXPECT_THROW(initial_field(m, 1.5), ConfigError);
}
