// SPDX-FileCopyrightText: Copyright (c) 2026 the lpbf-supportopt authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>

#include "lpbf/error.hpp"
#include "lpbf/geometry.hpp"

namespace lpbf {

using Vector = Eigen::VectorXd;

/// Nodal level-set function in [-1, 1]; positive is material, negative void.
struct LevelSetField {
  Vector phi;
};

/// Nodal derivative of the objective with respect to the level-set values.
struct SensitivityField {
  Vector dphi;
};

/// Quintic smoothed Heaviside with transition half-width w. C1 at +-w.
inline double heaviside(double phi, double w) {
  if (!(w > 0.0)) throw ConfigError("heaviside: transition width must be > 0");
  if (phi > w) return 1.0;
  if (phi < -w) return 0.0;
  const double t = phi / w;
  const double t2 = t * t;
  return 0.5 + t * (15.0 / 16.0 - t2 * (5.0 / 8.0 - 3.0 / 16.0 * t2));
}

/// dH/dphi. Vanishes outside [-w, w].
inline double heaviside_derivative(double phi, double w) {
  if (!(w > 0.0)) throw ConfigError("heaviside: transition width must be > 0");
  if (phi > w || phi < -w) return 0.0;
  const double t = phi / w;
  const double s = 1.0 - t * t;
  return 15.0 / (16.0 * w) * s * s;
}

/// Extended-material multiplier (1 - d) H(phi; w) + d.
inline double extended_factor(double phi, double w, double d) {
  return (1.0 - d) * heaviside(phi, w) + d;
}

inline double extended_factor_derivative(double phi, double w, double d) {
  return (1.0 - d) * heaviside_derivative(phi, w);
}

inline double extended_density(double phi, double w, double d, double rho) {
  return extended_factor(phi, w, d) * rho;
}

inline double extended_conductivity(double phi, double w, double d, double k) {
  return extended_factor(phi, w, d) * k;
}

/// Sharp material indicator.
inline int characteristic(double phi) { return phi >= 0.0 ? 1 : 0; }

inline double element_mean_phi(const BuildModel& model, const LevelSetField& field, int e) {
  const auto& n = model.elements[e];
  if (model.mean_weights.empty()) return (field.phi[n[0]] + field.phi[n[1]] + field.phi[n[2]]) / 3.0;
  const auto& w = model.mean_weights[e];
  return w[0] * field.phi[n[0]] + w[1] * field.phi[n[1]] + w[2] * field.phi[n[2]];
}

}  // namespace lpbf
