// SPDX-FileCopyrightText: Copyright (c) 2026 the lpbf-supportopt authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "lpbf/error.hpp"

namespace lpbf {

/// Bulk properties of the part/support material. Units: kg/mm^3, J/(kg K),
/// W/(mm K).
struct MaterialProps {
  double rho = 0.0;
  double c = 0.0;
  double k = 0.0;

  [[nodiscard]] double volumetric_heat_capacity() const { return rho * c; }

  void validate() const {
    if (!(rho > 0.0)) throw ConfigError("materials.rho: must be > 0");
    if (!(c > 0.0)) throw ConfigError("materials.c: must be > 0");
    if (!(k > 0.0)) throw ConfigError("materials.k: must be > 0");
  }

  bool operator==(const MaterialProps&) const = default;
};

/// Flash-heating process and interpolation parameters.
struct ProcessParams {
  double q = 0.0;              ///< volume heat flux, W/mm^3
  double t_h = 0.0;            ///< heating time per layer, s
  double t_c = 0.0;            ///< cooling time per layer, s
  double dt_cool = 0.0;        ///< cooling time step, s
  double T_amb = 0.0;          ///< plate and initial temperature, deg C
  int n_obj = 1;               ///< cooling steps entering the objective
  double ersatz_inactive = 0;  ///< property factor for not-yet-built layers
  double d_void = 0.0;         ///< property factor for void in the extended properties
  double w_heaviside = 0.0;    ///< transition half-width of the smoothed Heaviside

  /// Number of cooling steps, t_c / dt_cool.
  [[nodiscard]] int n_cool() const { return static_cast<int>(std::lround(t_c / dt_cool)); }

  void validate() const {
    if (!(q >= 0.0)) throw ConfigError("process.q: must be >= 0");
    if (!(t_h > 0.0)) throw ConfigError("process.t_h: must be > 0");
    if (!(dt_cool > 0.0)) throw ConfigError("process.dt_cool: must be > 0");
    if (!(t_c > 0.0)) throw ConfigError("process.t_c: must be > 0");
    const double steps = t_c / dt_cool;
    if (std::abs(steps - std::round(steps)) > 1e-9 * std::max(1.0, steps) || std::round(steps) < 1.0)
      throw ConfigError("process.t_c: must be an integer multiple of process.dt_cool");
    if (!std::isfinite(T_amb)) throw ConfigError("process.T_amb: must be finite");
    if (n_obj < 1 || n_obj > n_cool())
      throw ConfigError("process.n_obj: must lie in 1..t_c/dt_cool");
    if (!(ersatz_inactive > 0.0 && ersatz_inactive < 1.0))
      throw ConfigError("process.ersatz_inactive: must lie in (0, 1)");
    if (!(d_void > 0.0 && d_void < 1.0)) throw ConfigError("process.d_void: must lie in (0, 1)");
    if (!(w_heaviside > 0.0 && w_heaviside <= 1.0))
      throw ConfigError("process.w_heaviside: must lie in (0, 1]");
  }

  bool operator==(const ProcessParams&) const = default;
};

/// AlSi10Mg.
inline MaterialProps default_alsi10mg() { return {2.67e-6, 910.0, 119e-3}; }

inline ProcessParams default_process() {
  ProcessParams p;
  p.q = 2e4;
  p.t_h = 0.5e-3;
  p.t_c = 10.0;
  p.dt_cool = 1.0;
  p.T_amb = 20.0;
  p.n_obj = 3;
  p.ersatz_inactive = 1e-3;
  p.d_void = 1e-3;
  p.w_heaviside = 0.9;
  return p;
}

}  // namespace lpbf
