// SPDX-FileCopyrightText: Copyright (c) 2026 the lpbf-supportopt authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "lpbf/adjoint.hpp"
#include "lpbf/error.hpp"
#include "lpbf/geometry.hpp"
#include "lpbf/interpolation.hpp"
#include "lpbf/levelset.hpp"
#include "lpbf/materials.hpp"
#include "lpbf/process.hpp"

namespace lpbf {

/// How the volume constraint enters the update.
enum class ConstraintScheme {
  /// Multiplier chosen by bisection each iteration so that the updated design
  /// has smoothed volume fraction V_max (or less when the constraint is slack).
  projection,
  /// Lambda <- max(0, Lambda + rho (volume_fraction - V_max)).
  augmented_lagrangian,
};

/// Multiplier update for the augmented Lagrangian scheme.
struct LagrangeParams {
  double initial_multiplier = 0.0;
  double step = 1.0;  ///< penalty rho applied to (volume_fraction - V_max)

  bool operator==(const LagrangeParams&) const = default;
};

struct OptimizationConfig {
  double V_max_fraction = 0.21;
  int max_iters = 300;
  double conv_tol = 1e-4;
  int conv_window = 5;
  UpdateParams update;
  LagrangeParams lagrange;
  ConstraintScheme constraint = ConstraintScheme::projection;
  /// Halve ds after every iteration whose objective rose.
  bool adaptive_step = true;
  /// Uniform starting value; unset picks the value whose smoothed volume
  /// fraction equals V_max.
  std::optional<double> initial_phi;
  SensitivityMode sensitivity = SensitivityMode::cooling_only;
  SolverKind solver = SolverKind::cholesky;
  int threads = 1;

  void validate() const {
    if (!(V_max_fraction > 0.0 && V_max_fraction < 1.0))
      throw ConfigError("optimization.V_max_fraction: must lie in (0, 1)");
    if (max_iters < 1) throw ConfigError("optimization.max_iters: must be >= 1");
    if (!(conv_tol > 0.0)) throw ConfigError("optimization.conv_tol: must be > 0");
    if (conv_window < 1) throw ConfigError("optimization.conv_window: must be >= 1");
    if (!(lagrange.initial_multiplier >= 0.0))
      throw ConfigError("optimization.initial_multiplier: must be >= 0");
    if (!(lagrange.step > 0.0)) throw ConfigError("optimization.multiplier_step: must be > 0");
    if (initial_phi && !(*initial_phi >= -1.0 && *initial_phi <= 1.0))
      throw ConfigError("optimization.initial_phi: must lie in [-1, 1]");
    if (threads < 1) throw ConfigError("optimization.threads: must be >= 1");
    update.validate();
  }

  bool operator==(const OptimizationConfig&) const = default;
};

/// Feasibility slack added to V_max in the convergence test.
inline constexpr double volume_slack = 0.005;

struct IterationRecord {
  int iter = 0;
  double F = 0.0;
  double volume_fraction = 0.0;
  double multiplier = 0.0;
  bool converged = false;
};

struct MultiplierState {
  double value = 0.0;
};

/// Sum of area * H(phi_mean) over non-part elements, as a fraction of their area.
inline double smoothed_volume_fraction(const LevelSetField& field, const BuildModel& model,
                                       double w) {
  double mat = 0.0, area = 0.0;
  for (int e = 0; e < model.element_count(); ++e) {
    if (model.is_part(e)) continue;
    area += model.area(e);
    mat += model.area(e) * heaviside(element_mean_phi(model, field, e), w);
  }
  return area > 0.0 ? mat / area : 0.0;
}

/// Uniform phi with heaviside(phi; w) = fraction.
inline double matched_initial_phi(double fraction, double w) {
  double lo = -w, hi = w;
  for (int k = 0; k < 200 && hi - lo > 1e-15; ++k) {
    const double mid = 0.5 * (lo + hi);
    (heaviside(mid, w) < fraction ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

/// dG/dphi of the smoothed volume fraction: every non-part element adds
/// area (1 - d) H'(phi_mean) times the node's mean weight to each of its
/// nodes. Zero on part nodes.
inline Vector volume_gradient(const LevelSetField& field, const BuildModel& model,
                              const ProcessParams& proc) {
  Vector g = Vector::Zero(model.node_count());
  double designable = 0.0;
  for (int e = 0; e < model.element_count(); ++e) {
    if (model.is_part(e)) continue;
    designable += model.area(e);
    const double d = extended_factor_derivative(element_mean_phi(model, field, e),
                                                proc.w_heaviside, proc.d_void);
    if (d == 0.0) continue;
    const auto w = model.mean_weight(e);
    for (int k = 0; k < 3; ++k) g[model.elements[e][k]] += model.area(e) * d * w[k];
  }
  if (designable > 0.0) g /= designable;
  zero_part_nodes(model, g);
  return g;
}

inline Vector normalized(const Vector& v) {
  const double scale = v.size() ? v.cwiseAbs().maxCoeff() : 0.0;
  return scale > std::numeric_limits<double>::min() ? Vector(v / scale) : Vector::Zero(v.size());
}

/// Updates the multiplier from the current volume fraction, then returns
///   normalize(sens) + multiplier * normalize(dG/dphi).
inline SensitivityField constrained_direction(const SensitivityField& sens,
                                              const LevelSetField& field,
                                              const BuildModel& model, const ProcessParams& proc,
                                              const OptimizationConfig& config,
                                              MultiplierState& state) {
  const double fraction = volume(field, model).fraction;
  state.value = std::max(0.0, state.value + config.lagrange.step * (fraction - config.V_max_fraction));
  SensitivityField out{normalized(sens.dphi)};
  if (state.value > 0.0) out.dphi += state.value * normalized(volume_gradient(field, model, proc));
  return out;
}

struct ProjectedStep {
  LevelSetField field;
  double multiplier = 0.0;
};

/// Update with direction normalize(sens) + Lambda normalize(dG/dphi), Lambda >= 0
/// the smallest value (to bisection precision) for which the new design's
/// smoothed volume fraction does not exceed V_max.
inline ProjectedStep projected_update(const LevelSetUpdater& updater, const LevelSetField& field,
                                      const SensitivityField& sens, const BuildModel& model,
                                      const ProcessParams& proc, double V_max) {
  const Vector s = normalized(sens.dphi);
  const Vector g = normalized(volume_gradient(field, model, proc));
  const auto step = [&](double lambda) { return updater.advance(field, -(s + lambda * g)); };
  const auto fraction = [&](const LevelSetField& f) {
    return smoothed_volume_fraction(f, model, proc.w_heaviside);
  };

  ProjectedStep out{step(0.0), 0.0};
  if (fraction(out.field) <= V_max) return out;
  double lo = 0.0, hi = 1.0;
  while (fraction(step(hi)) > V_max && hi < 1e6) {
    lo = hi;
    hi *= 2.0;
  }
  for (int k = 0; k < 50 && hi - lo > 1e-12 * hi; ++k) {
    const double mid = 0.5 * (lo + hi);
    (fraction(step(mid)) > V_max ? lo : hi) = mid;
  }
  return {step(hi), hi};
}

struct OptimizationResult {
  LevelSetField field;  ///< design of the last evaluated iteration
  std::vector<IterationRecord> records;
  bool converged = false;
};

/// Called once per iteration after the design has been evaluated.
using IterationObserver =
    std::function<void(const IterationRecord&, const LevelSetField&, const DesignEvaluation&)>;

inline LevelSetField starting_field(const BuildModel& model, const ProcessParams& proc,
                                    const OptimizationConfig& config) {
  return initial_field(model, config.initial_phi
                                  ? *config.initial_phi
                                  : matched_initial_phi(config.V_max_fraction, proc.w_heaviside));
}

inline OptimizationResult run_optimization(const BuildModel& model, const MaterialProps& mat,
                                           const ProcessParams& proc,
                                           const OptimizationConfig& config,
                                           const IterationObserver& observer = {}) {
  config.validate();
  const BuildSimulator sim(model, mat, proc, config.solver);
  OptimizationResult result;
  result.field = starting_field(model, proc, config);

  EvaluationOptions eval;
  eval.threads = config.threads;
  eval.mode = config.sensitivity;

  const auto guarded = [](int iter, auto&& fn) {
    try {
      return fn();
    } catch (const SolverError& e) {
      throw SolverError("iteration " + std::to_string(iter) + ": " + e.what());
    } catch (const NumericsError& e) {
      throw NumericsError("iteration " + std::to_string(iter) + ": " + e.what());
    }
  };

  if (designable_node_count(model) == 0) {
    EvaluationOptions forward = eval;
    forward.with_sensitivity = false;
    const DesignEvaluation ev = guarded(1, [&] { return evaluate_design(sim, result.field, forward); });
    IterationRecord rec{1, ev.objective.F, 0.0, config.lagrange.initial_multiplier, true};
    result.records.push_back(rec);
    result.converged = true;
    if (observer) observer(rec, result.field, ev);
    return result;
  }

  UpdateParams params = config.update;
  auto updater = std::make_unique<LevelSetUpdater>(model, params);
  MultiplierState multiplier{config.lagrange.initial_multiplier};
  int streak = 0;
  for (int iter = 1; iter <= config.max_iters; ++iter) {
    const DesignEvaluation ev = guarded(iter, [&] { return evaluate_design(sim, result.field, eval); });
    IterationRecord rec;
    rec.iter = iter;
    rec.F = ev.objective.F;
    rec.volume_fraction = volume(result.field, model).fraction;
    bool rose = false;
    if (!result.records.empty()) {
      const double prev = result.records.back().F;
      const double change = std::abs(rec.F - prev) / std::max(std::abs(prev), 1e-300);
      streak = change < config.conv_tol ? streak + 1 : 0;
      rose = rec.F > prev;
    }
    rec.converged =
        streak >= config.conv_window && rec.volume_fraction <= config.V_max_fraction + volume_slack;
    const bool last = rec.converged || iter == config.max_iters;

    LevelSetField next;
    if (!last) {
      if (config.adaptive_step && rose) {
        params.ds *= 0.5;
        updater = std::make_unique<LevelSetUpdater>(model, params);
      }
      guarded(iter, [&] {
        if (config.constraint == ConstraintScheme::projection) {
          ProjectedStep step = projected_update(*updater, result.field, ev.sensitivity, model, proc,
                                                config.V_max_fraction);
          multiplier.value = step.multiplier;
          next = std::move(step.field);
        } else {
          const SensitivityField dir =
              constrained_direction(ev.sensitivity, result.field, model, proc, config, multiplier);
          next = updater->advance(result.field, -dir.dphi);
        }
        return 0;
      });
    }
    rec.multiplier = multiplier.value;
    result.records.push_back(rec);
    if (observer) observer(rec, result.field, ev);
    if (last) {
      result.converged = rec.converged;
      break;
    }
    result.field = std::move(next);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Regions and pillar baseline

/// Non-part elements with a part cell somewhere above them in the same cell
/// column: the region a support can occupy.
inline std::vector<std::uint8_t> shadow_mask(const BuildModel& model) {
  std::vector<std::uint8_t> covered(static_cast<size_t>(model.nx) * model.ny, 0);
  for (int c = 0; c < model.nx; ++c) {
    bool part_above = false;
    for (int r = model.ny - 1; r >= 0; --r) {
      const int e = model.first_element_of_cell(c, r);
      if (model.is_part(e)) {
        part_above = true;
        continue;
      }
      covered[static_cast<size_t>(r) * model.nx + c] = part_above;
    }
  }
  std::vector<std::uint8_t> out(model.elements.size(), 0);
  for (int e = 0; e < model.element_count(); ++e)
    out[e] = covered[static_cast<size_t>(model.cell_row(e)) * model.nx + model.cell_column(e)];
  return out;
}

struct RegionFractions {
  double inside = 0.0;   ///< material fraction of the masked designable area
  double outside = 0.0;  ///< material fraction of the remaining designable area
};

inline RegionFractions region_fractions(const LevelSetField& field, const BuildModel& model,
                                        const std::vector<std::uint8_t>& mask) {
  double in_area = 0, in_mat = 0, out_area = 0, out_mat = 0;
  for (int e = 0; e < model.element_count(); ++e) {
    if (model.is_part(e)) continue;
    const double a = model.area(e);
    const double mat = a * characteristic(element_mean_phi(model, field, e));
    if (mask[e]) {
      in_area += a;
      in_mat += mat;
    } else {
      out_area += a;
      out_mat += mat;
    }
  }
  return {in_area > 0 ? in_mat / in_area : 0.0, out_area > 0 ? out_mat / out_area : 0.0};
}

struct PillarLayout {
  LevelSetField field;
  int pillar_count = 0;
  double spacing = 0.0;  ///< after snapping, mm
  double width = 0.0;    ///< after snapping, mm
  double volume_fraction = 0.0;
  std::vector<std::string> warnings;
};

/// Vertical pillars under every overhanging underside. Along each contiguous
/// run of underside cells of length L starting at xa, pillars start at
/// xa + k*spacing for k = 0..floor(L/spacing); a pillar that would stick out of
/// the run is shifted left to end at its edge. Pillars run down to the plate or
/// the next part cell. Positions are snapped to cell columns.
inline PillarLayout pillar_baseline(const BuildModel& model, double spacing, double width) {
  if (!(width > 0.0)) throw ConfigError("baseline.width: must be > 0");
  if (!(spacing > width)) throw ConfigError("baseline.spacing: must be > baseline.width");
  const double cw = model.cell_width();
  PillarLayout out;
  const auto snap = [&](double v, const char* what) {
    const double cells = v / cw;
    const int snapped = std::max(1, static_cast<int>(std::lround(cells)));
    if (std::abs(cells - snapped) > 1e-9)
      out.warnings.push_back(std::string("baseline.") + what + ": " + std::to_string(v) +
                             " mm snapped to " + std::to_string(snapped * cw) + " mm");
    return snapped;
  };
  const int wc = snap(width, "width");
  const int sc = snap(spacing, "spacing");
  out.width = wc * cw;
  out.spacing = sc * cw;

  const auto part_cell = [&](int c, int r) { return model.is_part(model.first_element_of_cell(c, r)); };
  std::vector<std::uint8_t> pillar_cell(static_cast<size_t>(model.nx) * model.ny, 0);
  const auto raise_pillar = [&](int c0, int top_row) {
    for (int c = c0; c < c0 + wc && c < model.nx; ++c)
      for (int r = top_row; r >= 0 && !part_cell(c, r); --r)
        pillar_cell[static_cast<size_t>(r) * model.nx + c] = 1;
  };

  for (int r = 1; r < model.ny; ++r) {
    int c = 0;
    while (c < model.nx) {
      if (!(part_cell(c, r) && !part_cell(c, r - 1))) {
        ++c;
        continue;
      }
      const int ca = c;
      while (c < model.nx && part_cell(c, r) && !part_cell(c, r - 1)) ++c;
      const int cb = c;  // run covers columns [ca, cb)
      const int run = cb - ca;
      for (int k = 0; k <= run / sc; ++k) {
        int start = ca + k * sc;
        if (start + wc > cb) start = std::max(ca, cb - wc);
        raise_pillar(start, r - 1);
        ++out.pillar_count;
      }
    }
  }

  out.field = initial_field(model, -1.0);
  for (int e = 0; e < model.element_count(); ++e)
    if (pillar_cell[static_cast<size_t>(model.cell_row(e)) * model.nx + model.cell_column(e)])
      for (int n : model.elements[e]) out.field.phi[n] = 1.0;
  out.volume_fraction = volume(out.field, model).fraction;
  return out;
}

/// Searches pillar spacing and width (in whole cells, width up to
/// `max_width_cells`). Among layouts whose volume fraction is within
/// `tolerance` of `target`, returns the one nearest the requested spacing and
/// width; when none is, the one with the closest volume.
inline PillarLayout matched_pillar_baseline(const BuildModel& model, double target,
                                            double spacing, double width,
                                            double tolerance = 0.01,
                                            int max_width_cells = 8) {
  const double cw = model.cell_width();
  PillarLayout best = pillar_baseline(model, spacing, width);
  const auto key = [&](const PillarLayout& p) {
    const double err = std::abs(p.volume_fraction - target);
    const double dist = std::abs(p.spacing - spacing) + std::abs(p.width - width);
    return err <= tolerance ? std::pair{0.0, dist} : std::pair{err, dist};
  };
  auto best_key = key(best);
  const int max_spacing = std::max(2, model.nx);
  for (int wc = 1; wc <= max_width_cells; ++wc)
    for (int sc = wc + 1; sc <= max_spacing; ++sc) {
      PillarLayout cand = pillar_baseline(model, sc * cw, wc * cw);
      const auto k = key(cand);
      if (k < best_key) {
        best = std::move(cand);
        best_key = k;
      }
    }
  return best;
}

}  // namespace lpbf
