// SPDX-FileCopyrightText: Copyright (c) 2026 the lpbf-supportopt authors.
// SPDX-License-Identifier: Apache-2.0

// lpbf-supportopt <simulate|optimize|compare> [--preset NAME | --config PATH]
//                 [--out DIR] [--threads N] [--vtk-every K]

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lpbf/analysis.hpp"
#include "lpbf/config.hpp"
#include "lpbf/optimizer.hpp"
#include "lpbf/vtk.hpp"

namespace fs = std::filesystem;
using namespace lpbf;

namespace {

enum ExitCode { ok = 0, config_error = 1, solver_error = 2, numerics_error = 3 };

struct Options {
  std::string preset;
  std::string config;
  std::string out;
  std::optional<int> threads;
  std::optional<int> vtk_every;
  std::string design = "empty";
};

class Printer {
 public:
  explicit Printer(const fs::path& path) : out_(path) {
    if (!out_) throw Error("cannot write '" + path.string() + "'");
  }
  template <class... Args>
  void line(const char* fmt, Args... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, fmt, args...);
    out_ << buf << '\n';
    std::cout << buf << '\n';
  }

 private:
  std::ofstream out_;
};

RunConfig load(const Options& opt) {
  if (!opt.preset.empty() && !opt.config.empty())
    throw ConfigError("--preset and --config are mutually exclusive");
  RunConfig cfg = opt.config.empty() ? preset(opt.preset.empty() ? "overhang2d" : opt.preset)
                                     : parse_config(opt.config);
  if (!opt.out.empty()) cfg.output.directory = opt.out;
  if (opt.threads) cfg.optimization.threads = *opt.threads;
  if (opt.vtk_every) cfg.output.vtk_every = *opt.vtk_every;
  cfg.validate();
  return cfg;
}

fs::path prepare_output(const RunConfig& cfg) {
  const fs::path dir(cfg.output.directory);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir))
    throw ConfigError("output.directory: cannot create '" + dir.string() + "'");
  std::ofstream j(dir / "effective_config.json");
  if (!j) throw ConfigError("output.directory: '" + dir.string() + "' is not writable");
  j << to_json(cfg).dump(2) << '\n';
  return dir;
}

VtkFields design_fields(const BuildModel& model, const LevelSetField& field) {
  VtkFields f;
  f.point.emplace_back("phi", field.phi);
  f.cell = design_cell_data(model, field);
  return f;
}

void write_matrices(const fs::path& dir, const BuildSimulator& sim, const LevelSetField& field) {
  const fs::path sub = dir / "matrices";
  fs::create_directories(sub);
  for (int i = 1; i <= sim.model().layer_count; ++i) {
    const ElementCoeffs coeffs =
        element_coeffs(sim.model(), field, i, sim.material(), sim.process());
    for (const auto& [name, kind, values] :
         {std::tuple{"C", Assembler::Kind::mass, &coeffs.rho_c},
          std::tuple{"K", Assembler::Kind::stiffness, &coeffs.k}}) {
      std::ofstream out(sub / ("stage" + std::to_string(i) + "_" + name + ".txt"));
      if (!out) throw Error("cannot write matrix dumps to '" + sub.string() + "'");
      write_coordinate(out, sim.assembler().assemble(*values, kind));
    }
  }
}

/// Forward run with every cooling step kept.
std::vector<StageHistory> full_histories(const BuildSimulator& sim, const LevelSetField& field,
                                         int threads) {
  SimulationOptions so;
  so.threads = threads;
  so.solver = sim.solver();
  return run_build(sim, field, so);
}

int simulate(const RunConfig& cfg, const Options& opt) {
  const fs::path dir = prepare_output(cfg);
  const BuildModel model = cfg.build_model();
  const BuildSimulator sim(model, cfg.materials, cfg.process, cfg.optimization.solver);
  LevelSetField field;
  if (opt.design == "empty") {
    field = initial_field(model, -1.0);
  } else if (opt.design == "pillars") {
    field = pillar_baseline(model, cfg.baseline.spacing, cfg.baseline.width).field;
  } else {
    throw ConfigError("--design: unknown value '" + opt.design + "' (empty, pillars)");
  }

  const auto histories = full_histories(sim, field, cfg.optimization.threads);
  const int every = cfg.output.vtk_every;
  const int j = cfg.output.composite_step;
  const auto cells = design_cell_data(model, field);
  for (const auto& h : histories) {
    for (int step = 0; step <= static_cast<int>(h.cooling.size()); ++step) {
      const bool wanted = step == j || (every > 0 && step % every == 0);
      if (!wanted) continue;
      VtkFields f;
      f.point.emplace_back("T", step == 0 ? h.heat_end : h.cooling[step - 1]);
      f.point.emplace_back("phi", field.phi);
      f.cell = cells;
      write_vtk(dir / ("stage" + std::to_string(h.stage) + "_step" + std::to_string(step) + ".vtk"),
                model, f);
    }
  }
  const Vector composite =
      layerwise_cooldown_field(histories, model, cfg.process, j, cfg.output.composite_reduction);
  VtkFields cf;
  cf.point.emplace_back("T", composite);
  cf.point.emplace_back("phi", field.phi);
  cf.cell = cells;
  write_vtk(dir / ("composite_step" + std::to_string(j) + ".vtk"), model, cf);
  if (cfg.output.dump_matrices) write_matrices(dir, sim, field);

  Printer p(dir / "simulate_summary.txt");
  p.line("design %s", opt.design.c_str());
  p.line("F %.17g", objective(histories, model, cfg.process).F);
  const auto layers = overhang_layers(model);
  if (!layers.empty()) {
    const auto c = overhang_contrast(histories[layers.front() - 1], model, j);
    p.line("first overhang stage %d: arm max %.6g C, supported max %.6g C, ratio %.4f", c.stage,
           c.arm_max, c.supported_max, c.ratio());
  }
  p.line("layer spread at composite step %d:", j);
  for (int i = 1; i <= model.layer_count; ++i)
    p.line("  layer %d %.6g", i, composite_layer_spread(composite, model, i));
  return ok;
}

struct OptimizeOutput {
  OptimizationResult result;
  BuildModel model;
};

OptimizeOutput optimize(const RunConfig& cfg) {
  const fs::path dir = prepare_output(cfg);
  const BuildModel model = cfg.build_model();
  std::FILE* csv = std::fopen((dir / "convergence.csv").string().c_str(), "w");
  if (!csv) throw Error("cannot write '" + (dir / "convergence.csv").string() + "'");
  std::fprintf(csv, "iter,F,volume_fraction,multiplier\n");

  Vector last_sensitivity;
  const auto observer = [&](const IterationRecord& r, const LevelSetField& field,
                            const DesignEvaluation& ev) {
    std::fprintf(csv, "%d,%.17g,%.17g,%.17g\n", r.iter, r.F, r.volume_fraction, r.multiplier);
    std::fflush(csv);
    std::printf("iter %4d  F %.6e  volume %.4f  multiplier %.4g%s\n", r.iter, r.F,
                r.volume_fraction, r.multiplier, r.converged ? "  converged" : "");
    std::fflush(stdout);
    last_sensitivity = ev.sensitivity.dphi;
    const auto fields = [&] {
      VtkFields f = design_fields(model, field);
      f.point.emplace_back("dFdPhi", ev.sensitivity.dphi);
      return f;
    };
    const std::string k = std::to_string(r.iter);
    if (cfg.output.vtk_every > 0 && r.iter % cfg.output.vtk_every == 0)
      write_vtk(dir / ("design_iter" + k + ".vtk"), model, fields());
    if (cfg.output.checkpoint_every > 0 && r.iter % cfg.output.checkpoint_every == 0)
      write_vtk(dir / ("checkpoint_iter" + k + ".vtk"), model, design_fields(model, field));
  };

  OptimizationResult result;
  try {
    result = run_optimization(model, cfg.materials, cfg.process, cfg.optimization, observer);
  } catch (...) {
    std::fclose(csv);
    throw;
  }
  std::fclose(csv);

  VtkFields f = design_fields(model, result.field);
  if (last_sensitivity.size() == model.node_count()) f.point.emplace_back("dFdPhi", last_sensitivity);
  write_vtk(dir / "final_design.vtk", model, f);
  if (cfg.output.write_sensitivity) {
    std::ofstream s(dir / "final_sensitivity.txt");
    s.precision(17);
    for (Eigen::Index n = 0; n < last_sensitivity.size(); ++n) s << last_sensitivity[n] << '\n';
  }

  const auto& first = result.records.front();
  const auto& last = result.records.back();
  const auto rf = region_fractions(result.field, model, shadow_mask(model));
  Printer p(dir / "optimize_summary.txt");
  p.line("iterations %d", last.iter);
  p.line("converged %s", result.converged ? "yes" : "no");
  p.line("F first %.17g", first.F);
  p.line("F final %.17g", last.F);
  p.line("volume fraction final %.6f (limit %.6f)", last.volume_fraction,
         cfg.optimization.V_max_fraction);
  p.line("material fraction below overhangs %.4f, elsewhere %.4f", rf.inside, rf.outside);
  return {std::move(result), model};
}

struct DesignReport {
  double F = 0.0;
  double volume_fraction = 0.0;
  LaserRange laser;
  Vector composite;
};

DesignReport assess(const RunConfig& cfg, const BuildSimulator& sim, const LevelSetField& field) {
  DesignReport r;
  const auto histories = full_histories(sim, field, cfg.optimization.threads);
  r.F = objective(histories, sim.model(), cfg.process).F;
  r.volume_fraction = volume(field, sim.model()).fraction;
  r.laser = overhang_laser_range(histories, sim.model(), field, cfg.output.composite_step);
  r.composite = layerwise_cooldown_field(histories, sim.model(), cfg.process,
                                         cfg.output.composite_step, cfg.output.composite_reduction);
  return r;
}

int compare(const RunConfig& cfg) {
  const OptimizeOutput opt = optimize(cfg);
  const fs::path dir(cfg.output.directory);
  const BuildModel& model = opt.model;
  const double target = cfg.optimization.V_max_fraction;
  const PillarLayout pillars =
      matched_pillar_baseline(model, target, cfg.baseline.spacing, cfg.baseline.width);
  write_vtk(dir / "baseline_design.vtk", model, design_fields(model, pillars.field));

  const BuildSimulator sim(model, cfg.materials, cfg.process, cfg.optimization.solver);
  const DesignReport a = assess(cfg, sim, opt.result.field);
  const DesignReport b = assess(cfg, sim, pillars.field);
  const int j = cfg.output.composite_step;
  for (const auto& [name, rep, field] :
       {std::tuple{"optimized", &a, &opt.result.field}, std::tuple{"baseline", &b, &pillars.field}}) {
    VtkFields f = design_fields(model, *field);
    f.point.emplace_back("T", rep->composite);
    write_vtk(dir / (std::string("composite_") + name + "_step" + std::to_string(j) + ".vtk"),
              model, f);
  }

  Printer p(dir / "comparison_report.txt");
  p.line("comparison at cooling step %d (t = %g s)", j, j * cfg.process.dt_cool);
  p.line("pillar baseline: %d pillars, spacing %g mm, width %g mm", pillars.pillar_count,
         pillars.spacing, pillars.width);
  for (const auto& w : pillars.warnings) p.line("  warning: %s", w.c_str());
  p.line("%-10s %22s %16s %22s %6s", "design", "F", "volume", "laser dT max [C]", "stage");
  p.line("%-10s %22.15g %16.6f %22.6f %6d", "optimized", a.F, a.volume_fraction, a.laser.range,
         a.laser.stage);
  p.line("%-10s %22.15g %16.6f %22.6f %6d", "baseline", b.F, b.volume_fraction, b.laser.range,
         b.laser.stage);
  p.line("objective ratio optimized/baseline %.6f", a.F / b.F);
  p.line("optimized objective lower: %s", a.F < b.F ? "yes" : "no");
  p.line("optimized laser-domain temperature difference lower: %s",
         a.laser.range < b.laser.range ? "yes" : "no");
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Support structure optimization for heat dissipation in laser powder bed fusion"};
  app.require_subcommand(1, 1);
  Options opt;
  const auto common = [&](CLI::App* sub) {
    sub->add_option("--preset", opt.preset, "built-in benchmark (overhang2d, mbb2d)");
    sub->add_option("--config", opt.config, "JSON configuration file");
    sub->add_option("--out", opt.out, "output directory");
    sub->add_option("--threads", opt.threads, "worker threads for the stage maps")
        ->check(CLI::PositiveNumber);
    sub->add_option("--vtk-every", opt.vtk_every, "VTK cadence (cooling steps or iterations)")
        ->check(CLI::NonNegativeNumber);
  };
  CLI::App* sim = app.add_subcommand("simulate", "forward build simulation of a fixed design");
  CLI::App* optm = app.add_subcommand("optimize", "support optimization");
  CLI::App* cmp = app.add_subcommand("compare", "optimize, then compare with a pillar baseline");
  for (CLI::App* s : {sim, optm, cmp}) common(s);
  sim->add_option("--design", opt.design, "support design to simulate (empty, pillars)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? ok : config_error;
  }

  try {
    const RunConfig cfg = load(opt);
    if (sim->parsed()) return simulate(cfg, opt);
    if (optm->parsed()) {
      optimize(cfg);
      return ok;
    }
    return compare(cfg);
  } catch (const SolverError& e) {
    std::cerr << "solver error: " << e.what() << '\n';
    return solver_error;
  } catch (const NumericsError& e) {
    std::cerr << "numerics error: " << e.what() << '\n';
    return numerics_error;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return config_error;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return config_error;
  }
}
