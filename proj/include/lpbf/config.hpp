// SPDX-FileCopyrightText: Copyright (c) 2026 the lpbf-supportopt authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>

#include <nlohmann/json.hpp>

#include "lpbf/error.hpp"
#include "lpbf/geometry.hpp"
#include "lpbf/materials.hpp"
#include "lpbf/optimizer.hpp"
#include "lpbf/process.hpp"

namespace lpbf {

struct GeometryConfig {
  double chamber_width = 25.0;
  double chamber_height = 25.0;
  int nx = 100;
  int ny = 100;
  double layer_thickness = 0.5;
  PartGeometry part{OverhangBeam{}};
};

struct BaselineConfig {
  double spacing = 2.0;
  double width = 0.5;

  bool operator==(const BaselineConfig&) const = default;
};

struct OutputConfig {
  std::string directory = "out";
  int vtk_every = 0;  ///< optimization iterations between design files; 0 writes only the final one
  int composite_step = 1;
  CompositeReduction composite_reduction = CompositeReduction::snapshot;
  int checkpoint_every = 0;
  bool dump_matrices = false;
  bool write_sensitivity = false;

  bool operator==(const OutputConfig&) const = default;
};

struct RunConfig {
  std::string preset;  ///< empty for a fully explicit configuration
  GeometryConfig geometry;
  MaterialProps materials = default_alsi10mg();
  ProcessParams process = default_process();
  OptimizationConfig optimization;
  BaselineConfig baseline;
  OutputConfig output;

  /// Mesh with the part applied; throws DimensionError on inconsistent geometry.
  [[nodiscard]] BuildModel build_model() const {
    return apply_part_mask(build_mesh(geometry.chamber_width, geometry.chamber_height, geometry.nx,
                                      geometry.ny, geometry.layer_thickness),
                           geometry.part);
  }

  void validate() const {
    materials.validate();
    process.validate();
    optimization.validate();
    if (!(baseline.width > 0.0)) throw ConfigError("baseline.width: must be > 0");
    if (!(baseline.spacing > baseline.width))
      throw ConfigError("baseline.spacing: must be > baseline.width");
    if (output.directory.empty()) throw ConfigError("output.directory: must not be empty");
    if (output.vtk_every < 0) throw ConfigError("output.vtk_every: must be >= 0");
    if (output.checkpoint_every < 0) throw ConfigError("output.checkpoint_every: must be >= 0");
    if (output.composite_step < 1 || output.composite_step > process.n_cool())
      throw ConfigError("output.composite_step: must lie in 1..t_c/dt_cool");
    try {
      (void)build_model();
    } catch (const DimensionError& e) {
      throw ConfigError(std::string("geometry: ") + e.what());
    }
  }
};

inline int default_thread_count_hint() {
  const unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : static_cast<int>(n);
}

/// Built-in benchmarks.
inline RunConfig preset(const std::string& name) {
  RunConfig c;
  c.preset = name;
  c.optimization.threads = default_thread_count_hint();
  if (name == "overhang2d") {
    c.geometry.part = PartGeometry{OverhangBeam{2.0, 5.0, 25.0, 16.0, 4.0}};
    c.optimization.V_max_fraction = 0.21;
    return c;
  }
  if (name == "mbb2d") {
    c.geometry.part = PartGeometry{MbbBeam{1.0, 24.0, 19.0, 4.0, 3.0}};
    c.optimization.V_max_fraction = 0.174;
    return c;
  }
  throw ConfigError("preset: unknown preset '" + name + "' (known: overhang2d, mbb2d)");
}

namespace detail {

using nlohmann::json;

/// Reads one JSON object while tracking which keys were consumed, so that
/// leftovers can be reported with their full path.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": must be an object");
  }

  [[nodiscard]] bool has(const std::string& key) const { return j_.contains(key); }

  template <class T>
  void get(const std::string& key, T& out) {
    if (!j_.contains(key)) return;
    seen_.insert(key);
    const json& v = j_.at(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError("");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw ConfigError("");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ConfigError("");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError("");
      }
      out = v.get<T>();
    } catch (const std::exception&) {
      throw ConfigError(field(key) + ": wrong type (" + std::string(v.type_name()) + ")");
    }
  }

  Section child(const std::string& key) {
    seen_.insert(key);
    return Section(j_.at(key), field(key));
  }

  [[nodiscard]] const json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  [[nodiscard]] std::string field(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError(field(it.key()) + ": unknown key");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline RasterMask raster_from_rows(const json& rows, double cell_size, const std::string& path) {
  if (!rows.is_array() || rows.empty()) throw ConfigError(path + ": must be a non-empty array");
  RasterMask m;
  m.rows = static_cast<int>(rows.size());
  m.cell_size = cell_size;
  for (const auto& row : rows) {
    if (!row.is_string()) throw ConfigError(path + ": rows must be strings of 0/1");
    const auto s = row.get<std::string>();
    if (m.cols == 0) m.cols = static_cast<int>(s.size());
    if (static_cast<int>(s.size()) != m.cols || s.empty())
      throw ConfigError(path + ": rows must all have the same length");
    for (char ch : s) {
      if (ch != '0' && ch != '1') throw ConfigError(path + ": rows must contain only 0 and 1");
      m.cells.push_back(ch == '1');
    }
  }
  return m;
}

inline void parse_part(Section s, PartGeometry& part, const std::filesystem::path& base_dir) {
  std::string kind;
  s.get("kind", kind);
  if (kind.empty()) {
    if (!s.has("kind")) throw ConfigError(s.field("kind") + ": required");
  }
  if (kind == "overhang_beam") {
    OverhangBeam b = std::holds_alternative<OverhangBeam>(part.shape)
                         ? std::get<OverhangBeam>(part.shape)
                         : OverhangBeam{};
    s.get("column_x", b.column_x);
    s.get("column_width", b.column_width);
    s.get("height", b.height);
    s.get("arm_length", b.arm_length);
    s.get("arm_thickness", b.arm_thickness);
    part.shape = b;
  } else if (kind == "mbb_like") {
    MbbBeam b = std::holds_alternative<MbbBeam>(part.shape) ? std::get<MbbBeam>(part.shape)
                                                            : MbbBeam{};
    s.get("x0", b.x0);
    s.get("x1", b.x1);
    s.get("beam_bottom", b.beam_bottom);
    s.get("beam_thickness", b.beam_thickness);
    s.get("post_width", b.post_width);
    part.shape = b;
  } else if (kind == "raster_mask") {
    if (s.has("file") == s.has("rows"))
      throw ConfigError(s.field("kind") + ": raster_mask needs exactly one of 'file' or 'rows'");
    if (s.has("file")) {
      std::string file;
      s.get("file", file);
      std::filesystem::path p(file);
      if (p.is_relative()) p = base_dir / p;
      part.shape = read_raster_mask(p.string());
    } else {
      double cell = 0.0;
      if (!s.has("cell_size")) throw ConfigError(s.field("cell_size") + ": required with 'rows'");
      s.get("cell_size", cell);
      if (!(cell > 0.0)) throw ConfigError(s.field("cell_size") + ": must be > 0");
      part.shape = raster_from_rows(s.raw("rows"), cell, s.field("rows"));
    }
  } else {
    throw ConfigError(s.field("kind") + ": unknown part kind '" + kind +
                      "' (overhang_beam, mbb_like, raster_mask)");
  }
  s.finish();
}

template <class E>
E parse_enum(Section& s, const std::string& key, E current,
             std::initializer_list<std::pair<const char*, E>> names) {
  if (!s.has(key)) return current;
  std::string v;
  s.get(key, v);
  for (const auto& [n, e] : names)
    if (v == n) return e;
  std::string known;
  for (const auto& [n, e] : names) known += (known.empty() ? "" : ", ") + std::string(n);
  throw ConfigError(s.field(key) + ": unknown value '" + v + "' (" + known + ")");
}

template <class E>
std::string enum_name(E value, std::initializer_list<std::pair<const char*, E>> names) {
  for (const auto& [n, e] : names)
    if (e == value) return n;
  return "";
}

inline const std::initializer_list<std::pair<const char*, SensitivityMode>> sensitivity_names = {
    {"cooling_only", SensitivityMode::cooling_only}, {"full", SensitivityMode::full}};
inline const std::initializer_list<std::pair<const char*, SolverKind>> solver_names = {
    {"cholesky", SolverKind::cholesky}, {"conjugate_gradient", SolverKind::conjugate_gradient}};
inline const std::initializer_list<std::pair<const char*, ConstraintScheme>> constraint_names = {
    {"projection", ConstraintScheme::projection},
    {"augmented_lagrangian", ConstraintScheme::augmented_lagrangian}};
inline const std::initializer_list<std::pair<const char*, CompositeReduction>> reduction_names = {
    {"snapshot", CompositeReduction::snapshot}, {"sum", CompositeReduction::sum}};

}  // namespace detail

/// Parses a JSON configuration. Every key is optional except where noted;
/// missing values come from the preset named by "preset" or the built-in
/// defaults. Unknown keys are errors. Relative raster paths resolve against
/// `base_dir`.
inline RunConfig parse_config_text(const std::string& text,
                                   const std::filesystem::path& base_dir = ".") {
  using nlohmann::json;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("parse error: ") + e.what());
  }
  detail::Section root(j, "");
  RunConfig c;
  c.optimization.threads = default_thread_count_hint();
  if (root.has("preset")) {
    std::string name;
    root.get("preset", name);
    c = preset(name);
  }

  if (root.has("geometry")) {
    auto g = root.child("geometry");
    g.get("chamber_width", c.geometry.chamber_width);
    g.get("chamber_height", c.geometry.chamber_height);
    g.get("nx", c.geometry.nx);
    g.get("ny", c.geometry.ny);
    g.get("layer_thickness", c.geometry.layer_thickness);
    if (g.has("part")) detail::parse_part(g.child("part"), c.geometry.part, base_dir);
    g.finish();
  }
  if (root.has("materials")) {
    auto m = root.child("materials");
    m.get("rho", c.materials.rho);
    m.get("c", c.materials.c);
    m.get("k", c.materials.k);
    m.finish();
  }
  if (root.has("process")) {
    auto p = root.child("process");
    p.get("q", c.process.q);
    p.get("t_h", c.process.t_h);
    p.get("t_c", c.process.t_c);
    p.get("dt_cool", c.process.dt_cool);
    p.get("T_amb", c.process.T_amb);
    p.get("n_obj", c.process.n_obj);
    p.get("ersatz_inactive", c.process.ersatz_inactive);
    p.get("d_void", c.process.d_void);
    p.get("w_heaviside", c.process.w_heaviside);
    p.finish();
  }
  if (root.has("optimization")) {
    auto o = root.child("optimization");
    auto& oc = c.optimization;
    o.get("V_max_fraction", oc.V_max_fraction);
    o.get("max_iters", oc.max_iters);
    o.get("conv_tol", oc.conv_tol);
    o.get("conv_window", oc.conv_window);
    o.get("tau", oc.update.tau);
    o.get("D", oc.update.D);
    o.get("ds", oc.update.ds);
    o.get("initial_multiplier", oc.lagrange.initial_multiplier);
    o.get("multiplier_step", oc.lagrange.step);
    if (o.has("initial_phi")) {
      const json& v = o.raw("initial_phi");
      if (v.is_null() || v == "auto") {
        oc.initial_phi.reset();
      } else if (v.is_number()) {
        oc.initial_phi = v.get<double>();
      } else {
        throw ConfigError(o.field("initial_phi") + ": must be a number or \"auto\"");
      }
    }
    oc.constraint = detail::parse_enum(o, "constraint", oc.constraint, detail::constraint_names);
    o.get("adaptive_step", oc.adaptive_step);
    oc.sensitivity = detail::parse_enum(o, "sensitivity", oc.sensitivity, detail::sensitivity_names);
    o.finish();
  }
  if (root.has("numerics")) {
    auto n = root.child("numerics");
    c.optimization.solver =
        detail::parse_enum(n, "solver", c.optimization.solver, detail::solver_names);
    n.get("threads", c.optimization.threads);
    n.finish();
  }
  if (root.has("baseline")) {
    auto b = root.child("baseline");
    b.get("spacing", c.baseline.spacing);
    b.get("width", c.baseline.width);
    b.finish();
  }
  if (root.has("output")) {
    auto o = root.child("output");
    o.get("directory", c.output.directory);
    o.get("vtk_every", c.output.vtk_every);
    o.get("composite_step", c.output.composite_step);
    c.output.composite_reduction = detail::parse_enum(o, "composite_reduction",
                                                      c.output.composite_reduction,
                                                      detail::reduction_names);
    o.get("checkpoint_every", c.output.checkpoint_every);
    o.get("dump_matrices", c.output.dump_matrices);
    o.get("write_sensitivity", c.output.write_sensitivity);
    o.finish();
  }
  root.finish();
  c.validate();
  return c;
}

inline RunConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path.parent_path().empty() ? "." : path.parent_path());
}

/// Fully explicit configuration; parsing it back gives an identical run.
inline nlohmann::json to_json(const RunConfig& c) {
  using nlohmann::json;
  json part = std::visit(
      [](const auto& s) -> json {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, OverhangBeam>) {
          return {{"kind", "overhang_beam"},   {"column_x", s.column_x},
                  {"column_width", s.column_width}, {"height", s.height},
                  {"arm_length", s.arm_length}, {"arm_thickness", s.arm_thickness}};
        } else if constexpr (std::is_same_v<T, MbbBeam>) {
          return {{"kind", "mbb_like"},           {"x0", s.x0},
                  {"x1", s.x1},                   {"beam_bottom", s.beam_bottom},
                  {"beam_thickness", s.beam_thickness}, {"post_width", s.post_width}};
        } else {
          json rows = json::array();
          for (int r = 0; r < s.rows; ++r) {
            std::string row;
            for (int col = 0; col < s.cols; ++col) row += s.at(r, col) ? '1' : '0';
            rows.push_back(row);
          }
          return {{"kind", "raster_mask"}, {"cell_size", s.cell_size}, {"rows", rows}};
        }
      },
      c.geometry.part.shape);

  const auto& o = c.optimization;
  return {
      {"geometry",
       {{"chamber_width", c.geometry.chamber_width},
        {"chamber_height", c.geometry.chamber_height},
        {"nx", c.geometry.nx},
        {"ny", c.geometry.ny},
        {"layer_thickness", c.geometry.layer_thickness},
        {"part", part}}},
      {"materials", {{"rho", c.materials.rho}, {"c", c.materials.c}, {"k", c.materials.k}}},
      {"process",
       {{"q", c.process.q},
        {"t_h", c.process.t_h},
        {"t_c", c.process.t_c},
        {"dt_cool", c.process.dt_cool},
        {"T_amb", c.process.T_amb},
        {"n_obj", c.process.n_obj},
        {"ersatz_inactive", c.process.ersatz_inactive},
        {"d_void", c.process.d_void},
        {"w_heaviside", c.process.w_heaviside}}},
      {"optimization",
       {{"V_max_fraction", o.V_max_fraction},
        {"max_iters", o.max_iters},
        {"conv_tol", o.conv_tol},
        {"conv_window", o.conv_window},
        {"tau", o.update.tau},
        {"D", o.update.D},
        {"ds", o.update.ds},
        {"initial_multiplier", o.lagrange.initial_multiplier},
        {"multiplier_step", o.lagrange.step},
        {"constraint", detail::enum_name(o.constraint, detail::constraint_names)},
        {"adaptive_step", o.adaptive_step},
        {"initial_phi", o.initial_phi ? json(*o.initial_phi) : json("auto")},
        {"sensitivity", detail::enum_name(o.sensitivity, detail::sensitivity_names)}}},
      {"numerics",
       {{"solver", detail::enum_name(o.solver, detail::solver_names)}, {"threads", o.threads}}},
      {"baseline", {{"spacing", c.baseline.spacing}, {"width", c.baseline.width}}},
      {"output",
       {{"directory", c.output.directory},
        {"vtk_every", c.output.vtk_every},
        {"composite_step", c.output.composite_step},
        {"composite_reduction",
         detail::enum_name(c.output.composite_reduction, detail::reduction_names)},
        {"checkpoint_every", c.output.checkpoint_every},
        {"dump_matrices", c.output.dump_matrices},
        {"write_sensitivity", c.output.write_sensitivity}}},
  };
}

}  // namespace lpbf
