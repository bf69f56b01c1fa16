// SPDX-FileCopyrightText: Copyright (c) 2026 the lpbf-supportopt authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "lpbf/config.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path work = fs::temp_directory_path() / "lpbf_test_cli";

constexpr const char* tiny = R"({
  "geometry": {"chamber_width": 10, "chamber_height": 10, "nx": 20, "ny": 20, "layer_thickness": 0.5,
               "part": {"kind": "overhang_beam", "column_x": 1, "column_width": 2, "height": 10,
                        "arm_length": 5, "arm_thickness": 2}},
  "optimization": {"V_max_fraction": 0.2, "max_iters": 3},
  "numerics": {"threads": 1}
})";

fs::path write_config(const std::string& name, const std::string& text) {
  fs::create_directories(work);
  const fs::path p = work / name;
  std::ofstream(p) << text;
  return p;
}

int run(const std::string& args) {
  const std::string cmd = std::string("\"") + LPBF_CLI_PATH + "\" " + args + " > \"" +
                          (work / "last.log").string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST(Cli, UsageErrorsExitOne) {
  fs::create_directories(work);
  EXPECT_EQ(run("--help"), 0);
  EXPECT_EQ(run(""), 1);
  EXPECT_EQ(run("simulate --frobnicate"), 1);
  EXPECT_EQ(run("optimize --threads 0"), 1);
  EXPECT_EQ(run("simulate --preset overhang2d --config x.json"), 1);
  EXPECT_EQ(run("simulate --preset cube3d"), 1);
  EXPECT_EQ(run("simulate --config /nonexistent/run.json"), 1);
}

TEST(Cli, ConfigErrorsExitOneWithFieldPath) {
  const fs::path bad = write_config("bad.json", R"({"process": {"t_c": 10, "dt_cool": 3}})");
  EXPECT_EQ(run("simulate --config \"" + bad.string() + "\""), 1);
  const fs::path unknown = write_config("unknown.json", R"({"output": {"cadence": 2}})");
  EXPECT_EQ(run("simulate --config \"" + unknown.string() + "\""), 1);
  EXPECT_NE(slurp(work / "last.log").find("output.cadence"), std::string::npos);
  const fs::path empty = write_config("empty.json", "");
  EXPECT_EQ(run("simulate --config \"" + empty.string() + "\""), 1);
}

TEST(Cli, NonFiniteTemperaturesExitThree) {
  const fs::path cfg = write_config(
      "blowup.json", R"({"preset": "overhang2d", "geometry": {"nx": 50, "ny": 50},
                         "process": {"q": 1e308}})");
  EXPECT_EQ(run("simulate --config \"" + cfg.string() + "\" --out \"" + (work / "blowup").string() +
                "\""),
            3);
}

TEST(Cli, SimulateWritesSeriesAndComposite) {
  const fs::path cfg = write_config("tiny.json", tiny);
  const fs::path out = work / "sim";
  fs::remove_all(out);
  ASSERT_EQ(run("simulate --config \"" + cfg.string() + "\" --out \"" + out.string() +
                "\" --vtk-every 5 --design pillars"),
            0)
      << slurp(work / "last.log");
  EXPECT_TRUE(fs::exists(out / "composite_step1.vtk"));
  EXPECT_TRUE(fs::exists(out / "simulate_summary.txt"));
  for (int stage : {1, 20})
    for (int step : {0, 1, 5, 10})
      EXPECT_TRUE(fs::exists(out / ("stage" + std::to_string(stage) + "_step" +
                                    std::to_string(step) + ".vtk")))
          << stage << ' ' << step;
  EXPECT_FALSE(fs::exists(out / "stage1_step2.vtk"));
  const std::string vtk = slurp(out / "stage20_step1.vtk");
  EXPECT_EQ(vtk.rfind("# vtk DataFile Version 2.0\n", 0), 0u);
  EXPECT_NE(vtk.find("SCALARS T double 1"), std::string::npos);
  EXPECT_NE(vtk.find("SCALARS chi int 1"), std::string::npos);
}

TEST(Cli, EffectiveConfigRoundTrips) {
  const fs::path cfg = write_config("tiny.json", tiny);
  const fs::path out = work / "rt";
  fs::remove_all(out);
  ASSERT_EQ(run("simulate --config \"" + cfg.string() + "\" --out \"" + out.string() + "\""), 0);
  const lpbf::RunConfig first = lpbf::parse_config(out / "effective_config.json");
  lpbf::RunConfig direct = lpbf::parse_config(cfg);
  direct.output.directory = out.string();
  EXPECT_EQ(lpbf::to_json(first), lpbf::to_json(direct));
  EXPECT_EQ(first.output.directory, out.string());
  EXPECT_EQ(first.geometry.nx, 20);
  EXPECT_EQ(first.optimization.max_iters, 3);
  const fs::path out2 = work / "rt2";
  fs::remove_all(out2);
  ASSERT_EQ(run("simulate --config \"" + (out / "effective_config.json").string() + "\" --out \"" +
                out2.string() + "\""),
            0);
  EXPECT_EQ(slurp(out / "composite_step1.vtk"), slurp(out2 / "composite_step1.vtk"));
  EXPECT_EQ(slurp(out / "simulate_summary.txt"), slurp(out2 / "simulate_summary.txt"));
}

TEST(Cli, OptimizeWritesLogAndDesign) {
  const fs::path cfg = write_config("tiny.json", tiny);
  const fs::path out = work / "opt";
  fs::remove_all(out);
  ASSERT_EQ(run("optimize --config \"" + cfg.string() + "\" --out \"" + out.string() +
                "\" --vtk-every 1"),
            0)
      << slurp(work / "last.log");
  std::istringstream csv(slurp(out / "convergence.csv"));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "iter,F,volume_fraction,multiplier");
  int rows = 0;
  while (std::getline(csv, line)) {
    ++rows;
    EXPECT_EQ(line.rfind(std::to_string(rows) + ",", 0), 0u) << line;
  }
  EXPECT_EQ(rows, 3);
  EXPECT_TRUE(fs::exists(out / "final_design.vtk"));
  EXPECT_TRUE(fs::exists(out / "design_iter1.vtk"));
  EXPECT_NE(slurp(out / "design_iter1.vtk").find("SCALARS dFdPhi double 1"), std::string::npos);
}

TEST(Cli, CompareWritesReport) {
  const fs::path cfg = write_config("tiny.json", tiny);
  const fs::path out = work / "cmp";
  fs::remove_all(out);
  ASSERT_EQ(run("compare --config \"" + cfg.string() + "\" --out \"" + out.string() + "\""), 0)
      << slurp(work / "last.log");
  const std::string report = slurp(out / "comparison_report.txt");
  EXPECT_NE(report.find("optimized objective lower: "), std::string::npos);
  EXPECT_NE(report.find("pillar baseline: "), std::string::npos);
  EXPECT_TRUE(fs::exists(out / "baseline_design.vtk"));
  EXPECT_TRUE(fs::exists(out / "composite_optimized_step1.vtk"));
  EXPECT_TRUE(fs::exists(out / "composite_baseline_step1.vtk"));
}
