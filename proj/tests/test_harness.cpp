#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <sstream>

#include "noisyopt/harness.hpp"

using namespace noisyopt;
using namespace noisyopt::harness;
using nlohmann::json;

namespace {

RunConfig toy_config(OptimizerId id, std::size_t budget) {
  RunConfig c;
  c.problem = "toy_molecule";
  c.method = OptimizerSpec::defaults(id);
  c.budget = budget;
  Vec x0(2);
  x0 << 0.5, 0.5;
  c.x0 = x0;
  return c;
}

std::string rows_csv(const std::vector<SummaryRow>& rows) {
  std::ostringstream out;
  write_rows_csv(out, rows);
  return out.str();
}

int count(const std::string& text, const std::string& needle) {
  int n = 0;
  for (auto p = text.find(needle); p != std::string::npos; p = text.find(needle, p + 1)) ++n;
  return n;
}

int local_minima(const std::vector<SurfacePoint>& pts) {
  int m = 0;
  const std::size_t n = pts.size();
  for (std::size_t i = 0; i < n; ++i) {
    const bool left = i == 0 || pts[i].value < pts[i - 1].value;
    const bool right = i + 1 == n || pts[i].value < pts[i + 1].value;
    m += left && right;
  }
  return m;
}

}  // namespace

TEST(HarnessConfig, DefaultsParse) {
  const RunConfig c = config_from_json(json::object());
  EXPECT_EQ(c.problem, "toy_molecule");
  EXPECT_EQ(method_name(c.method), "imfil");
  EXPECT_EQ(c.repeats, 20);
}

TEST(HarnessConfig, UnknownKeysNamed) {
  try {
    config_from_json(json{{"problem", "sphere"}, {"bugdet", 10}});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.key(), "bugdet");
  }
  try {
    config_from_json(json{{"optimizer", {{"name", "mads"}, {"options", {{"frame", 1}}}}}});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.key(), "optimizer.options.frame");
  }
}

TEST(HarnessConfig, UnknownNamesRejected) {
  EXPECT_THROW(config_from_json(json{{"problem", "ethylene"}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"optimizer", "adam"}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"optimizer", "imfil"}, {"compose", json::object()}}),
               ConfigError);
}

TEST(HarnessConfig, InconsistentValuesRejected) {
  EXPECT_THROW(config_from_json(json{{"x0", {2.0, 0.0}}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"x0", {0.0}}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"problem", "two_well"}, {"dimension", 3}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"sigma_grid", {1e-2, 1e-3}}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"budget", -3}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"noise", {{"sigma", -1.0}}}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"box", {{"lower", {1, 1}}, {"upper", {0, 0}}}}}),
               ConfigError);
  EXPECT_THROW(config_from_json(json{{"surface", {{"params", {0, 0}},
                                                  {"lower", {-1, -1}},
                                                  {"upper", {1, 1}}}}}),
               ConfigError);
}

TEST(HarnessConfig, RoundTripThroughJson) {
  const json doc = {
      {"problem", "hubbard"},
      {"layers", 2},
      {"compose",
       {{"first", {{"name", "imfil"}, {"options", {{"max_inner_iters", 4}}}}},
        {"second", "snobfit"},
        {"bounds_rule", {{"best_point_radius", 0.1}}},
        {"budget_split", {{"fixed_fraction", 0.4}}}}},
      {"budget", 300},
      {"noise", {{"sigma", 0.01}, {"mu", 0.001}}},
      {"seed", 9},
      {"sigma_grid", {0.001, 0.01}},
  };
  const RunConfig c = config_from_json(doc);
  EXPECT_EQ(method_name(c.method), "imfil+snobfit");
  const auto& plan = std::get<CompositionPlan>(c.method);
  EXPECT_EQ(std::get<ImfilOptions>(plan.first.options).max_inner_iters, 4);
  EXPECT_DOUBLE_EQ(std::get<FixedFraction>(plan.budget_split).fraction, 0.4);
  const json back = config_to_json(c);
  EXPECT_EQ(config_to_json(config_from_json(back)), back);
}

TEST(HarnessRun, BudgetRespected) {
  RunConfig c = toy_config(OptimizerId::ImFil, 50);
  c.noise.sigma = 1e-4;
  const auto r = run_single(c);
  EXPECT_LE(r.row.evals_used, 50u);
  EXPECT_EQ(r.row.evals_used, r.outcome.history.size());
}

TEST(HarnessRun, NoiselessTrueEnergyMatchesBestF) {
  for (const std::string problem : {"toy_molecule", "sphere", "shallow_multiwell"}) {
    for (OptimizerId id : all_optimizers()) {
      RunConfig c = toy_config(id, 60);
      c.problem = problem;
      c.x0.reset();
      if (problem != "toy_molecule") c.x0 = Vec::Constant(2, 0.25);
      const auto r = run_single(c);
      EXPECT_NEAR(r.row.true_energy, r.row.best_f, 1e-8) << problem << ' ' << to_string(id);
    }
  }
}

TEST(HarnessRun, SameSeedSameRow) {
  RunConfig c = toy_config(OptimizerId::SnobFit, 40);
  c.noise.sigma = 0.01;
  c.seed = 17;
  const auto a = rows_csv({run_single(c).row});
  for (int k = 0; k < 2; ++k) EXPECT_EQ(rows_csv({run_single(c).row}), a);
}

TEST(HarnessRun, CompositionPlanRuns) {
  RunConfig c;
  c.problem = "shallow_multiwell";
  c.budget = 200;
  c.noise.sigma = 0.01;
  c.method = CompositionPlan{};
  const auto r = run_single(c);
  EXPECT_LE(r.row.evals_used, 200u);
}

TEST(HarnessSweep, RowsCompleteAndOrdered) {
  RunConfig c = toy_config(OptimizerId::ImFil, 30);
  c.repeats = 3;
  const std::vector<double> grid{1e-4, 1e-3, 1e-2};
  const auto s = run_sweep(c, grid, 2);
  ASSERT_EQ(s.rows.size(), 9u);
  for (std::size_t k = 0; k < s.rows.size(); ++k) {
    EXPECT_EQ(s.rows[k].sigma, grid[k / 3]);
    EXPECT_EQ(s.rows[k].repeat, static_cast<int>(k % 3));
    EXPECT_EQ(s.rows[k].seed, cell_seed(c.seed, k / 3, static_cast<int>(k % 3)));
  }
  EXPECT_EQ(s.aggregates.size(), 3u);
}

TEST(HarnessSweep, AggregatesRecomputable) {
  RunConfig c = toy_config(OptimizerId::NelderMead, 30);
  c.repeats = 4;
  const auto s = run_sweep(c, {1e-3, 5e-2}, 1);
  for (const auto& a : s.aggregates) {
    std::vector<double> err;
    double lowest = INFINITY, sum = 0.0;
    for (const auto& r : s.rows) {
      if (r.sigma != a.sigma) continue;
      err.push_back(r.true_energy - s.reference_minimum);
      sum += err.back();
      lowest = std::min(lowest, r.best_f);
    }
    ASSERT_EQ(err.size(), 4u);
    std::sort(err.begin(), err.end());
    EXPECT_EQ(a.median_error, 0.5 * (err[1] + err[2]));
    EXPECT_EQ(a.min_error, err[0]);
    EXPECT_EQ(a.mean_error, sum / 4);
    EXPECT_EQ(a.lowest_objective, lowest);
  }
}

TEST(HarnessSweep, RowsReplayFromRecordedSeed) {
  RunConfig c = toy_config(OptimizerId::Mads, 40);
  c.repeats = 2;
  const auto s = run_sweep(c, {1e-3, 1e-2}, 3);
  for (const auto& row : s.rows) {
    RunConfig replay = c;
    replay.seed = row.seed;
    replay.noise.sigma = row.sigma;
    EXPECT_EQ(run_single(replay).row.best_f, row.best_f);
  }
}

TEST(HarnessSweep, CsvIndependentOfJobs) {
  RunConfig c = toy_config(OptimizerId::ImFil, 40);
  c.repeats = 5;
  c.seed = 3;
  const std::vector<double> grid{1e-4, 1e-3, 1e-2};
  const auto one = rows_csv(run_sweep(c, grid, 1).rows);
  EXPECT_EQ(rows_csv(run_sweep(c, grid, 8).rows), one);
  EXPECT_EQ(rows_csv(run_sweep(c, grid, 3).rows), one);
  EXPECT_EQ(one.substr(0, one.find('\n')),
            "sigma,repeat,seed,best_f,true_energy,evals_used,termination,best_x0,best_x1");
}

TEST(HarnessSweep, InvalidGridRejected) {
  const RunConfig c = toy_config(OptimizerId::ImFil, 10);
  EXPECT_THROW(run_sweep(c, {}, 1), ConfigError);
  EXPECT_THROW(run_sweep(c, {1e-2, 1e-3}, 1), ConfigError);
  EXPECT_THROW(run_sweep(c, {1e-3}, 0), ConfigError);
}

TEST(HarnessSweep, ImfilBeatsBfgsOnToyMolecule) {
  RunConfig c = toy_config(OptimizerId::ImFil, 50);
  c.repeats = 20;
  c.seed = 5;
  const std::vector<double> grid{1e-4, 1e-3, 1e-2};
  const auto imfil = run_sweep(c, grid, 4);
  c.method = OptimizerSpec::defaults(OptimizerId::Bfgs);
  const auto bfgs = run_sweep(c, grid, 4);
  for (std::size_t i = 1; i < grid.size(); ++i) {
    EXPECT_LE(imfil.aggregates[i].mean_error, bfgs.aggregates[i].mean_error)
        << "sigma " << grid[i];
  }
}

TEST(HarnessSweep, LowestObjectiveLiftsWithNoise) {
  RunConfig c = toy_config(OptimizerId::ImFil, 50);
  c.repeats = 10;
  const auto s = run_sweep(c, {1e-3, 1e-2, 3e-2, 5e-2, 1e-1}, 4);
  for (std::size_t i = 1; i < s.aggregates.size(); ++i) {
    EXPECT_GE(s.aggregates[i].lowest_objective, s.aggregates[i - 1].lowest_objective);
  }
}

TEST(HarnessSurface, GridSize) {
  RunConfig c;
  c.problem = "hubbard";
  c.layers = 2;
  EXPECT_EQ(scan_surface(c, {{1}, {-1}, {1}, 7}, 0.0).size(), 7u);
  EXPECT_EQ(scan_surface(c, {{0, 3}, {-1, -0.5}, {1, 0.5}, 6}, 0.01).size(), 36u);
}

TEST(HarnessSurface, NoiselessScanUnimodal) {
  RunConfig c;
  c.x0 = Vec::Zero(2);
  const auto pts = scan_surface(c, {{0}, {-1}, {1}, 41}, 0.0);
  EXPECT_EQ(local_minima(pts), 1);
}

TEST(HarnessSurface, NoisyScanGrowsSpuriousMinima) {
  RunConfig c;
  c.x0 = Vec::Zero(2);
  int rough = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    c.seed = seed;
    rough += local_minima(scan_surface(c, {{0}, {-1}, {1}, 41}, 0.1)) > 1;
  }
  EXPECT_GE(rough, 10);
}

TEST(HarnessSurface, CsvHeaderNamesParameters) {
  RunConfig c;
  const ScanSpec spec{{1, 0}, {-1, -1}, {1, 1}, 3};
  std::ostringstream out;
  write_surface_csv(out, spec, scan_surface(c, spec, 0.0));
  const std::string csv = out.str();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "theta1,theta0,value");
  EXPECT_EQ(count(csv, "\n"), 10);
}

TEST(HarnessPlot, OnePathPerSeries) {
  RunConfig c = toy_config(OptimizerId::ImFil, 20);
  c.repeats = 2;
  const auto a = rows_csv(run_sweep(c, {1e-3, 1e-2}, 1).rows);
  c.method = OptimizerSpec::defaults(OptimizerId::Bfgs);
  const auto b = rows_csv(run_sweep(c, {1e-3, 1e-2}, 1).rows);
  const std::string svg = emit_plot({{"imfil", a}, {"bfgs", b}}, "sweep");
  EXPECT_EQ(count(svg, "class=\"series\""), 2);
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
  EXPECT_EQ(emit_plot({{"imfil", a}, {"bfgs", b}}, "sweep"), svg);
}

TEST(HarnessPlot, SurfacePlots) {
  RunConfig c;
  const ScanSpec two{{0, 1}, {-1, -1}, {1, 1}, 4};
  std::ostringstream out;
  write_surface_csv(out, two, scan_surface(c, two, 0.0));
  const std::string svg = emit_plot({{"s", out.str()}}, "surface");
  EXPECT_EQ(count(svg, "<rect x="), 16 + 1);
}

TEST(HarnessPlot, MalformedCsvReportsLine) {
  const std::string bad = "sigma,repeat,true_energy\n0.1,0,1\n0.2,1\n";
  try {
    emit_plot({{"x", bad}}, "sweep");
    FAIL();
  } catch (const CsvError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  try {
    emit_plot({{"x", "sigma,true_energy\n0.1,abc\n"}}, "sweep");
    FAIL();
  } catch (const CsvError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  EXPECT_THROW(emit_plot({{"x", "sigma,true_energy\n"}}, "sweep"), CsvError);
  EXPECT_THROW(emit_plot({{"x", ""}}, "sweep"), CsvError);
  EXPECT_THROW(emit_plot({{"x", "a,b\n1,2\n"}}, "sweep"), CsvError);
}
