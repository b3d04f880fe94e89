// Command-line front end for the benchmark harness.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "noisyopt/harness.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace noisyopt;
using namespace noisyopt::harness;

namespace {

constexpr int kConfigError = 2;
constexpr int kRuntimeError = 3;

struct CommonArgs {
  std::string config_path;
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  std::vector<std::string> sets;
  std::optional<std::string> problem;
  std::optional<std::string> optimizer;
  std::optional<std::size_t> budget;
  std::optional<double> sigma;
  std::optional<int> repeats;
  std::optional<std::string> sigma_grid;
};

void add_common(CLI::App* cmd, CommonArgs& a) {
  cmd->add_option("--config", a.config_path, "JSON config file");
  cmd->add_option("--out", a.out_dir, "output directory");
  cmd->add_option("--seed", a.seed, "master seed");
  cmd->add_option("--jobs", a.jobs, "worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--set", a.sets, "override a top-level key, KEY=JSON");
  cmd->add_option("--problem", a.problem, "problem name");
  cmd->add_option("--optimizer", a.optimizer, "optimizer name");
  cmd->add_option("--budget", a.budget, "evaluation budget");
  cmd->add_option("--sigma", a.sigma, "noise width");
  cmd->add_option("--repeats", a.repeats, "repeats per sigma");
  cmd->add_option("--sigma-grid", a.sigma_grid, "comma-separated sigma values");
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path, "cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(what, e.what());
  }
}

RunConfig load_config(const CommonArgs& a) {
  json doc = a.config_path.empty() ? json::object() : parse_json(read_file(a.config_path), a.config_path);
  if (!doc.is_object()) throw ConfigError(a.config_path, "expected a JSON object");
  for (const auto& s : a.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set", "expected KEY=JSON");
    const std::string key = s.substr(0, eq);
    const std::string value = s.substr(eq + 1);
    json v = json::parse(value, nullptr, false);
    doc[key] = v.is_discarded() ? json(value) : v;
  }
  if (a.seed) doc["seed"] = *a.seed;
  if (a.problem) doc["problem"] = *a.problem;
  if (a.optimizer) {
    doc.erase("compose");
    doc["optimizer"] = *a.optimizer;
  }
  if (a.budget) doc["budget"] = *a.budget;
  if (a.sigma) doc["noise"]["sigma"] = *a.sigma;
  if (a.repeats) doc["repeats"] = *a.repeats;
  if (a.sigma_grid) {
    json grid = json::array();
    std::istringstream in(*a.sigma_grid);
    std::string item;
    while (std::getline(in, item, ',')) {
      try {
        grid.push_back(std::stod(item));
      } catch (const std::exception&) {
        throw ConfigError("--sigma-grid", "'" + item + "' is not a number");
      }
    }
    doc["sigma_grid"] = grid;
  }
  return config_from_json(doc);
}

fs::path out_dir(const CommonArgs& a) {
  fs::path dir(a.out_dir);
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

void write_config(const fs::path& dir, const RunConfig& c) {
  write_text(dir / "config.json", config_to_json(c).dump(2) + "\n");
}

int cmd_run(const CommonArgs& a) {
  const RunConfig c = load_config(a);
  const RunResult r = run_single(c);
  const fs::path dir = out_dir(a);
  std::ostringstream csv;
  write_rows_csv(csv, {r.row});
  write_text(dir / "run.csv", csv.str());
  write_config(dir, c);
  std::cout << c.problem << ' ' << method_name(c.method) << " sigma=" << format_double(c.noise.sigma)
            << " best_f=" << format_double(r.row.best_f)
            << " true_energy=" << format_double(r.row.true_energy)
            << " evals=" << r.row.evals_used << " termination=" << to_string(r.row.termination)
            << '\n';
  return 0;
}

int cmd_sweep(const CommonArgs& a) {
  const RunConfig c = load_config(a);
  if (c.sigma_grid.empty()) throw ConfigError("sigma_grid", "must not be empty");
  const SweepResult s = run_sweep(c, c.sigma_grid, a.jobs);
  const fs::path dir = out_dir(a);
  std::ostringstream rows, agg;
  write_rows_csv(rows, s.rows);
  write_aggregate_csv(agg, s.aggregates);
  write_text(dir / "sweep.csv", rows.str());
  write_text(dir / "sweep_summary.csv", agg.str());
  write_config(dir, c);
  std::cout << agg.str();
  return 0;
}

int cmd_surface(const CommonArgs& a) {
  const RunConfig c = load_config(a);
  if (!c.surface) throw ConfigError("surface", "missing scan specification");
  const auto points = scan_surface(c, *c.surface, c.noise.sigma);
  const fs::path dir = out_dir(a);
  std::ostringstream csv;
  write_surface_csv(csv, *c.surface, points);
  write_text(dir / "surface.csv", csv.str());
  write_config(dir, c);
  std::cout << points.size() << " points written to " << (dir / "surface.csv").string() << '\n';
  return 0;
}

int cmd_plot(const std::string& kind, const std::vector<std::string>& inputs,
             const std::string& svg_path) {
  std::vector<PlotSeries> series;
  for (const auto& in : inputs) {
    const auto eq = in.find('=');
    const std::string path = eq == std::string::npos ? in : in.substr(eq + 1);
    const std::string label =
        eq == std::string::npos ? fs::path(path).stem().string() : in.substr(0, eq);
    series.push_back({label, read_file(path)});
  }
  const std::string svg = emit_plot(series, kind);
  const fs::path out(svg_path);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_text(out, svg);
  std::cout << "wrote " << out.string() << '\n';
  return 0;
}

int cmd_list() {
  std::cout << "problems:";
  for (const auto& p : problem_names()) std::cout << ' ' << p;
  std::cout << "\noptimizers:";
  for (OptimizerId id : all_optimizers()) std::cout << ' ' << to_string(id);
  std::cout << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Noisy derivative-free optimizer benchmark harness"};
  app.require_subcommand(1);

  CommonArgs run_args, sweep_args, surface_args;
  auto* run = app.add_subcommand("run", "single optimization");
  add_common(run, run_args);
  auto* sweep = app.add_subcommand("sweep", "noise sweep with repeats");
  add_common(sweep, sweep_args);
  auto* surface = app.add_subcommand("surface", "1D/2D objective scan");
  add_common(surface, surface_args);

  std::string kind = "sweep";
  std::vector<std::string> inputs;
  std::string svg_path = "plot.svg";
  auto* plot = app.add_subcommand("plot", "render harness CSV as SVG");
  plot->add_option("--kind", kind, "sweep or surface")->check(CLI::IsMember({"sweep", "surface"}));
  plot->add_option("-o,--output", svg_path, "SVG file to write");
  plot->add_option("inputs", inputs, "CSV files, optionally LABEL=PATH")->required();

  auto* list = app.add_subcommand("list", "registered problems and optimizers");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  try {
    if (run->parsed()) return cmd_run(run_args);
    if (sweep->parsed()) return cmd_sweep(sweep_args);
    if (surface->parsed()) return cmd_surface(surface_args);
    if (plot->parsed()) return cmd_plot(kind, inputs, svg_path);
    if (list->parsed()) return cmd_list();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kConfigError;
}
