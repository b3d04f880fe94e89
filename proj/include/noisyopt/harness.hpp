#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "noisyopt/compose.hpp"
#include "noisyopt/core.hpp"
#include "noisyopt/qsim.hpp"

namespace noisyopt::harness {

/// Invalid configuration; `key` names the offending entry.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& what)
      : std::runtime_error(key + ": " + what), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

/// Malformed harness CSV given to the plotter.
class CsvError : public std::runtime_error {
 public:
  CsvError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct ScanSpec {
  std::vector<int> params;  // one or two parameter indices
  std::vector<double> lower;
  std::vector<double> upper;
  int resolution = 21;
};

using Method = std::variant<OptimizerSpec, CompositionPlan>;

struct RunConfig {
  std::string problem = "toy_molecule";
  int dimension = 2;  // synthetic problems
  int layers = 3;     // hubbard
  Method method = OptimizerSpec::defaults(OptimizerId::ImFil);
  std::optional<Box> box;
  std::optional<Vec> x0;  // default: box center
  std::size_t budget = 100;
  qsim::NoiseSpec noise{0.0, 0.0};
  int n_samples = 25;
  int shots = 0;
  int threads = 1;  // per evaluation
  std::uint64_t seed = 0;
  int repeats = 20;
  std::vector<double> sigma_grid;
  std::optional<ScanSpec> surface;
};

/// Parses and validates a config document. Unknown keys are errors.
RunConfig config_from_json(const nlohmann::json& doc);
nlohmann::json config_to_json(const RunConfig& config);
/// Throws ConfigError when names, dimensions or options are inconsistent.
void validate(const RunConfig& config);

std::vector<std::string> problem_names();
std::string method_name(const Method& m);

/// A registered problem resolved against a config.
struct BenchProblem {
  std::string name;
  Box box = Box::cube(1, 0, 1);
  /// Noisy objective for noise width sigma (gate noise for circuits, additive
  /// noise on f for synthetic functions).
  std::function<Objective(double sigma, std::uint64_t seed)> objective;
  /// Noiseless value.
  std::function<double(const Vec&)> true_value;
  double reference_minimum = 0.0;
};

BenchProblem make_problem(const RunConfig& config);

struct SummaryRow {
  double sigma = 0.0;
  int repeat = 0;
  std::uint64_t seed = 0;
  double best_f = 0.0;
  double true_energy = 0.0;
  std::size_t evals_used = 0;
  Termination termination = Termination::BudgetExhausted;
  Vec best_x;
};

struct RunResult {
  OptimizeOutcome outcome;
  SummaryRow row;
};

/// One optimization with seed = config.seed and sigma = config.noise.sigma.
RunResult run_single(const RunConfig& config);

/// Seed of sweep cell (sigma_index, repeat).
std::uint64_t cell_seed(std::uint64_t master, std::size_t sigma_index, int repeat);

struct SigmaAggregate {
  double sigma = 0.0;
  int runs = 0;
  double mean_error = 0.0;
  double min_error = 0.0;
  double median_error = 0.0;
  double mean_best_f = 0.0;
  double min_best_f = 0.0;
  double median_evals = 0.0;
  /// Lowest objective value returned in any run at this sigma.
  double lowest_objective = 0.0;
};

struct SweepResult {
  std::vector<SummaryRow> rows;  // (sigma, repeat) order
  std::vector<SigmaAggregate> aggregates;
  double reference_minimum = 0.0;
};

/// repeats x |sigma_grid| runs spread over `jobs` worker threads.
SweepResult run_sweep(const RunConfig& config, const std::vector<double>& sigma_grid, int jobs = 1);

std::vector<SigmaAggregate> aggregate(const std::vector<SummaryRow>& rows, double reference);

double median(std::vector<double> v);

/// %.17g
std::string format_double(double v);

void write_rows_csv(std::ostream& out, const std::vector<SummaryRow>& rows);
void write_aggregate_csv(std::ostream& out, const std::vector<SigmaAggregate>& aggregates);

struct SurfacePoint {
  Vec theta;
  double value = 0.0;
};

/// Regular grid of noisy estimates around the base point config.x0 (or box
/// center); point k uses objective stream k.
std::vector<SurfacePoint> scan_surface(const RunConfig& config, const ScanSpec& spec,
                                       double sigma);

void write_surface_csv(std::ostream& out, const ScanSpec& spec,
                       const std::vector<SurfacePoint>& points);

struct PlotSeries {
  std::string label;
  std::string csv;
};

/// Standalone SVG for harness CSV text. `kind` is "sweep" (one series per
/// input, log sigma axis, mean true energy over a min..mean band) or
/// "surface" (line for 1D, heat map for 2D; first input only).
std::string emit_plot(const std::vector<PlotSeries>& series, const std::string& kind);

}  // namespace noisyopt::harness
