#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "noisyopt/baselines.hpp"
#include "noisyopt/core.hpp"
#include "noisyopt/imfil.hpp"
#include "noisyopt/mads.hpp"
#include "noisyopt/snobfit.hpp"
#include "noisyopt/trustregion.hpp"

namespace noisyopt {

enum class OptimizerId { ImFil, SnobFit, TrustRegion, Mads, Bfgs, NelderMead };

/// Registered names: imfil, snobfit, bobyqa, mads, bfgs, neldermead.
std::string_view to_string(OptimizerId id);
std::optional<OptimizerId> optimizer_from_string(std::string_view s);
const std::vector<OptimizerId>& all_optimizers();

using OptimizerOptions =
    std::variant<ImfilOptions, SnobOptions, TrOptions, MadsOptions, BfgsOptions, SimplexOptions>;

struct OptimizerSpec {
  OptimizerId id = OptimizerId::ImFil;
  OptimizerOptions options = ImfilOptions{};

  /// Spec with default options for `id`.
  static OptimizerSpec defaults(OptimizerId id);
  /// Throws ContractViolation when the options alternative does not match id.
  void validate(const Box& box) const;
};

struct StageResult {
  OptimizeOutcome outcome;
  std::optional<StallReport> stall;  // ImFil only
};

/// Runs one optimizer on a shared evaluator. `initial` seeds SnobFit's design
/// and is ignored by the others.
StageResult run_optimizer(Evaluator& ev, const Box& box, const Vec& x0, const OptimizerSpec& spec,
                          const std::vector<EvalRecord>& initial = {});

OptimizeOutcome minimize(const Objective& obj, const Box& box, const Vec& x0, Budget budget,
                         const OptimizerSpec& spec, int threads = 1);

struct LastGoodStencil {};
struct BestPointRadius {
  double radius = 0.05;  // fraction of box width
};
using BoundsRule = std::variant<LastGoodStencil, BestPointRadius>;

struct FirstUntilStall {};
struct FixedFraction {
  double fraction = 0.5;
};
using BudgetSplit = std::variant<FirstUntilStall, FixedFraction>;

struct CompositionPlan {
  OptimizerSpec first = OptimizerSpec::defaults(OptimizerId::ImFil);
  OptimizerSpec second = OptimizerSpec::defaults(OptimizerId::SnobFit);
  BoundsRule bounds_rule = LastGoodStencil{};
  BudgetSplit budget_split = FirstUntilStall{};

  void validate(const Box& box) const;
};

struct DerivedBox {
  Box box;
  std::vector<std::string> warnings;
};

/// center +- last_good_scale * width, intersected with `box`. Intervals that
/// collapse to zero width are rebuilt with 2 * failed_scale.
DerivedBox derive_bounds(const StallReport& report, const Box& box);

/// center +- radius * width, intersected with `box`.
DerivedBox derive_bounds(const Vec& center, double radius, const Box& box);

struct CompositionResult {
  OptimizeOutcome outcome;  // combined history
  OptimizeOutcome first;
  std::optional<Box> second_box;
  std::size_t first_evals = 0;
  bool second_ran = false;
  std::vector<std::string> warnings;
};

CompositionResult run_composition(const Objective& obj, const Box& box, const Vec& x0,
                                  Budget budget, const CompositionPlan& plan, int threads = 1);

}  // namespace noisyopt
