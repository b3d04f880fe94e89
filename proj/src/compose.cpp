#include "noisyopt/compose.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>

namespace noisyopt {

namespace {

constexpr std::array<std::pair<OptimizerId, std::string_view>, 6> kNames{{
    {OptimizerId::ImFil, "imfil"},
    {OptimizerId::SnobFit, "snobfit"},
    {OptimizerId::TrustRegion, "bobyqa"},
    {OptimizerId::Mads, "mads"},
    {OptimizerId::Bfgs, "bfgs"},
    {OptimizerId::NelderMead, "neldermead"},
}};

// Variant alternative index expected for each optimizer id.
std::size_t options_index(OptimizerId id) {
  switch (id) {
    case OptimizerId::ImFil: return 0;
    case OptimizerId::SnobFit: return 1;
    case OptimizerId::TrustRegion: return 2;
    case OptimizerId::Mads: return 3;
    case OptimizerId::Bfgs: return 4;
    case OptimizerId::NelderMead: return 5;
  }
  return 0;
}

std::string format_interval(int i, double lo, double hi) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "derive_bounds: coordinate %d collapsed to [%.17g, %.17g]", i, lo,
                hi);
  return buf;
}

}  // namespace

std::string_view to_string(OptimizerId id) {
  for (const auto& [k, name] : kNames) {
    if (k == id) return name;
  }
  return "unknown";
}

std::optional<OptimizerId> optimizer_from_string(std::string_view s) {
  for (const auto& [k, name] : kNames) {
    if (name == s) return k;
  }
  return std::nullopt;
}

const std::vector<OptimizerId>& all_optimizers() {
  static const std::vector<OptimizerId> ids = [] {
    std::vector<OptimizerId> v;
    for (const auto& entry : kNames) v.push_back(entry.first);
    return v;
  }();
  return ids;
}

OptimizerSpec OptimizerSpec::defaults(OptimizerId id) {
  OptimizerSpec spec;
  spec.id = id;
  switch (id) {
    case OptimizerId::ImFil: spec.options = ImfilOptions{}; break;
    case OptimizerId::SnobFit: spec.options = SnobOptions{}; break;
    case OptimizerId::TrustRegion: spec.options = TrOptions{}; break;
    case OptimizerId::Mads: spec.options = MadsOptions{}; break;
    case OptimizerId::Bfgs: spec.options = BfgsOptions{}; break;
    case OptimizerId::NelderMead: spec.options = SimplexOptions{}; break;
  }
  return spec;
}

void OptimizerSpec::validate(const Box& box) const {
  if (options.index() != options_index(id)) {
    throw ContractViolation("optimizer options do not match optimizer " +
                            std::string(to_string(id)));
  }
  std::visit(
      [&](const auto& o) {
        using T = std::decay_t<decltype(o)>;
        if constexpr (std::is_same_v<T, TrOptions>) {
          o.validate(box);
        } else if constexpr (std::is_same_v<T, MadsOptions>) {
          o.validate(box.dimension());
        } else {
          o.validate();
        }
      },
      options);
}

StageResult run_optimizer(Evaluator& ev, const Box& box, const Vec& x0, const OptimizerSpec& spec,
                          const std::vector<EvalRecord>& initial) {
  spec.validate(box);
  StageResult out;
  switch (spec.id) {
    case OptimizerId::ImFil: {
      auto r = imfil_run(ev, box, x0, std::get<ImfilOptions>(spec.options));
      out.outcome = std::move(r.outcome);
      out.stall = std::move(r.stall);
      break;
    }
    case OptimizerId::SnobFit:
      out.outcome = snobfit_run(ev, box, x0, std::get<SnobOptions>(spec.options), initial).outcome;
      break;
    case OptimizerId::TrustRegion:
      out.outcome = tr_run(ev, box, x0, std::get<TrOptions>(spec.options)).outcome;
      break;
    case OptimizerId::Mads:
      out.outcome = mads_run(ev, box, x0, std::get<MadsOptions>(spec.options)).outcome;
      break;
    case OptimizerId::Bfgs:
      out.outcome = bfgs_run(ev, box, x0, std::get<BfgsOptions>(spec.options)).outcome;
      break;
    case OptimizerId::NelderMead:
      out.outcome = nelder_mead_run(ev, box, x0, std::get<SimplexOptions>(spec.options)).outcome;
      break;
  }
  return out;
}

OptimizeOutcome minimize(const Objective& obj, const Box& box, const Vec& x0, Budget budget,
                         const OptimizerSpec& spec, int threads) {
  Evaluator ev(obj, budget.remaining(), threads);
  return run_optimizer(ev, box, x0, spec).outcome;
}

void CompositionPlan::validate(const Box& box) const {
  first.validate(box);
  second.validate(box);
  if (const auto* r = std::get_if<BestPointRadius>(&bounds_rule)) {
    if (!(r->radius > 0.0)) throw ContractViolation("composition: radius must be positive");
  }
  if (const auto* f = std::get_if<FixedFraction>(&budget_split)) {
    if (!(f->fraction > 0.0 && f->fraction < 1.0)) {
      throw ContractViolation("composition: budget fraction must lie in (0, 1)");
    }
  }
}

DerivedBox derive_bounds(const StallReport& report, const Box& box) {
  const int n = box.dimension();
  if (report.last_good_center.size() != n) {
    throw ContractViolation("derive_bounds: dimension mismatch");
  }
  const Vec width = box.width();
  Vec lo(n), hi(n);
  std::vector<std::string> warnings;
  for (int i = 0; i < n; ++i) {
    const double c = report.last_good_center[i];
    const double h = report.last_good_scale * width[i];
    lo[i] = std::max(box.lower()[i], c - h);
    hi[i] = std::min(box.upper()[i], c + h);
    if (hi[i] > lo[i]) continue;
    warnings.push_back(format_interval(i, lo[i], hi[i]));
    const double wide = 2.0 * report.failed_scale * width[i];
    const double cc = std::clamp(c, box.lower()[i], box.upper()[i]);
    lo[i] = std::max(box.lower()[i], cc - wide);
    hi[i] = std::min(box.upper()[i], cc + wide);
    if (!(hi[i] > lo[i])) {
      lo[i] = box.lower()[i];
      hi[i] = box.upper()[i];
    }
  }
  return DerivedBox{Box(lo, hi), std::move(warnings)};
}

DerivedBox derive_bounds(const Vec& center, double radius, const Box& box) {
  StallReport report;
  report.last_good_center = center;
  report.last_good_scale = radius;
  report.failed_scale = radius;
  return derive_bounds(report, box);
}

CompositionResult run_composition(const Objective& obj, const Box& box, const Vec& x0,
                                  Budget budget, const CompositionPlan& plan, int threads) {
  plan.validate(box);
  CompositionResult result;
  Evaluator ev(obj, budget.remaining(), threads);

  if (const auto* f = std::get_if<FixedFraction>(&plan.budget_split)) {
    const auto cap = static_cast<std::size_t>(
        std::floor(f->fraction * static_cast<double>(budget.remaining())));
    ev.set_cap(std::max<std::size_t>(cap, 1));
  }
  StageResult first = run_optimizer(ev, box, x0, plan.first);
  ev.set_cap(std::nullopt);
  result.first = first.outcome;
  result.first_evals = ev.history().size();

  if (ev.halted() || first.outcome.history.empty()) {
    result.outcome = ev.outcome(ev.halted() ? ev.halt_reason() : first.outcome.termination);
    return result;
  }

  const Vec& best = first.outcome.best_x;
  const auto* radius = std::get_if<BestPointRadius>(&plan.bounds_rule);
  const DerivedBox derived = !radius && first.stall
                                 ? derive_bounds(*first.stall, box)
                                 : derive_bounds(best, radius ? radius->radius : 0.05, box);
  result.warnings = derived.warnings;
  result.second_box = derived.box;

  std::vector<EvalRecord> inside;
  for (const auto& r : ev.history()) {
    if (derived.box.contains(r.x)) inside.push_back(r);
  }
  const Vec start = clamp(best, derived.box);
  StageResult second = run_optimizer(ev, derived.box, start, plan.second, inside);
  result.second_ran = true;
  result.outcome = std::move(second.outcome);
  return result;
}

}  // namespace noisyopt
