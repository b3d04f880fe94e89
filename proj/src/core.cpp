#include "noisyopt/core.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <thread>

namespace noisyopt {

Box::Box(Vec lower, Vec upper) : lower_(std::move(lower)), upper_(std::move(upper)) {
  if (lower_.size() == 0) throw ContractViolation("Box: dimension must be >= 1");
  if (lower_.size() != upper_.size()) throw ContractViolation("Box: bound lengths differ");
  for (Eigen::Index i = 0; i < lower_.size(); ++i) {
    if (!(lower_[i] < upper_[i])) {
      throw ContractViolation("Box: lower[" + std::to_string(i) + "] must be < upper");
    }
  }
}

Box Box::cube(int n, double lo, double hi) {
  return Box(Vec::Constant(n, lo), Vec::Constant(n, hi));
}

double Box::volume() const { return width().prod(); }

bool Box::contains(const Vec& x, double tol) const {
  if (x.size() != lower_.size()) return false;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (!(x[i] >= lower_[i] - tol && x[i] <= upper_[i] + tol)) return false;
  }
  return true;
}

Vec Box::to_unit(const Vec& x) const {
  return ((x - lower_).array() / width().array()).matrix();
}

Vec Box::from_unit(const Vec& u) const {
  return lower_ + (u.array() * width().array()).matrix();
}

Vec clamp(const Vec& x, const Box& box) {
  if (x.size() != box.dimension()) {
    throw ContractViolation("clamp: dimension mismatch (" + std::to_string(x.size()) + " vs " +
                            std::to_string(box.dimension()) + ")");
  }
  return x.cwiseMax(box.lower()).cwiseMin(box.upper());
}

std::vector<Vec> uniform_design(const Box& box, int n, std::uint64_t seed) {
  if (n < 1) throw ContractViolation("uniform_design: n must be >= 1");
  const int dim = box.dimension();
  auto rng = substream(seed, 0x4c4853ULL);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<Vec> points(n, Vec(dim));
  std::vector<int> strata(n);
  for (int d = 0; d < dim; ++d) {
    std::iota(strata.begin(), strata.end(), 0);
    std::shuffle(strata.begin(), strata.end(), rng);
    for (int k = 0; k < n; ++k) {
      const double u = (strata[k] + unit(rng)) / n;
      points[k][d] = box.lower()[d] + u * (box.upper()[d] - box.lower()[d]);
    }
  }
  return points;
}

bool EvalRecord::finite() const { return std::isfinite(f); }

Budget::Budget(std::size_t max) : max_evals(max) {
  if (max == 0) throw ContractViolation("Budget: max_evals must be positive");
}

std::string_view to_string(Termination t) {
  switch (t) {
    case Termination::BudgetExhausted: return "BudgetExhausted";
    case Termination::ScaleExhausted: return "ScaleExhausted";
    case Termination::ImprovementBelowThreshold: return "ImprovementBelowThreshold";
    case Termination::StencilFailure: return "StencilFailure";
    case Termination::ModelDegenerate: return "ModelDegenerate";
    case Termination::UserStop: return "UserStop";
  }
  return "Unknown";
}

std::optional<Termination> termination_from_string(std::string_view s) {
  for (auto t : {Termination::BudgetExhausted, Termination::ScaleExhausted,
                 Termination::ImprovementBelowThreshold, Termination::StencilFailure,
                 Termination::ModelDegenerate, Termination::UserStop}) {
    if (to_string(t) == s) return t;
  }
  return std::nullopt;
}

std::optional<std::size_t> best_record(std::span<const EvalRecord> history) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < history.size(); ++i) {
    if (!history[i].finite()) continue;
    if (!best || history[i].f < history[*best].f) best = i;
  }
  return best;
}

OptimizeOutcome make_outcome(std::vector<EvalRecord> history, Termination t) {
  OptimizeOutcome out;
  out.termination = t;
  if (auto b = best_record(history)) {
    out.best_x = history[*b].x;
    out.best_f = history[*b].f;
  } else {
    out.best_f = std::numeric_limits<double>::quiet_NaN();
    if (!history.empty()) out.best_x = history.front().x;
  }
  out.history = std::move(history);
  return out;
}

BatchResult evaluate_batch(const Objective& obj, std::span<const Vec> points, Budget& budget,
                           std::size_t base_index, int threads) {
  BatchResult result;
  if (budget.exhausted()) {
    result.budget_exhausted = true;
    return result;
  }
  const std::size_t count = std::min(points.size(), budget.remaining());
  result.records.resize(count);
  for (std::size_t k = 0; k < count; ++k) {
    if (points[k].size() != obj.dimension) {
      throw ContractViolation("evaluate_batch: point dimension mismatch");
    }
    result.records[k].x = points[k];
    result.records[k].index = base_index + k;
  }

  auto work = [&](std::size_t k) {
    EvalRecord& r = result.records[k];
    r.f = obj.evaluate(r.x, r.index);
  };
  const int workers = static_cast<int>(std::min<std::size_t>(std::max(threads, 1), count));
  if (workers <= 1) {
    for (std::size_t k = 0; k < count; ++k) work(k);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t k = next++; k < count; k = next++) work(k);
      });
    }
  }

  budget.used += count;
  result.budget_exhausted = count < points.size() || budget.exhausted();
  return result;
}

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) { return mix64(mix64(a) ^ b); }

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return mix_seed(mix_seed(a, b), c);
}

std::mt19937_64 substream(std::uint64_t seed, std::uint64_t stream) {
  return std::mt19937_64(mix_seed(seed, stream));
}

Evaluator::Evaluator(Objective obj, std::size_t max_evals, int threads)
    : obj_(std::move(obj)), budget_(std::max<std::size_t>(max_evals, 1)), threads_(threads) {
  // An already exhausted budget yields a context that refuses every point.
  if (max_evals == 0) cap_ = 0;
  if (obj_.dimension < 1) throw ContractViolation("Evaluator: objective dimension must be >= 1");
  if (!obj_.evaluate) throw ContractViolation("Evaluator: objective has no evaluate function");
}

std::size_t Evaluator::remaining() const {
  std::size_t limit = budget_.max_evals;
  if (cap_) limit = std::min(limit, *cap_);
  return limit > budget_.used ? limit - budget_.used : 0;
}

BatchResult Evaluator::evaluate(std::span<const Vec> points) {
  BatchResult result;
  if (points.empty()) return result;
  if (halted()) {
    result.budget_exhausted = true;
    return result;
  }
  const std::size_t allowed = std::min(points.size(), remaining());
  Budget window(budget_.max_evals);
  window.used = budget_.max_evals - allowed;

  if (!stop_) {
    result = evaluate_batch(obj_, points.first(allowed), window, history_.size(), threads_);
  } else {
    // Sequential so the stop condition can cut the batch at the exact record.
    for (std::size_t k = 0; k < allowed; ++k) {
      auto one = evaluate_batch(obj_, points.subspan(k, 1), window, history_.size() + k, 1);
      result.records.push_back(std::move(one.records.front()));
      if (stop_(result.records.back())) {
        stopped_ = true;
        break;
      }
    }
  }
  budget_.used += result.records.size();
  history_.insert(history_.end(), result.records.begin(), result.records.end());
  result.budget_exhausted = result.records.size() < points.size() || halted();
  return result;
}

std::optional<EvalRecord> Evaluator::evaluate_one(const Vec& x) {
  auto r = evaluate(std::span<const Vec>(&x, 1));
  if (r.records.empty()) return std::nullopt;
  return r.records.front();
}

OptimizeOutcome Evaluator::outcome(Termination t) const { return make_outcome(history_, t); }

bool all_inside(std::span<const EvalRecord> history, const Box& box, double tol) {
  return std::all_of(history.begin(), history.end(),
                     [&](const EvalRecord& r) { return box.contains(r.x, tol); });
}

}  // namespace noisyopt
