#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace noisyopt {

using Vec = Eigen::VectorXd;

/// Raised when a caller breaks a documented precondition (dimension mismatch,
/// empty design, point outside the box, ...).
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Axis-aligned search domain. lower[i] < upper[i] is enforced on construction.
class Box {
 public:
  Box(Vec lower, Vec upper);

  /// [lo, hi]^n
  static Box cube(int n, double lo, double hi);

  int dimension() const { return static_cast<int>(lower_.size()); }
  const Vec& lower() const { return lower_; }
  const Vec& upper() const { return upper_; }
  Vec width() const { return upper_ - lower_; }
  Vec center() const { return 0.5 * (lower_ + upper_); }
  double volume() const;
  bool contains(const Vec& x, double tol = 0.0) const;

  /// Unit-cube coordinates of x and back.
  Vec to_unit(const Vec& x) const;
  Vec from_unit(const Vec& u) const;

  friend bool operator==(const Box& a, const Box& b) {
    return a.lower_ == b.lower_ && a.upper_ == b.upper_;
  }

 private:
  Vec lower_;
  Vec upper_;
};

Vec clamp(const Vec& x, const Box& box);

/// Latin-hypercube sample of n points: every coordinate has exactly one point
/// in each of its n equal strata. Deterministic for a fixed seed.
std::vector<Vec> uniform_design(const Box& box, int n, std::uint64_t seed);

struct EvalRecord {
  Vec x;
  double f = 0.0;  // NaN marks an inaccessible point
  std::optional<double> uncertainty;
  std::size_t index = 0;

  bool finite() const;
};

struct Budget {
  std::size_t max_evals = 0;
  std::size_t used = 0;

  explicit Budget(std::size_t max);
  std::size_t remaining() const { return max_evals - used; }
  bool exhausted() const { return used >= max_evals; }
};

enum class Termination {
  BudgetExhausted,
  ScaleExhausted,
  ImprovementBelowThreshold,
  StencilFailure,
  ModelDegenerate,
  UserStop,
};

std::string_view to_string(Termination t);
std::optional<Termination> termination_from_string(std::string_view s);

struct OptimizeOutcome {
  Vec best_x;
  double best_f = 0.0;
  std::vector<EvalRecord> history;
  Termination termination = Termination::BudgetExhausted;

  std::size_t evals_used() const { return history.size(); }
};

/// Best finite record of a history (earliest on ties), or nullopt if every
/// value is NaN.
std::optional<std::size_t> best_record(std::span<const EvalRecord> history);

OptimizeOutcome make_outcome(std::vector<EvalRecord> history, Termination t);

/// Black-box objective. For a fixed run seed (captured inside `evaluate`),
/// evaluate(x, stream_id) must be a pure function of its arguments.
struct Objective {
  int dimension = 0;
  std::function<double(const Vec&, std::uint64_t)> evaluate;
};

struct BatchResult {
  std::vector<EvalRecord> records;
  bool budget_exhausted = false;
};

/// Evaluates up to budget.remaining() of `points`. Point k uses stream
/// base_index + k, so the result does not depend on `threads`.
BatchResult evaluate_batch(const Objective& obj, std::span<const Vec> points, Budget& budget,
                           std::size_t base_index, int threads = 1);

// ---------------------------------------------------------------------------
// Seeding helpers

/// SplitMix64 finalizer; used to derive independent substream keys.
std::uint64_t mix64(std::uint64_t x);
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c);

/// Engine for the (seed, stream) substream.
std::mt19937_64 substream(std::uint64_t seed, std::uint64_t stream);

// ---------------------------------------------------------------------------

/// Run context shared by the optimizer drivers: owns the budget and the
/// ordered evaluation history. Stream ids are global evaluation indices, so
/// chained stages never reuse a noise draw.
class Evaluator {
 public:
  Evaluator(Objective obj, std::size_t max_evals, int threads = 1);

  /// Evaluates as many points as the budget (and cap) allows. Truncation is
  /// reported through `budget_exhausted` and `halted()`.
  BatchResult evaluate(std::span<const Vec> points);
  std::optional<EvalRecord> evaluate_one(const Vec& x);

  const Budget& budget() const { return budget_; }
  std::size_t remaining() const;
  bool halted() const { return remaining() == 0 || stopped_; }
  Termination halt_reason() const {
    return stopped_ ? Termination::UserStop : Termination::BudgetExhausted;
  }

  /// Temporary ceiling on total evaluations (used for staged runs).
  void set_cap(std::optional<std::size_t> cap) { cap_ = cap; }

  /// Checked after every evaluation; returning true stops the run (UserStop).
  void set_stop_condition(std::function<bool(const EvalRecord&)> stop) {
    stop_ = std::move(stop);
  }

  int dimension() const { return obj_.dimension; }
  const std::vector<EvalRecord>& history() const { return history_; }

  OptimizeOutcome outcome(Termination t) const;

 private:
  Objective obj_;
  Budget budget_;
  int threads_;
  std::optional<std::size_t> cap_;
  std::function<bool(const EvalRecord&)> stop_;
  bool stopped_ = false;
  std::vector<EvalRecord> history_;
};

/// True when every point in `history` lies within `box` (absolute tolerance).
bool all_inside(std::span<const EvalRecord> history, const Box& box, double tol = 1e-12);

}  // namespace noisyopt
