#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "noisyopt/core.hpp"
#include "noisyopt/trustregion.hpp"

namespace noisyopt {

struct SnobOptions {
  int batch_size = 0;  // 0 selects max(6, n + 2)
  double local_fraction = 0.5;
  double uncertainty_floor = 0.0;
  int stall_window = 5;
  /// Weight least-squares rows by 1 / max(uncertainty, uncertainty_floor)
  /// when records carry an uncertainty. Off by default.
  bool use_uncertainty = false;
  std::uint64_t seed = 0;

  int resolved_batch(int n) const;
  void validate() const;
};

/// Axis-aligned cell of the partition. `members` index into SnobState::records.
struct SubBox {
  Vec lower;
  Vec upper;
  std::vector<std::size_t> members;

  /// Volume relative to the search box (so all cells sum to 1).
  double scaled_volume(const Box& domain) const;
  bool contains(const Vec& x) const;
};

struct SnobState {
  Box domain;
  std::vector<EvalRecord> records;
  std::vector<SubBox> boxes;
  std::optional<std::size_t> best;  // index into records
  int generation = 0;
  std::uint64_t seed = 0;

  explicit SnobState(Box domain, std::uint64_t seed = 0);
  const EvalRecord& best_record() const;
  /// Cell holding x (first match on shared faces).
  std::size_t locate(const Vec& x) const;
};

struct SnobStep {
  SnobState state;
  std::vector<Vec> request;
  /// ModelDegenerate when generation 0 had no finite value.
  std::optional<Termination> error;
};

/// Inserts `new_evals`, refines the partition and proposes the next batch.
/// Deterministic in (state, new_evals, options).
SnobStep snobfit_step(SnobState state, const std::vector<EvalRecord>& new_evals,
                      const SnobOptions& options);

enum class ModelKind { Full, Diagonal, Linear };

struct LocalFit {
  QuadModel model;
  ModelKind kind = ModelKind::Linear;
  Vec suggested;
  /// Span of best plus neighbors (the trust box of the suggestion).
  Vec span_lower;
  Vec span_upper;
};

/// Least-squares quadratic around `best` (full, diagonal or linear depending
/// on the neighbor count and rank). Returns nullopt (ModelDegenerate) when
/// fewer than n + 1 finite records span an affine basis.
std::optional<LocalFit> fit_local_quadratic(const EvalRecord& best,
                                            const std::vector<EvalRecord>& neighbors,
                                            const Box& domain, bool use_uncertainty = false,
                                            double uncertainty_floor = 0.0);

struct SnobResult {
  OptimizeOutcome outcome;
  int generations = 0;
};

/// Drives snobfit_step on a shared evaluator. `initial` records (already
/// evaluated, e.g. by an earlier stage) seed the design.
SnobResult snobfit_run(Evaluator& ev, const Box& box, const std::optional<Vec>& x0,
                       const SnobOptions& options, const std::vector<EvalRecord>& initial = {});

OptimizeOutcome snobfit_minimize(const Objective& obj, const Box& box,
                                 const std::optional<Vec>& x0, Budget budget,
                                 const SnobOptions& options = {});

}  // namespace noisyopt
