#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "noisyopt/core.hpp"

namespace noisyopt {

enum class PollDirections { OrthogonalBasis2n, RandomUnit2n };

/// Mesh-adaptive direct search. Frame and mesh sizes live in unit-box
/// coordinates (fractions of each coordinate's width).
struct MadsOptions {
  PollDirections poll = PollDirections::OrthogonalBasis2n;
  double initial_frame = 0.25;
  int max_consecutive_failures = 12;
  bool search_enabled = true;
  double min_mesh = 1e-6;
  /// Evaluate search and poll candidates in blocks of `block_size` and stop
  /// at the first block that improves the incumbent.
  bool opportunistic = true;
  int block_size = 2;
  /// Optional per-coordinate emphasis applied to poll directions.
  std::optional<Vec> direction_weights;
  std::uint64_t seed = 0;

  void validate(int n) const;
};

struct MadsState {
  EvalRecord incumbent;
  double mesh = 0.0;   // delta
  double frame = 0.0;  // Delta
  int consecutive_failures = 0;
  int iteration = 0;
  /// Displacement of the last successful iteration (empty before any).
  Vec last_step;
};

/// delta = min(Delta, Delta^2)
double mesh_for_frame(double frame);

/// Poll set: +-directions of a random basis scaled to the frame, rounded to
/// the mesh around the incumbent and pulled back inside the box along each
/// coordinate in whole mesh steps. The incumbent and duplicates are dropped.
/// Points are ordered by alignment with state.last_step when it is set.
std::vector<Vec> poll_points(const MadsState& state, const Box& box, const MadsOptions& options,
                             std::uint64_t seed);

/// Latin-hypercube sample of n points in the frame, snapped to the mesh. After
/// a success the first candidate repeats the last step from the incumbent.
std::vector<Vec> search_points(const MadsState& state, const Box& box, std::uint64_t seed);

struct MadsIteration {
  double frame = 0.0;
  double mesh = 0.0;
  Vec anchor;              // incumbent the candidate points were generated around
  std::size_t search_evals = 0;
  std::size_t poll_evals = 0;
  bool search_success = false;
  bool poll_success = false;
};

struct MadsResult {
  OptimizeOutcome outcome;
  std::vector<MadsIteration> trace;
};

MadsResult mads_run(Evaluator& ev, const Box& box, const Vec& x0, const MadsOptions& options);

OptimizeOutcome mads_minimize(const Objective& obj, const Box& box, const Vec& x0, Budget budget,
                              const MadsOptions& options = {});

}  // namespace noisyopt
