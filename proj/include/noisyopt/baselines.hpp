#pragma once

#include <vector>

#include "noisyopt/core.hpp"

namespace noisyopt {

/// Finite-difference BFGS with a strong-Wolfe line search. Iterates are
/// projected onto the box.
struct BfgsOptions {
  double fd_step = 1e-6;  // fraction of each coordinate's width
  double wolfe_c1 = 1e-4;
  double wolfe_c2 = 0.9;
  double grad_tol = 1e-8;
  int max_line_steps = 20;

  void validate() const;
};

struct BfgsResult {
  OptimizeOutcome outcome;
  /// Objective value at the iterate after each completed line search.
  std::vector<double> line_search_values;
};

/// Forward differences (backward at the upper bound); the n probes run as a
/// batch. Entries for NaN probes are NaN.
Vec fd_gradient(Evaluator& ev, const Vec& x, double fx, const Box& box, double fd_step,
                bool* truncated = nullptr);

BfgsResult bfgs_run(Evaluator& ev, const Box& box, const Vec& x0, const BfgsOptions& options);

OptimizeOutcome bfgs_minimize(const Objective& obj, const Box& box, const Vec& x0, Budget budget,
                              const BfgsOptions& options = {});

struct SimplexOptions {
  double reflection = 1.0;
  double expansion = 2.0;
  double contraction = 0.5;
  double shrink = 0.5;
  double init_spread = 0.05;  // fraction of each coordinate's width
  double f_tol = 1e-8;
  /// Stop when the simplex diameter (unit-box coordinates) falls below this.
  double x_tol = 1e-8;

  void validate() const;
};

enum class SimplexMove { Reflect, Expand, OutsideContract, InsideContract, Shrink };

struct SimplexResult {
  OptimizeOutcome outcome;
  std::vector<SimplexMove> moves;
};

SimplexResult nelder_mead_run(Evaluator& ev, const Box& box, const Vec& x0,
                              const SimplexOptions& options);

OptimizeOutcome nelder_mead_minimize(const Objective& obj, const Box& box, const Vec& x0,
                                     Budget budget, const SimplexOptions& options = {});

}  // namespace noisyopt
