#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "noisyopt/core.hpp"

namespace noisyopt {

/// Implicit filtering controls. Scales are fractions of the box width.
struct ImfilOptions {
  std::vector<double> scales = default_scales();
  int max_inner_iters = 6;
  double armijo_c = 1e-4;
  int max_backtracks = 5;
  std::vector<Vec> custom_directions;
  /// Stop when a whole scale improves the incumbent by less than this. 0 disables.
  double improvement_tol = 0.0;

  /// 2^-1 .. 2^-9
  static std::vector<double> default_scales();
  void validate() const;
};

struct Stencil {
  Vec center;
  double scale = 0.0;
  std::vector<Vec> points;
  /// Coordinate each point displaces (-1 for a custom direction) and its sign.
  std::vector<int> axis;
  std::vector<int> sign;
};

struct StallReport {
  Vec last_good_center;
  double last_good_scale = 0.0;
  double failed_scale = 0.0;
};

Stencil build_stencil(const Vec& center, double scale, const Box& box,
                      const std::vector<Vec>& custom_directions = {});

/// Difference gradient from a stencil and its values (`values[k]` belongs to
/// `stencil.points[k]`; NaN values are skipped). Central differences where both
/// sides exist, one-sided against the center otherwise, 0 when neither does.
/// Returns nullopt (stencil failure) when every stencil value is NaN.
std::optional<Vec> stencil_gradient(const Stencil& stencil, double center_value,
                                    const std::vector<double>& values);

struct ImfilResult {
  OptimizeOutcome outcome;
  StallReport stall;
  /// Scale used by each stencil, in evaluation order.
  std::vector<double> scale_trace;
};

ImfilResult imfil_run(Evaluator& ev, const Box& box, const Vec& x0, const ImfilOptions& options);

std::pair<OptimizeOutcome, StallReport> imfil_minimize(const Objective& obj, const Box& box,
                                                       const Vec& x0, Budget budget,
                                                       const ImfilOptions& options = {});

}  // namespace noisyopt
