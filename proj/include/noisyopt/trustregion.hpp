#pragma once

#include <optional>
#include <string>
#include <vector>

#include "noisyopt/core.hpp"

namespace noisyopt {

using Mat = Eigen::MatrixXd;

/// BOBYQA-style bound-constrained trust region. Radii default to fractions of
/// the smallest box width.
struct TrOptions {
  std::optional<double> rho_begin;  // 0.1 x min width
  std::optional<double> rho_end;    // 1e-4 x min width
  std::optional<int> m_points;      // 2n + 1
  double eta_accept = 0.1;
  double eta_strong = 0.7;
  double gamma_shrink = 0.5;
  double gamma_grow = 2.0;
  /// Steps shorter than this fraction of the radius trigger an alternative
  /// (geometry) iteration.
  double alt_step_fraction = 0.5;
  /// Fixed threshold on |f_trial - f_best| checked when the radius reaches
  /// rho_end; above it the radius is held and the run continues.
  double improvement_tol = 1e-6;

  void validate(const Box& box) const;
  double resolved_rho_begin(const Box& box) const;
  double resolved_rho_end(const Box& box) const;
  int resolved_m_points(int n) const;
};

/// m(x) = c + g.(x - center) + 1/2 (x - center)' B (x - center)
struct QuadModel {
  Vec center;
  double c = 0.0;
  Vec g;
  Mat B;

  double value(const Vec& x) const;
  Vec gradient(const Vec& x) const;
  static QuadModel zero(const Vec& center);
};

struct InterpSet {
  std::vector<Vec> points;
  std::vector<double> values;
  QuadModel model;
};

struct InitialPoints {
  Vec x0;                    // shifted inward if needed
  std::vector<Vec> points;   // points[0] == x0
  Vec rho;                   // per-coordinate displacement actually used
  std::vector<std::string> warnings;
};

InitialPoints init_interpolation(const Vec& x0, const Box& box, double rho_begin, int m_points);

int full_quadratic_size(int n);

/// Minimum-Frobenius-change model through all points (requires
/// n + 2 <= m). With m equal to the full quadratic size the fit is the unique
/// interpolating quadratic. Returns nullopt when the system is singular.
std::optional<QuadModel> fit_interpolation_model(const std::vector<Vec>& points,
                                                 const std::vector<double>& values,
                                                 const Vec& center, const QuadModel& prior,
                                                 double scale);

/// Lagrange function of point k for the same interpolation system.
std::optional<QuadModel> lagrange_function(const std::vector<Vec>& points, std::size_t k,
                                           const Vec& center, double scale);

/// Approximate minimizer of g.s + 1/2 s'Bs over ||s|| <= radius and
/// step_lower <= s <= step_upper (projected truncated conjugate gradient).
/// The returned step satisfies both constraints exactly.
Vec truncated_cg_step(const Vec& g, const Mat& B, double radius, const Vec& step_lower,
                      const Vec& step_upper);

/// Trust-region step for `model` (whose gradient and Hessian are taken at
/// `center`) restricted to the box.
Vec solve_tr_subproblem(const QuadModel& model, const Vec& center, double radius, const Box& box);

struct TrIterate {
  double radius = 0.0;
  double step_norm = 0.0;
  bool alternative = false;
  bool accepted = false;
};

struct TrResult {
  OptimizeOutcome outcome;
  std::vector<TrIterate> trace;
  std::vector<std::string> warnings;
  /// Largest relative interpolation residual over all model fits.
  double max_interp_residual = 0.0;
};

TrResult tr_run(Evaluator& ev, const Box& box, const Vec& x0, const TrOptions& options);

OptimizeOutcome tr_minimize(const Objective& obj, const Box& box, const Vec& x0, Budget budget,
                            const TrOptions& options = {});

}  // namespace noisyopt
