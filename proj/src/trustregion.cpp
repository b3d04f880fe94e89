#include "noisyopt/trustregion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace noisyopt {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool same_point(const Vec& a, const Vec& b) { return (a.array() == b.array()).all(); }

// Basis used when the interpolation set is a full quadratic:
// [1, s_i, s_i s_j (i <= j)] with s scaled by the radius.
Vec full_basis(const Vec& s) {
  const auto n = s.size();
  Vec phi(full_quadratic_size(static_cast<int>(n)));
  Eigen::Index k = 0;
  phi[k++] = 1.0;
  for (Eigen::Index i = 0; i < n; ++i) phi[k++] = s[i];
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) phi[k++] = (i == j ? 0.5 : 1.0) * s[i] * s[j];
  }
  return phi;
}

// Converts full-basis coefficients (in scaled coordinates) back into a model.
QuadModel from_full_coefficients(const Vec& coef, const Vec& center, double scale) {
  const auto n = center.size();
  QuadModel m = QuadModel::zero(center);
  Eigen::Index k = 0;
  m.c = coef[k++];
  for (Eigen::Index i = 0; i < n; ++i) m.g[i] = coef[k++] / scale;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      const double h = coef[k++] / (scale * scale);
      m.B(i, j) = h;
      m.B(j, i) = h;
    }
  }
  return m;
}

struct System {
  Mat matrix;
  bool full = false;
};

// Interpolation system for the scaled displacements. For the minimum
// Frobenius-norm variant this is the KKT matrix [A X'; X 0] with
// A_ij = 1/2 (s_i.s_j)^2 and X the [1; s] columns.
System build_system(const std::vector<Vec>& scaled) {
  const auto m = static_cast<Eigen::Index>(scaled.size());
  const auto n = scaled.front().size();
  System sys;
  sys.full = m == full_quadratic_size(static_cast<int>(n));
  if (sys.full) {
    sys.matrix.resize(m, m);
    for (Eigen::Index r = 0; r < m; ++r) sys.matrix.row(r) = full_basis(scaled[r]).transpose();
    return sys;
  }
  sys.matrix = Mat::Zero(m + n + 1, m + n + 1);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      const double d = scaled[i].dot(scaled[j]);
      sys.matrix(i, j) = 0.5 * d * d;
    }
    sys.matrix(i, m) = 1.0;
    sys.matrix(m, i) = 1.0;
    for (Eigen::Index k = 0; k < n; ++k) {
      sys.matrix(i, m + 1 + k) = scaled[i][k];
      sys.matrix(m + 1 + k, i) = scaled[i][k];
    }
  }
  return sys;
}

std::optional<Vec> solve_system(const System& sys, const Vec& rhs) {
  Eigen::FullPivLU<Mat> lu(sys.matrix);
  lu.setThreshold(1e-13);
  if (!lu.isInvertible()) return std::nullopt;
  Vec sol = lu.solve(rhs);
  if (!sol.allFinite()) return std::nullopt;
  return sol;
}

// Model correction from a KKT solution [lambda; c; g] in scaled coordinates.
QuadModel from_kkt(const Vec& sol, const std::vector<Vec>& scaled, const Vec& center,
                   double scale) {
  const auto m = static_cast<Eigen::Index>(scaled.size());
  const auto n = center.size();
  QuadModel d = QuadModel::zero(center);
  d.c = sol[m];
  d.g = sol.segment(m + 1, n) / scale;
  for (Eigen::Index i = 0; i < m; ++i) d.B += sol[i] * scaled[i] * scaled[i].transpose();
  d.B /= scale * scale;
  return d;
}

std::vector<Vec> scaled_points(const std::vector<Vec>& points, const Vec& center, double scale) {
  std::vector<Vec> out;
  out.reserve(points.size());
  for (const Vec& p : points) out.push_back((p - center) / scale);
  return out;
}

}  // namespace

int full_quadratic_size(int n) { return (n + 1) * (n + 2) / 2; }

double QuadModel::value(const Vec& x) const {
  const Vec s = x - center;
  return c + g.dot(s) + 0.5 * s.dot(B * s);
}

Vec QuadModel::gradient(const Vec& x) const { return g + B * (x - center); }

QuadModel QuadModel::zero(const Vec& center) {
  const auto n = center.size();
  return QuadModel{center, 0.0, Vec::Zero(n), Mat::Zero(n, n)};
}

void TrOptions::validate(const Box& box) const {
  const double rb = resolved_rho_begin(box);
  const double re = resolved_rho_end(box);
  if (!(rb > 0.0) || !(re > 0.0) || !(re < rb)) {
    throw ContractViolation("TrOptions: require 0 < rho_end < rho_begin");
  }
  const int n = box.dimension();
  const int m = resolved_m_points(n);
  if (m < n + 2 || m > full_quadratic_size(n)) {
    throw ContractViolation("TrOptions: m_points must lie in [n + 2, (n + 1)(n + 2)/2]");
  }
  if (!(eta_accept > 0.0 && eta_accept < eta_strong && eta_strong < 1.0)) {
    throw ContractViolation("TrOptions: require 0 < eta_accept < eta_strong < 1");
  }
  if (!(gamma_shrink > 0.0 && gamma_shrink < 1.0)) {
    throw ContractViolation("TrOptions: gamma_shrink must lie in (0, 1)");
  }
  if (!(gamma_grow > 1.0)) throw ContractViolation("TrOptions: gamma_grow must exceed 1");
  if (!(alt_step_fraction > 0.0 && alt_step_fraction < 1.0)) {
    throw ContractViolation("TrOptions: alt_step_fraction must lie in (0, 1)");
  }
  if (!(improvement_tol >= 0.0)) throw ContractViolation("TrOptions: improvement_tol must be >= 0");
}

double TrOptions::resolved_rho_begin(const Box& box) const {
  return rho_begin.value_or(0.1 * box.width().minCoeff());
}

double TrOptions::resolved_rho_end(const Box& box) const {
  return rho_end.value_or(1e-4 * box.width().minCoeff());
}

int TrOptions::resolved_m_points(int n) const { return m_points.value_or(2 * n + 1); }

InitialPoints init_interpolation(const Vec& x0, const Box& box, double rho_begin, int m_points) {
  const int n = box.dimension();
  if (x0.size() != n) throw ContractViolation("init_interpolation: x0 dimension mismatch");
  if (!box.contains(x0)) throw ContractViolation("init_interpolation: x0 outside the box");
  if (m_points < n + 2 || m_points > full_quadratic_size(n)) {
    throw ContractViolation("init_interpolation: m_points must lie in [n + 2, (n + 1)(n + 2)/2]");
  }
  InitialPoints init;
  init.x0 = x0;
  init.rho = Vec::Constant(n, rho_begin);
  const Vec w = box.width();
  for (int i = 0; i < n; ++i) {
    if (rho_begin > 0.5 * w[i]) {
      init.rho[i] = 0.5 * w[i];
      init.warnings.push_back("rho_begin reduced to half the width of coordinate " +
                              std::to_string(i));
    }
    const double lo = box.lower()[i] + init.rho[i];
    const double hi = box.upper()[i] - init.rho[i];
    const double shifted = std::clamp(x0[i], lo, hi);
    if (shifted != x0[i]) {
      init.warnings.push_back("x0 coordinate " + std::to_string(i) + " moved inward");
      init.x0[i] = shifted;
    }
  }

  auto& pts = init.points;
  pts.push_back(init.x0);
  for (int i = 0; i < n && static_cast<int>(pts.size()) < m_points; ++i) {
    Vec p = init.x0;
    p[i] += init.rho[i];
    pts.push_back(p);
  }
  for (int i = 0; i < n && static_cast<int>(pts.size()) < m_points; ++i) {
    Vec p = init.x0;
    p[i] -= init.rho[i];
    pts.push_back(p);
  }
  for (int i = 0; i < n && static_cast<int>(pts.size()) < m_points; ++i) {
    for (int j = i + 1; j < n && static_cast<int>(pts.size()) < m_points; ++j) {
      Vec p = init.x0;
      p[i] += init.rho[i];
      p[j] += init.rho[j];
      pts.push_back(p);
    }
  }
  return init;
}

std::optional<QuadModel> fit_interpolation_model(const std::vector<Vec>& points,
                                                 const std::vector<double>& values,
                                                 const Vec& center, const QuadModel& prior,
                                                 double scale) {
  if (points.size() != values.size() || points.empty()) {
    throw ContractViolation("fit_interpolation_model: points and values must match");
  }
  const auto scaled = scaled_points(points, center, scale);
  const System sys = build_system(scaled);
  const auto m = static_cast<Eigen::Index>(points.size());

  if (sys.full) {
    Vec rhs(m);
    for (Eigen::Index i = 0; i < m; ++i) rhs[i] = values[i];
    const auto coef = solve_system(sys, rhs);
    if (!coef) return std::nullopt;
    return from_full_coefficients(*coef, center, scale);
  }

  // Fit the residual of the prior model; the correction has least Frobenius norm.
  QuadModel base = prior;
  base.c = prior.value(center);
  base.g = prior.gradient(center);
  base.center = center;
  Vec rhs = Vec::Zero(sys.matrix.rows());
  for (Eigen::Index i = 0; i < m; ++i) rhs[i] = values[i] - base.value(points[i]);
  const auto sol = solve_system(sys, rhs);
  if (!sol) return std::nullopt;
  const QuadModel d = from_kkt(*sol, scaled, center, scale);
  base.c += d.c;
  base.g += d.g;
  base.B += d.B;
  return base;
}

std::optional<QuadModel> lagrange_function(const std::vector<Vec>& points, std::size_t k,
                                           const Vec& center, double scale) {
  if (k >= points.size()) throw ContractViolation("lagrange_function: index out of range");
  const auto scaled = scaled_points(points, center, scale);
  const System sys = build_system(scaled);
  Vec rhs = Vec::Zero(sys.matrix.rows());
  rhs[static_cast<Eigen::Index>(k)] = 1.0;
  const auto sol = solve_system(sys, rhs);
  if (!sol) return std::nullopt;
  if (sys.full) return from_full_coefficients(*sol, center, scale);
  return from_kkt(*sol, scaled, center, scale);
}

Vec truncated_cg_step(const Vec& g, const Mat& B, double radius, const Vec& step_lower,
                      const Vec& step_upper) {
  const auto n = g.size();
  Vec s = Vec::Zero(n);
  if (!(radius > 0.0)) return s;

  std::vector<bool> fixed(n, false);
  for (Eigen::Index i = 0; i < n; ++i) {
    if ((step_lower[i] >= 0.0 && g[i] > 0.0) || (step_upper[i] <= 0.0 && g[i] < 0.0) ||
        step_lower[i] >= step_upper[i]) {
      fixed[i] = true;
    }
  }
  auto mask = [&](Vec v) {
    for (Eigen::Index i = 0; i < n; ++i) {
      if (fixed[i]) v[i] = 0.0;
    }
    return v;
  };
  const double tol = 1e-14 * (1.0 + g.norm());

  for (Eigen::Index restart = 0; restart <= n; ++restart) {
    Vec r = mask(-(g + B * s));
    if (r.norm() <= tol) break;
    Vec d = r;
    bool restart_needed = false;
    for (Eigen::Index it = 0; it < n; ++it) {
      const Vec Bd = mask(B * d);
      const double curv = d.dot(Bd);
      const double dd = d.squaredNorm();
      const double sd = s.dot(d);
      const double slack = std::max(0.0, radius * radius - s.squaredNorm());
      const double alpha_ball = (-sd + std::sqrt(sd * sd + dd * slack)) / dd;
      double alpha_box = kInf;
      Eigen::Index hit = -1;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (fixed[i] || d[i] == 0.0) continue;
        const double a = d[i] > 0.0 ? (step_upper[i] - s[i]) / d[i] : (step_lower[i] - s[i]) / d[i];
        if (a < alpha_box) {
          alpha_box = std::max(a, 0.0);
          hit = i;
        }
      }
      const double alpha_cg = curv > 0.0 ? r.squaredNorm() / curv : kInf;
      const double alpha = std::min({alpha_cg, alpha_ball, alpha_box});

      s += alpha * d;
      if (alpha == alpha_box && alpha <= alpha_ball) {
        s[hit] = d[hit] > 0.0 ? step_upper[hit] : step_lower[hit];
        fixed[hit] = true;
        restart_needed = true;
        break;
      }
      if (alpha == alpha_ball) {
        restart = n + 1;
        break;
      }
      const Vec r_next = r - alpha * Bd;
      if (r_next.norm() <= tol) {
        restart = n + 1;
        break;
      }
      const double beta = r_next.squaredNorm() / r.squaredNorm();
      d = r_next + beta * d;
      r = r_next;
    }
    if (!restart_needed) break;
  }

  s = s.cwiseMax(step_lower).cwiseMin(step_upper);
  const double norm = s.norm();
  if (norm > radius) s *= radius / norm;
  return s;
}

Vec solve_tr_subproblem(const QuadModel& model, const Vec& center, double radius, const Box& box) {
  if (center.size() != box.dimension()) {
    throw ContractViolation("solve_tr_subproblem: dimension mismatch");
  }
  if (!(radius > 0.0)) throw ContractViolation("solve_tr_subproblem: radius must be positive");
  const Vec g = model.gradient(center);
  return truncated_cg_step(g, model.B, radius, box.lower() - center, box.upper() - center);
}

TrResult tr_run(Evaluator& ev, const Box& box, const Vec& x0, const TrOptions& options) {
  options.validate(box);
  if (x0.size() != box.dimension() || !box.contains(x0)) {
    throw ContractViolation("trust region: x0 must lie inside the box");
  }
  const int n = box.dimension();
  const double rho_end = options.resolved_rho_end(box);
  const double delta_max = box.width().minCoeff();
  const int m = options.resolved_m_points(n);
  double delta = options.resolved_rho_begin(box);

  TrResult result;
  auto finish = [&](Termination t) {
    result.outcome = ev.outcome(t);
    return result;
  };

  std::vector<Vec> points;
  std::vector<double> values;

  // (Re)builds the interpolation set around `base` whose value is known.
  auto seed_set = [&](const Vec& base, std::optional<double> base_value) -> bool {
    InitialPoints init = init_interpolation(base, box, delta, m);
    for (auto& w : init.warnings) result.warnings.push_back(std::move(w));
    std::vector<Vec> todo(init.points.begin() + (base_value ? 1 : 0), init.points.end());
    if (base_value && !same_point(init.x0, base)) {
      todo.insert(todo.begin(), init.x0);
      base_value.reset();
    }
    const auto batch = ev.evaluate(todo);
    points = init.points;
    values.assign(points.size(), 0.0);
    std::size_t offset = 0;
    if (base_value) {
      values[0] = *base_value;
      offset = 1;
    }
    for (std::size_t k = 0; k < batch.records.size(); ++k) values[offset + k] = batch.records[k].f;
    return batch.records.size() == todo.size();
  };

  if (!seed_set(x0, std::nullopt)) return finish(ev.halt_reason());

  // NaN values enter the model as a value worse than every finite one.
  auto model_values = [&] {
    double worst = -kInf;
    for (double v : values) {
      if (std::isfinite(v)) worst = std::max(worst, v);
    }
    const double fill = std::isfinite(worst) ? worst + std::abs(worst) + 1.0 : 0.0;
    std::vector<double> out(values);
    for (double& v : out) {
      if (!std::isfinite(v)) v = fill;
    }
    return out;
  };
  auto comparable = [](double f) { return std::isfinite(f) ? f : kInf; };
  auto opt_index = [&] {
    std::size_t best = 0;
    for (std::size_t k = 1; k < values.size(); ++k) {
      if (comparable(values[k]) < comparable(values[best])) best = k;
    }
    return best;
  };

  QuadModel prior = QuadModel::zero(points[0]);
  double last_diff = kInf;

  auto fit = [&](const Vec& center) {
    auto mv = model_values();
    auto model = fit_interpolation_model(points, mv, center, prior, delta);
    if (model) {
      double scale_f = 1.0;
      for (double v : mv) scale_f = std::max(scale_f, std::abs(v));
      for (std::size_t k = 0; k < points.size(); ++k) {
        result.max_interp_residual = std::max(
            result.max_interp_residual, std::abs(model->value(points[k]) - mv[k]) / scale_f);
      }
    }
    return model;
  };

  // Replaces the point farthest from the incumbent with a point that keeps
  // the interpolation system well poised (maximizes |Lagrange function|).
  auto geometry_step = [&](std::size_t kopt) -> std::optional<bool> {
    const Vec& xopt = points[kopt];
    std::size_t far = kopt == 0 ? 1 : 0;
    for (std::size_t k = 0; k < points.size(); ++k) {
      if (k != kopt && (points[k] - xopt).norm() > (points[far] - xopt).norm()) far = k;
    }
    const auto lag = lagrange_function(points, far, xopt, delta);
    std::vector<Vec> dirs;
    for (int i = 0; i < n; ++i) {
      dirs.push_back(Vec::Unit(n, i));
      dirs.push_back(-Vec::Unit(n, i));
    }
    if (lag) {
      const Vec gl = lag->gradient(xopt);
      if (gl.norm() > 0.0) {
        dirs.push_back(gl.normalized());
        dirs.push_back(-gl.normalized());
      }
    }
    for (std::size_t k = 0; k < points.size(); ++k) {
      const Vec d = points[k] - xopt;
      if (k != kopt && d.norm() > 0.0) dirs.push_back(d.normalized());
    }
    Vec best_x = xopt;
    double best_score = -1.0;
    for (const Vec& d : dirs) {
      const Vec cand = clamp(xopt + delta * d, box);
      bool dup = false;
      for (const Vec& p : points) dup = dup || same_point(p, cand);
      if (dup) continue;
      const double score = lag ? std::abs(lag->value(cand)) : (cand - xopt).norm();
      if (score > best_score) {
        best_score = score;
        best_x = cand;
      }
    }
    // Every candidate repeats an interpolation point: try a deterministic
    // off-axis direction that changes with the evaluation count.
    for (int attempt = 0; best_score < 0.0 && attempt < 8; ++attempt) {
      Vec d(n);
      const double k = static_cast<double>(ev.history().size() + attempt);
      for (int i = 0; i < n; ++i) d[i] = std::sin(k * 2.399963229728653 * (i + 1) + 0.5 * i);
      if (d.norm() == 0.0) continue;
      const Vec cand = clamp(xopt + delta * d.normalized(), box);
      bool dup = false;
      for (const Vec& p : points) dup = dup || same_point(p, cand);
      if (dup) continue;
      best_score = 0.0;
      best_x = cand;
    }
    if (best_score < 0.0) return false;
    const auto rec = ev.evaluate_one(best_x);
    if (!rec) return std::nullopt;
    result.trace.push_back({delta, (best_x - xopt).norm(), true, false});
    last_diff = std::abs(comparable(rec->f) - comparable(values[kopt]));
    points[far] = best_x;
    values[far] = rec->f;
    return true;
  };

  // Returns false when the run has converged at the radius floor. At the
  // floor with a large last change the radius is held instead.
  bool floor_hold = false;
  auto shrink = [&]() -> bool {
    floor_hold = false;
    const double next = options.gamma_shrink * delta;
    if (next >= rho_end) {
      delta = next;
      return true;
    }
    if (last_diff < options.improvement_tol) return false;
    delta = rho_end;
    floor_hold = true;
    return true;
  };

  while (true) {
    if (ev.halted()) return finish(ev.halt_reason());
    std::size_t kopt = opt_index();
    Vec xopt = points[kopt];

    auto model = fit(xopt);
    if (!model) {
      const double fopt = values[kopt];
      if (!seed_set(xopt, fopt)) return finish(ev.halt_reason());
      kopt = opt_index();
      xopt = points[kopt];
      model = fit(xopt);
      if (!model) return finish(Termination::ModelDegenerate);
    }
    prior = *model;

    const Vec s = solve_tr_subproblem(*model, xopt, delta, box);
    const Vec x_new = xopt + s;
    bool duplicate = false;
    for (const Vec& p : points) duplicate = duplicate || same_point(p, x_new);

    if (s.norm() < options.alt_step_fraction * delta || duplicate) {
      double far_dist = 0.0;
      for (const Vec& p : points) far_dist = std::max(far_dist, (p - xopt).norm());
      if (far_dist > 2.0 * delta) {
        const auto moved = geometry_step(kopt);
        if (!moved) return finish(ev.halt_reason());
        if (*moved) continue;
      }
      if (!shrink()) return finish(Termination::ScaleExhausted);
      if (floor_hold) {
        const auto moved = geometry_step(kopt);
        if (!moved) return finish(ev.halt_reason());
        if (!*moved) return finish(Termination::ScaleExhausted);
      }
      continue;
    }

    const auto rec = ev.evaluate_one(x_new);
    if (!rec) return finish(ev.halt_reason());
    const double f_opt = values[kopt];
    const double predicted = model->value(xopt) - model->value(x_new);
    const double actual = comparable(f_opt) - comparable(rec->f);
    double ratio;
    if (std::isnan(actual)) {
      ratio = -kInf;
    } else if (predicted > 0.0) {
      ratio = actual / predicted;
    } else {
      ratio = actual > 0.0 ? kInf : -kInf;
    }
    last_diff = std::abs(comparable(rec->f) - comparable(f_opt));
    const bool accepted = ratio >= options.eta_accept;
    result.trace.push_back({delta, s.norm(), false, accepted});

    if (std::isfinite(rec->f)) {
      // Replace the point whose removal best preserves poisedness, weighting
      // far-away points more heavily.
      std::size_t k_out = kopt == 0 ? 1 : 0;
      double best_score = -1.0;
      for (std::size_t k = 0; k < points.size(); ++k) {
        if (k == kopt) continue;
        const auto lag = lagrange_function(points, k, xopt, delta);
        const double dist = (points[k] - xopt).norm() / delta;
        const double score =
            (lag ? std::abs(lag->value(x_new)) : 1.0) * std::max(1.0, dist * dist * dist * dist);
        if (score > best_score) {
          best_score = score;
          k_out = k;
        }
      }
      points[k_out] = x_new;
      values[k_out] = rec->f;
    }

    if (ratio >= options.eta_strong) {
      delta = std::min(options.gamma_grow * delta, delta_max);
    } else if (ratio < options.eta_accept) {
      if (!shrink()) return finish(Termination::ScaleExhausted);
    }
  }
}

OptimizeOutcome tr_minimize(const Objective& obj, const Box& box, const Vec& x0, Budget budget,
                            const TrOptions& options) {
  Evaluator ev(obj, budget.remaining());
  return tr_run(ev, box, x0, options).outcome;
}

}  // namespace noisyopt
