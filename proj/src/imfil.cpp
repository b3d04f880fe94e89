#include "noisyopt/imfil.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace noisyopt {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// NaN compares as worse than any finite value.
double comparable(double f) { return std::isfinite(f) ? f : kInf; }

bool same_point(const Vec& a, const Vec& b) { return (a.array() == b.array()).all(); }

}  // namespace

std::vector<double> ImfilOptions::default_scales() {
  std::vector<double> s;
  for (int k = 1; k <= 9; ++k) s.push_back(std::ldexp(1.0, -k));
  return s;
}

void ImfilOptions::validate() const {
  if (scales.empty()) throw ContractViolation("ImfilOptions: scales must be nonempty");
  for (std::size_t i = 0; i < scales.size(); ++i) {
    if (!(scales[i] > 0.0 && scales[i] <= 1.0)) {
      throw ContractViolation("ImfilOptions: scales must lie in (0, 1]");
    }
    if (i > 0 && !(scales[i] < scales[i - 1])) {
      throw ContractViolation("ImfilOptions: scales must be strictly decreasing");
    }
  }
  if (max_inner_iters < 1) throw ContractViolation("ImfilOptions: max_inner_iters must be >= 1");
  if (!(armijo_c > 0.0 && armijo_c < 1.0)) {
    throw ContractViolation("ImfilOptions: armijo_c must lie in (0, 1)");
  }
  if (max_backtracks < 1) throw ContractViolation("ImfilOptions: max_backtracks must be >= 1");
  if (improvement_tol < 0.0) throw ContractViolation("ImfilOptions: improvement_tol must be >= 0");
  for (const Vec& d : custom_directions) {
    if (!(d.norm() > 0.0)) throw ContractViolation("ImfilOptions: zero custom direction");
  }
}

Stencil build_stencil(const Vec& center, double scale, const Box& box,
                      const std::vector<Vec>& custom_directions) {
  if (center.size() != box.dimension()) {
    throw ContractViolation("build_stencil: center dimension mismatch");
  }
  if (!(scale > 0.0)) throw ContractViolation("build_stencil: scale must be positive");

  Stencil st;
  st.center = center;
  st.scale = scale;
  const Vec step = scale * box.width();

  auto add = [&](Vec p, int axis, int sign) {
    p = clamp(p, box);
    if (same_point(p, center)) return;
    for (const Vec& q : st.points) {
      if (same_point(p, q)) return;
    }
    st.points.push_back(std::move(p));
    st.axis.push_back(axis);
    st.sign.push_back(sign);
  };

  for (int i = 0; i < box.dimension(); ++i) {
    Vec plus = center;
    plus[i] += step[i];
    add(plus, i, +1);
    Vec minus = center;
    minus[i] -= step[i];
    add(minus, i, -1);
  }
  for (const Vec& raw : custom_directions) {
    if (raw.size() != center.size()) {
      throw ContractViolation("build_stencil: custom direction dimension mismatch");
    }
    const Vec d = (raw / raw.norm()).cwiseProduct(step);
    add(center + d, -1, +1);
    add(center - d, -1, -1);
  }
  return st;
}

std::optional<Vec> stencil_gradient(const Stencil& stencil, double center_value,
                                    const std::vector<double>& values) {
  if (values.size() != stencil.points.size()) {
    throw ContractViolation("stencil_gradient: one value per stencil point required");
  }
  bool any_finite = false;
  for (double v : values) any_finite = any_finite || std::isfinite(v);
  if (!any_finite) return std::nullopt;

  const auto n = stencil.center.size();
  Vec grad = Vec::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    std::optional<std::size_t> plus, minus;
    for (std::size_t k = 0; k < stencil.points.size(); ++k) {
      if (stencil.axis[k] != i || !std::isfinite(values[k])) continue;
      (stencil.sign[k] > 0 ? plus : minus) = k;
    }
    const double c = stencil.center[i];
    if (plus && minus) {
      grad[i] = (values[*plus] - values[*minus]) /
                (stencil.points[*plus][i] - stencil.points[*minus][i]);
    } else if (plus && std::isfinite(center_value)) {
      grad[i] = (values[*plus] - center_value) / (stencil.points[*plus][i] - c);
    } else if (minus && std::isfinite(center_value)) {
      grad[i] = (values[*minus] - center_value) / (stencil.points[*minus][i] - c);
    }
  }
  return grad;
}

ImfilResult imfil_run(Evaluator& ev, const Box& box, const Vec& x0, const ImfilOptions& options) {
  options.validate();
  if (x0.size() != box.dimension() || !box.contains(x0)) {
    throw ContractViolation("imfil: x0 must lie inside the box");
  }

  ImfilResult result;
  StallReport& stall = result.stall;
  stall.last_good_center = x0;
  stall.last_good_scale = options.scales.front();
  stall.failed_scale = options.scales.front();
  std::optional<double> failed_after_good;

  auto finish = [&](Termination t) {
    stall.failed_scale = failed_after_good.value_or(stall.failed_scale);
    result.outcome = ev.outcome(t);
    return result;
  };

  const auto first = ev.evaluate_one(x0);
  if (!first) return finish(ev.halt_reason());
  Vec center = x0;
  double fc = first->f;

  const Vec width = box.width();
  const Vec metric = width.cwiseProduct(width);

  for (double scale : options.scales) {
    const double f_scale_start = comparable(fc);
    bool scale_improved = false;

    auto improve = [&](const Vec& x, double f) {
      center = x;
      fc = f;
      scale_improved = true;
      stall.last_good_center = center;
      stall.last_good_scale = scale;
      failed_after_good.reset();
    };

    for (int it = 0; it < options.max_inner_iters; ++it) {
      const Stencil st = build_stencil(center, scale, box, options.custom_directions);
      result.scale_trace.push_back(scale);
      if (st.points.empty()) break;

      const auto batch = ev.evaluate(st.points);
      if (batch.records.size() < st.points.size()) return finish(ev.halt_reason());

      std::vector<double> values;
      values.reserve(batch.records.size());
      std::size_t best = 0;
      for (std::size_t k = 0; k < batch.records.size(); ++k) {
        values.push_back(batch.records[k].f);
        if (comparable(values[k]) < comparable(values[best])) best = k;
      }
      const auto grad = stencil_gradient(st, fc, values);
      if (!grad) return finish(Termination::StencilFailure);

      // Projected gradient step in unit-box coordinates with Armijo
      // backtracking. The first trial stays within the stencil radius; each
      // backtrack uses the safeguarded minimizer of the quadratic through
      // f(center), the directional slope and the rejected trial.
      std::optional<std::pair<Vec, double>> line;
      Vec direction = -metric.cwiseProduct(*grad);
      const double unit_len = direction.cwiseQuotient(width).lpNorm<Eigen::Infinity>();
      if (unit_len > scale) direction *= scale / unit_len;
      Vec previous_trial = center;
      double lambda = 1.0;
      for (int b = 0; unit_len > 0.0 && b <= options.max_backtracks && !line; ++b) {
        const Vec trial = clamp(center + lambda * direction, box);
        if (same_point(trial, center) || same_point(trial, previous_trial)) {
          lambda *= 0.5;
          continue;
        }
        previous_trial = trial;
        const auto rec = ev.evaluate_one(trial);
        if (!rec) break;
        const double slope = grad->dot(trial - center);
        if (std::isfinite(rec->f) && rec->f < comparable(fc) &&
            rec->f <= comparable(fc) + options.armijo_c * slope) {
          line.emplace(trial, rec->f);
          break;
        }
        double shrink = 0.5;
        const double curvature = rec->f - fc - slope;
        if (std::isfinite(curvature) && curvature > 0.0 && slope < 0.0) {
          shrink = std::clamp(-slope / (2.0 * curvature), 0.1, 0.5);
        }
        lambda *= shrink;
      }

      // The lowest of the stencil and the line step drives the next stencil.
      const bool stencil_wins = comparable(values[best]) < comparable(fc);
      if (line && (!stencil_wins || line->second <= values[best])) {
        improve(line->first, line->second);
      } else if (stencil_wins) {
        improve(st.points[best], values[best]);
      } else {
        if (ev.halted()) return finish(ev.halt_reason());
        break;
      }
      if (ev.halted()) return finish(ev.halt_reason());
    }

    if (!scale_improved && !failed_after_good) failed_after_good = scale;
    stall.failed_scale = scale;
    if (options.improvement_tol > 0.0 && std::isfinite(f_scale_start) &&
        f_scale_start - comparable(fc) < options.improvement_tol) {
      return finish(Termination::ImprovementBelowThreshold);
    }
  }
  return finish(Termination::ScaleExhausted);
}

std::pair<OptimizeOutcome, StallReport> imfil_minimize(const Objective& obj, const Box& box,
                                                       const Vec& x0, Budget budget,
                                                       const ImfilOptions& options) {
  Evaluator ev(obj, budget.remaining());
  auto r = imfil_run(ev, box, x0, options);
  return {std::move(r.outcome), std::move(r.stall)};
}

}  // namespace noisyopt
