#include "noisyopt/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>

namespace noisyopt {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double rank_value(double f) { return std::isnan(f) ? kInf : f; }

struct Iterate {
  Vec x;
  double f = 0.0;
  Vec g;
};

Vec projected_gradient(const Vec& g, const Vec& x, const Box& box) {
  Vec pg = g;
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    if (x[i] <= box.lower()[i] && g[i] > 0.0) pg[i] = 0.0;
    if (x[i] >= box.upper()[i] && g[i] < 0.0) pg[i] = 0.0;
  }
  return pg;
}

enum class SearchStatus { Accepted, Failed, Halted };

struct SearchOutcome {
  SearchStatus status = SearchStatus::Failed;
  Iterate point;
};

// Strong-Wolfe bracketing and zoom on phi(a) = f(clamp(x + a p)).
class WolfeSearch {
 public:
  WolfeSearch(Evaluator& ev, const Box& box, const BfgsOptions& opts, const Iterate& start,
              const Vec& p)
      : ev_(ev), box_(box), opts_(opts), start_(start), p_(p) {
    dphi0_ = start.g.dot(p);
  }

  SearchOutcome run() {
    const double pinf = p_.cwiseQuotient(box_.width()).lpNorm<Eigen::Infinity>();
    double a = pinf > 1.0 ? 1.0 / pinf : 1.0;
    const double amax = 1024.0 * a;
    double a_prev = 0.0;
    double phi_prev = start_.f;
    double dphi_prev = dphi0_;
    Iterate prev = start_;
    for (int i = 0; i < opts_.max_line_steps; ++i) {
      auto cur = value_at(a);
      if (!cur) return {SearchStatus::Halted, {}};
      const double phi = rank_value(cur->f);
      if (phi > start_.f + opts_.wolfe_c1 * a * dphi0_ || (i > 0 && phi >= phi_prev)) {
        return zoom(a_prev, phi_prev, dphi_prev, prev, a, phi, i);
      }
      if (i == 0) {
        // One interpolation step toward the minimizer of the quadratic
        // through phi(0), phi'(0) and phi(a); exact on quadratics.
        const double curv = phi - start_.f - dphi0_ * a;
        const double aq = curv > 0.0 ? -dphi0_ * a * a / (2.0 * curv) : 0.0;
        if (aq > 0.0 && aq <= amax && std::abs(aq - a) > 1e-3 * a) {
          auto alt = value_at(aq);
          if (!alt) return {SearchStatus::Halted, {}};
          const double phi_q = rank_value(alt->f);
          if (phi_q < phi && phi_q <= start_.f + opts_.wolfe_c1 * aq * dphi0_) {
            a = aq;
            cur = alt;
          }
        }
      }
      if (!with_gradient(*cur)) return {SearchStatus::Halted, {}};
      const double dphi = slope(*cur, a);
      if (!std::isfinite(dphi)) return {SearchStatus::Failed, {}};
      if (std::abs(dphi) <= -opts_.wolfe_c2 * dphi0_) return {SearchStatus::Accepted, *cur};
      if (dphi >= 0.0) return zoom(a, phi, dphi, *cur, a_prev, phi_prev, i);
      a_prev = a;
      phi_prev = phi;
      dphi_prev = dphi;
      prev = *cur;
      if (a >= amax || (cur->x - clamp(start_.x + 2.0 * a * p_, box_)).norm() == 0.0) {
        return {SearchStatus::Failed, {}};
      }
      a = std::min(2.0 * a, amax);
    }
    return {SearchStatus::Failed, {}};
  }

 private:
  std::optional<Iterate> value_at(double a) {
    Iterate it;
    it.x = clamp(start_.x + a * p_, box_);
    const auto r = ev_.evaluate_one(it.x);
    if (!r) return std::nullopt;
    it.f = r->f;
    return it;
  }

  bool with_gradient(Iterate& it) {
    bool truncated = false;
    it.g = fd_gradient(ev_, it.x, it.f, box_, opts_.fd_step, &truncated);
    return !truncated;
  }

  // Directional derivative along the projected path.
  double slope(const Iterate& it, double a) const {
    return it.g.dot((it.x - start_.x) / a);
  }

  SearchOutcome zoom(double lo, double phi_lo, double dphi_lo, Iterate lo_pt, double hi,
                     double phi_hi, int used) {
    for (int i = used; i < opts_.max_line_steps; ++i) {
      const double width = hi - lo;
      double a = 0.5 * (lo + hi);
      const double denom = 2.0 * (phi_hi - phi_lo - dphi_lo * width);
      if (std::isfinite(phi_hi) && denom > 0.0) {
        a = lo - dphi_lo * width * width / denom;
      }
      const double a_min = std::min(lo, hi) + 0.1 * std::abs(width);
      const double a_max = std::max(lo, hi) - 0.1 * std::abs(width);
      a = std::clamp(a, a_min, a_max);
      if (std::abs(width) < 1e-16) break;

      auto cur = value_at(a);
      if (!cur) return {SearchStatus::Halted, {}};
      const double phi = rank_value(cur->f);
      if (phi > start_.f + opts_.wolfe_c1 * a * dphi0_ || phi >= phi_lo) {
        hi = a;
        phi_hi = phi;
        continue;
      }
      if (!with_gradient(*cur)) return {SearchStatus::Halted, {}};
      const double dphi = slope(*cur, a);
      if (!std::isfinite(dphi)) return {SearchStatus::Failed, {}};
      if (std::abs(dphi) <= -opts_.wolfe_c2 * dphi0_) return {SearchStatus::Accepted, *cur};
      if (dphi * (hi - lo) >= 0.0) {
        hi = lo;
        phi_hi = phi_lo;
      }
      lo = a;
      phi_lo = phi;
      dphi_lo = dphi;
      lo_pt = *cur;
    }
    (void)lo_pt;
    return {SearchStatus::Failed, {}};
  }

  Evaluator& ev_;
  const Box& box_;
  const BfgsOptions& opts_;
  const Iterate& start_;
  Vec p_;
  double dphi0_ = 0.0;
};

}  // namespace

void BfgsOptions::validate() const {
  if (!(fd_step > 0.0)) throw ContractViolation("BfgsOptions: fd_step must be positive");
  if (!(0.0 < wolfe_c1 && wolfe_c1 < wolfe_c2 && wolfe_c2 < 1.0)) {
    throw ContractViolation("BfgsOptions: need 0 < c1 < c2 < 1");
  }
  if (!(grad_tol >= 0.0)) throw ContractViolation("BfgsOptions: grad_tol must be >= 0");
  if (max_line_steps < 1) throw ContractViolation("BfgsOptions: max_line_steps must be >= 1");
}

Vec fd_gradient(Evaluator& ev, const Vec& x, double fx, const Box& box, double fd_step,
                bool* truncated) {
  const Eigen::Index n = x.size();
  Vec h = fd_step * box.width();
  std::vector<Vec> probes;
  probes.reserve(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (x[i] + h[i] > box.upper()[i]) h[i] = -h[i];
    Vec p = x;
    p[i] += h[i];
    probes.push_back(std::move(p));
  }
  const auto batch = ev.evaluate(probes);
  if (truncated) *truncated = batch.records.size() < probes.size();
  Vec g = Vec::Constant(n, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t i = 0; i < batch.records.size(); ++i) {
    g[i] = (batch.records[i].f - fx) / h[i];
  }
  return g;
}

BfgsResult bfgs_run(Evaluator& ev, const Box& box, const Vec& x0, const BfgsOptions& options) {
  options.validate();
  const int n = box.dimension();
  if (x0.size() != n || !box.contains(x0)) {
    throw ContractViolation("bfgs: x0 must lie inside the box");
  }
  BfgsResult result;
  auto finish = [&](Termination t) {
    result.outcome = ev.outcome(t);
    return result;
  };

  Iterate cur;
  cur.x = x0;
  const auto first = ev.evaluate_one(x0);
  if (!first) return finish(ev.halt_reason());
  cur.f = first->f;
  if (std::isnan(cur.f)) return finish(Termination::ImprovementBelowThreshold);
  bool truncated = false;
  cur.g = fd_gradient(ev, cur.x, cur.f, box, options.fd_step, &truncated);
  if (truncated) return finish(ev.halt_reason());

  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n);
  bool scaled = false;
  while (true) {
    if (!cur.g.allFinite()) return finish(Termination::ImprovementBelowThreshold);
    if (projected_gradient(cur.g, cur.x, box).lpNorm<Eigen::Infinity>() <= options.grad_tol) {
      return finish(Termination::ImprovementBelowThreshold);
    }
    Vec p = -H * cur.g;
    if (!(cur.g.dot(p) < 0.0)) {
      H.setIdentity();
      p = -cur.g;
    }
    for (int i = 0; i < n; ++i) {
      if ((cur.x[i] <= box.lower()[i] && p[i] < 0.0) ||
          (cur.x[i] >= box.upper()[i] && p[i] > 0.0)) {
        p[i] = 0.0;
      }
    }
    if (!(cur.g.dot(p) < 0.0)) return finish(Termination::ImprovementBelowThreshold);

    const auto found = WolfeSearch(ev, box, options, cur, p).run();
    if (found.status == SearchStatus::Halted) return finish(ev.halt_reason());
    if (found.status == SearchStatus::Failed) return finish(Termination::ImprovementBelowThreshold);

    const Vec s = found.point.x - cur.x;
    const Vec y = found.point.g - cur.g;
    const double sy = s.dot(y);
    if (sy > 1e-16 * s.norm() * y.norm() && sy > 0.0) {
      if (!scaled) {
        H = Eigen::MatrixXd::Identity(n, n) * (sy / y.squaredNorm());
        scaled = true;
      }
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd V = Eigen::MatrixXd::Identity(n, n) - rho * y * s.transpose();
      H = V.transpose() * H * V + rho * s * s.transpose();
    }
    cur = found.point;
    result.line_search_values.push_back(cur.f);
  }
}

OptimizeOutcome bfgs_minimize(const Objective& obj, const Box& box, const Vec& x0, Budget budget,
                              const BfgsOptions& options) {
  Evaluator ev(obj, budget.remaining());
  return bfgs_run(ev, box, x0, options).outcome;
}

void SimplexOptions::validate() const {
  if (!(reflection > 0.0)) throw ContractViolation("SimplexOptions: reflection must be > 0");
  if (!(expansion > 1.0 && expansion > reflection)) {
    throw ContractViolation("SimplexOptions: expansion must exceed 1 and reflection");
  }
  if (!(contraction > 0.0 && contraction < 1.0)) {
    throw ContractViolation("SimplexOptions: contraction must lie in (0, 1)");
  }
  if (!(shrink > 0.0 && shrink < 1.0)) {
    throw ContractViolation("SimplexOptions: shrink must lie in (0, 1)");
  }
  if (!(init_spread >= 0.0)) throw ContractViolation("SimplexOptions: init_spread must be >= 0");
  if (!(f_tol >= 0.0 && x_tol >= 0.0)) {
    throw ContractViolation("SimplexOptions: tolerances must be >= 0");
  }
}

SimplexResult nelder_mead_run(Evaluator& ev, const Box& box, const Vec& x0,
                              const SimplexOptions& options) {
  options.validate();
  const int n = box.dimension();
  if (x0.size() != n || !box.contains(x0)) {
    throw ContractViolation("nelder_mead: x0 must lie inside the box");
  }
  SimplexResult result;
  auto finish = [&](Termination t) {
    result.outcome = ev.outcome(t);
    return result;
  };

  std::vector<Vec> vertex{x0};
  for (int i = 0; i < n; ++i) {
    Vec v = x0;
    const double step = options.init_spread * box.width()[i];
    v[i] = x0[i] + step <= box.upper()[i] ? x0[i] + step : x0[i] - step;
    vertex.push_back(clamp(v, box));
  }
  std::vector<double> value;
  {
    const auto batch = ev.evaluate(vertex);
    if (batch.records.size() < vertex.size()) return finish(ev.halt_reason());
    for (const auto& r : batch.records) value.push_back(rank_value(r.f));
  }

  std::vector<std::size_t> order(n + 1);
  auto eval = [&](const Vec& x) -> std::optional<double> {
    const auto r = ev.evaluate_one(x);
    if (!r) return std::nullopt;
    return rank_value(r->f);
  };

  while (true) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return value[a] < value[b]; });
    const std::size_t best = order.front();
    const std::size_t worst = order.back();
    const std::size_t second = order[n - 1];

    Vec c = Vec::Zero(n);
    for (int i = 0; i < n; ++i) c += vertex[order[i]];
    c /= n;
    auto replace = [&](const Vec& x, double f, SimplexMove m) {
      vertex[worst] = x;
      value[worst] = f;
      result.moves.push_back(m);
    };

    const Vec xr = clamp(c + options.reflection * (c - vertex[worst]), box);
    const auto fr = eval(xr);
    if (!fr) return finish(ev.halt_reason());
    bool shrink = false;
    if (*fr < value[best]) {
      const Vec xe = clamp(c + options.expansion * (xr - c), box);
      const auto fe = eval(xe);
      if (!fe) return finish(ev.halt_reason());
      if (*fe < *fr) {
        replace(xe, *fe, SimplexMove::Expand);
      } else {
        replace(xr, *fr, SimplexMove::Reflect);
      }
    } else if (*fr < value[second]) {
      replace(xr, *fr, SimplexMove::Reflect);
    } else if (*fr < value[worst]) {
      const Vec xc = clamp(c + options.contraction * (xr - c), box);
      const auto fc = eval(xc);
      if (!fc) return finish(ev.halt_reason());
      if (*fc <= *fr) {
        replace(xc, *fc, SimplexMove::OutsideContract);
      } else {
        shrink = true;
      }
    } else {
      const Vec xc = clamp(c + options.contraction * (vertex[worst] - c), box);
      const auto fc = eval(xc);
      if (!fc) return finish(ev.halt_reason());
      if (*fc < value[worst]) {
        replace(xc, *fc, SimplexMove::InsideContract);
      } else {
        shrink = true;
      }
    }

    if (shrink) {
      result.moves.push_back(SimplexMove::Shrink);
      std::vector<Vec> moved;
      std::vector<std::size_t> which;
      for (int i = 0; i <= n; ++i) {
        if (static_cast<std::size_t>(i) == best) continue;
        vertex[i] = vertex[best] + options.shrink * (vertex[i] - vertex[best]);
        moved.push_back(vertex[i]);
        which.push_back(i);
      }
      const auto batch = ev.evaluate(moved);
      for (std::size_t k = 0; k < batch.records.size(); ++k) {
        value[which[k]] = rank_value(batch.records[k].f);
      }
      if (batch.records.size() < moved.size()) return finish(ev.halt_reason());
    }
    if (ev.halted()) return finish(ev.halt_reason());

    const auto [lo, hi] = std::minmax_element(value.begin(), value.end());
    double diameter = 0.0;
    for (int i = 1; i <= n; ++i) {
      diameter = std::max(
          diameter, (vertex[i] - vertex[0]).cwiseQuotient(box.width()).lpNorm<Eigen::Infinity>());
    }
    const bool flat = std::isfinite(*hi) && *hi - *lo < options.f_tol;
    if (flat || diameter < options.x_tol) return finish(Termination::ImprovementBelowThreshold);
  }
}

OptimizeOutcome nelder_mead_minimize(const Objective& obj, const Box& box, const Vec& x0,
                                     Budget budget, const SimplexOptions& options) {
  Evaluator ev(obj, budget.remaining());
  return nelder_mead_run(ev, box, x0, options).outcome;
}

}  // namespace noisyopt
