#include "noisyopt/snobfit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace noisyopt {
namespace {


bool same_point(const Vec& a, const Vec& b) { return (a.array() == b.array()).all(); }

double scaled_distance(const Vec& a, const Vec& b, const Vec& width) {
  return (a - b).cwiseQuotient(width).norm();
}

// k nearest finite records to `center` (excluding `self`), nearest first.
std::vector<std::size_t> nearest_finite(const SnobState& s, std::size_t self, std::size_t k) {
  const Vec width = s.domain.width();
  const Vec& c = s.records[self].x;
  std::vector<std::pair<double, std::size_t>> d;
  for (std::size_t i = 0; i < s.records.size(); ++i) {
    if (i == self || !s.records[i].finite()) continue;
    d.emplace_back(scaled_distance(s.records[i].x, c, width), i);
  }
  k = std::min(k, d.size());
  std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back(d[i].second);
  return out;
}

Vec uniform_in(const Vec& lo, const Vec& hi, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vec x(lo.size());
  for (Eigen::Index i = 0; i < lo.size(); ++i) x[i] = lo[i] + u(rng) * (hi[i] - lo[i]);
  return x;
}

void split_recursive(SnobState& s, std::size_t cell) {
  SubBox& b = s.boxes[cell];
  if (b.members.size() < 2) return;
  const Vec dom_w = s.domain.width();
  const auto n = b.lower.size();

  Eigen::Index dim = -1;
  double longest = -1.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double first = s.records[b.members.front()].x[i];
    const bool differs = std::any_of(b.members.begin(), b.members.end(), [&](std::size_t m) {
      return s.records[m].x[i] != first;
    });
    const double len = (b.upper[i] - b.lower[i]) / dom_w[i];
    if (differs && len > longest) {
      longest = len;
      dim = i;
    }
  }
  if (dim < 0) return;  // identical points share the cell

  std::vector<double> coords;
  for (std::size_t m : b.members) coords.push_back(s.records[m].x[dim]);
  std::sort(coords.begin(), coords.end());
  coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
  const std::size_t j = coords.size() / 2;
  double cut = 0.5 * (coords[j - 1] + coords[j]);
  if (!(cut > coords[j - 1])) cut = coords[j];

  SubBox left{b.lower, b.upper, {}};
  SubBox right{b.lower, b.upper, {}};
  left.upper[dim] = cut;
  right.lower[dim] = cut;
  for (std::size_t m : b.members) {
    (s.records[m].x[dim] < cut ? left : right).members.push_back(m);
  }
  s.boxes[cell] = std::move(left);
  s.boxes.push_back(std::move(right));
  const std::size_t right_index = s.boxes.size() - 1;
  split_recursive(s, cell);
  split_recursive(s, right_index);
}

void insert(SnobState& s, EvalRecord rec) {
  if (!s.domain.contains(rec.x)) throw ContractViolation("snobfit: record outside the box");
  s.records.push_back(std::move(rec));
  const std::size_t idx = s.records.size() - 1;
  const std::size_t cell = s.locate(s.records[idx].x);
  s.boxes[cell].members.push_back(idx);
  split_recursive(s, cell);
}

bool is_known(const SnobState& s, const std::vector<Vec>& pending, const Vec& x) {
  for (const auto& r : s.records) {
    if (same_point(r.x, x)) return true;
  }
  for (const auto& p : pending) {
    if (same_point(p, x)) return true;
  }
  return false;
}

// Up to `want` points whose value is not beaten by any of their n + 1 nearest
// neighbors, in order of increasing value, followed by the remaining finite
// records.
std::vector<std::size_t> model_centers(const SnobState& s, std::size_t want) {
  const auto n = static_cast<std::size_t>(s.domain.dimension());
  std::vector<std::size_t> finite;
  for (std::size_t i = 0; i < s.records.size(); ++i) {
    if (s.records[i].finite()) finite.push_back(i);
  }
  std::stable_sort(finite.begin(), finite.end(), [&](std::size_t a, std::size_t b) {
    return s.records[a].f < s.records[b].f;
  });
  std::vector<std::size_t> minima, rest;
  for (std::size_t i : finite) {
    if (minima.size() >= want) {
      rest.push_back(i);
      continue;
    }
    const auto nn = nearest_finite(s, i, n + 1);
    const bool is_min = std::none_of(nn.begin(), nn.end(), [&](std::size_t j) {
      return s.records[j].f < s.records[i].f;
    });
    (is_min ? minima : rest).push_back(i);
  }
  minima.insert(minima.end(), rest.begin(), rest.end());
  return minima;
}

std::optional<Vec> model_suggestion(const SnobState& s, std::size_t center,
                                    const SnobOptions& options) {
  const int n = s.domain.dimension();
  const std::size_t k = static_cast<std::size_t>(full_quadratic_size(n) + n);
  std::vector<EvalRecord> neighbors;
  for (std::size_t j : nearest_finite(s, center, k)) neighbors.push_back(s.records[j]);
  const auto fit = fit_local_quadratic(s.records[center], neighbors, s.domain,
                                       options.use_uncertainty, options.uncertainty_floor);
  if (!fit) return std::nullopt;
  return fit->suggested;
}

}  // namespace

int SnobOptions::resolved_batch(int n) const { return batch_size > 0 ? batch_size : std::max(6, n + 2); }

void SnobOptions::validate() const {
  if (batch_size < 0) throw ContractViolation("SnobOptions: batch_size must be >= 1");
  if (!(local_fraction >= 0.0 && local_fraction <= 1.0)) {
    throw ContractViolation("SnobOptions: local_fraction must lie in [0, 1]");
  }
  if (!(uncertainty_floor >= 0.0)) {
    throw ContractViolation("SnobOptions: uncertainty_floor must be >= 0");
  }
  if (stall_window < 1) throw ContractViolation("SnobOptions: stall_window must be >= 1");
}

double SubBox::scaled_volume(const Box& domain) const {
  return (upper - lower).cwiseQuotient(domain.width()).prod();
}

bool SubBox::contains(const Vec& x) const {
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (x[i] < lower[i] || x[i] > upper[i]) return false;
  }
  return true;
}

SnobState::SnobState(Box d, std::uint64_t s) : domain(std::move(d)), seed(s) {
  boxes.push_back({domain.lower(), domain.upper(), {}});
}

const EvalRecord& SnobState::best_record() const {
  if (!best) throw ContractViolation("SnobState: no finite record yet");
  return records[*best];
}

std::size_t SnobState::locate(const Vec& x) const {
  // Cells are half-open [lower, upper) except on the outer faces of the box.
  for (std::size_t c = 0; c < boxes.size(); ++c) {
    const SubBox& b = boxes[c];
    bool inside = true;
    for (Eigen::Index i = 0; i < x.size() && inside; ++i) {
      const bool upper_ok = x[i] < b.upper[i] || (x[i] == b.upper[i] && b.upper[i] == domain.upper()[i]);
      inside = x[i] >= b.lower[i] && upper_ok;
    }
    if (inside) return c;
  }
  throw ContractViolation("SnobState::locate: point outside the partition");
}

std::optional<LocalFit> fit_local_quadratic(const EvalRecord& best,
                                            const std::vector<EvalRecord>& neighbors,
                                            const Box& domain, bool use_uncertainty,
                                            double uncertainty_floor) {
  const int n = domain.dimension();
  if (best.x.size() != n) throw ContractViolation("fit_local_quadratic: dimension mismatch");
  if (!best.finite()) return std::nullopt;
  std::vector<const EvalRecord*> data{&best};
  for (const auto& r : neighbors) {
    if (r.finite() && r.x.size() == n) data.push_back(&r);
  }
  const auto m = static_cast<Eigen::Index>(data.size());
  if (m < n + 1) return std::nullopt;

  const Vec w = domain.width();
  LocalFit fit;
  fit.span_lower = best.x;
  fit.span_upper = best.x;
  for (const auto* r : data) {
    fit.span_lower = fit.span_lower.cwiseMin(r->x);
    fit.span_upper = fit.span_upper.cwiseMax(r->x);
  }

  Vec weights = Vec::Ones(m);
  if (use_uncertainty) {
    for (Eigen::Index r = 0; r < m; ++r) {
      const double u = std::max(data[r]->uncertainty.value_or(0.0), uncertainty_floor);
      if (u > 0.0) weights[r] = 1.0 / u;
    }
  }

  const int full = full_quadratic_size(n);
  for (ModelKind kind : {ModelKind::Full, ModelKind::Diagonal, ModelKind::Linear}) {
    const int cols = kind == ModelKind::Full ? full : kind == ModelKind::Diagonal ? 2 * n + 1 : n + 1;
    if (m < cols) continue;
    Mat A(m, cols);
    Vec b(m);
    for (Eigen::Index r = 0; r < m; ++r) {
      const Vec s = (data[r]->x - best.x).cwiseQuotient(w);
      Eigen::Index c = 0;
      A(r, c++) = 1.0;
      for (int i = 0; i < n; ++i) A(r, c++) = s[i];
      if (kind == ModelKind::Diagonal) {
        for (int i = 0; i < n; ++i) A(r, c++) = 0.5 * s[i] * s[i];
      } else if (kind == ModelKind::Full) {
        for (int i = 0; i < n; ++i) {
          for (int j = i; j < n; ++j) A(r, c++) = (i == j ? 0.5 : 1.0) * s[i] * s[j];
        }
      }
      A.row(r) *= weights[r];
      b[r] = weights[r] * data[r]->f;
    }
    Eigen::ColPivHouseholderQR<Mat> qr(A);
    qr.setThreshold(1e-10);
    if (qr.rank() < cols) continue;
    const Vec coef = qr.solve(b);
    if (!coef.allFinite()) continue;

    QuadModel model = QuadModel::zero(best.x);
    Eigen::Index c = 0;
    model.c = coef[c++];
    for (int i = 0; i < n; ++i) model.g[i] = coef[c++] / w[i];
    if (kind == ModelKind::Diagonal) {
      for (int i = 0; i < n; ++i) model.B(i, i) = coef[c++] / (w[i] * w[i]);
    } else if (kind == ModelKind::Full) {
      for (int i = 0; i < n; ++i) {
        for (int j = i; j < n; ++j) {
          model.B(i, j) = model.B(j, i) = coef[c++] / (w[i] * w[j]);
        }
      }
    }
    fit.model = model;
    fit.kind = kind;

    const Vec lo = fit.span_lower - best.x;
    const Vec hi = fit.span_upper - best.x;
    const double radius = (fit.span_upper - fit.span_lower).norm();
    Vec step = truncated_cg_step(model.g, model.B, radius, lo, hi);
    if (!(step.norm() > 0.0)) {
      // Flat or stationary model: nudge towards the middle of the span.
      step = 0.25 * (0.5 * (lo + hi));
      if (!(step.norm() > 0.0)) {
        Eigen::Index widest;
        (hi - lo).maxCoeff(&widest);
        step = Vec::Zero(n);
        step[widest] = 0.25 * hi[widest];
      }
    }
    fit.suggested = clamp(best.x + step, domain);
    return fit;
  }
  return std::nullopt;
}

SnobStep snobfit_step(SnobState state, const std::vector<EvalRecord>& new_evals,
                      const SnobOptions& options) {
  options.validate();
  const int n = state.domain.dimension();
  if (state.generation == 0 && new_evals.empty()) {
    throw ContractViolation("snobfit_step: generation 0 needs an initial design");
  }
  for (const auto& r : new_evals) {
    if (r.x.size() != n) throw ContractViolation("snobfit_step: record dimension mismatch");
    insert(state, r);
  }
  state.best = best_record(state.records);
  SnobStep out{std::move(state), {}, std::nullopt};
  SnobState& s = out.state;
  if (!s.best) {
    out.error = Termination::ModelDegenerate;
    return out;
  }
  if (!new_evals.empty()) ++s.generation;

  const int batch = options.resolved_batch(n);
  int n_local = static_cast<int>(std::ceil(options.local_fraction * batch));
  if (options.local_fraction < 1.0) n_local = std::min(n_local, batch - 1);
  auto rng = substream(mix_seed(s.seed, static_cast<std::uint64_t>(s.generation)),
                       s.records.size());
  std::vector<Vec>& request = out.request;
  const SubBox& best_cell = s.boxes[s.locate(s.best_record().x)];

  auto push_unique = [&](Vec x) {
    x = clamp(x, s.domain);
    for (int attempt = 0; attempt < 8 && is_known(s, request, x); ++attempt) {
      x = attempt < 4 ? uniform_in(best_cell.lower, best_cell.upper, rng)
                      : uniform_in(s.domain.lower(), s.domain.upper(), rng);
    }
    if (!is_known(s, request, x)) request.push_back(std::move(x));
  };

  // Local points: model minimizers around the incumbent and other local
  // minima, with the second slot spent inside the incumbent's own cell.
  const auto centers = model_centers(s, static_cast<std::size_t>(n_local));
  std::size_t next_center = 0;
  int local_made = 0;
  for (int j = 0; j < n_local; ++j) {
    if (j == 1) {
      push_unique(uniform_in(best_cell.lower, best_cell.upper, rng));
      ++local_made;
      continue;
    }
    std::optional<Vec> p;
    while (!p && next_center < centers.size()) p = model_suggestion(s, centers[next_center++], options);
    if (!p) break;  // remaining slots become exploration points
    push_unique(*p);
    ++local_made;
  }

  // Exploration: the larger half-side of the largest cells.
  std::vector<std::size_t> order(s.boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return s.boxes[a].scaled_volume(s.domain) > s.boxes[b].scaled_volume(s.domain);
  });
  const int n_explore = batch - local_made;
  for (std::size_t c = 0; static_cast<int>(request.size()) < local_made + n_explore; ++c) {
    if (c < order.size()) {
      const SubBox& b = s.boxes[order[c]];
      const Vec& anchor = s.records[b.members.front()].x;
      Vec x(n);
      for (int i = 0; i < n; ++i) {
        x[i] = anchor[i] - b.lower[i] >= b.upper[i] - anchor[i] ? 0.5 * (b.lower[i] + anchor[i])
                                                                : 0.5 * (anchor[i] + b.upper[i]);
      }
      push_unique(x);
    } else {
      push_unique(uniform_in(s.domain.lower(), s.domain.upper(), rng));
      if (c > order.size() + 4 * static_cast<std::size_t>(batch)) break;
    }
  }
  return out;
}

SnobResult snobfit_run(Evaluator& ev, const Box& box, const std::optional<Vec>& x0,
                       const SnobOptions& options, const std::vector<EvalRecord>& initial) {
  options.validate();
  const int n = box.dimension();
  if (x0 && (x0->size() != n || !box.contains(*x0))) {
    throw ContractViolation("snobfit: x0 must lie inside the box");
  }
  const int batch = options.resolved_batch(n);
  SnobResult result;

  std::vector<EvalRecord> design;
  for (const auto& r : initial) {
    if (box.contains(r.x)) design.push_back(r);
  }
  std::vector<Vec> fresh;
  const bool x0_known = x0 && std::any_of(design.begin(), design.end(), [&](const EvalRecord& r) {
                          return same_point(r.x, *x0);
                        });
  if (x0 && !x0_known) fresh.push_back(*x0);
  const int fill = batch - static_cast<int>(design.size() + fresh.size());
  if (fill > 0) {
    for (Vec& p : uniform_design(box, fill, options.seed)) fresh.push_back(std::move(p));
  }
  if (!fresh.empty()) {
    auto evaluated = ev.evaluate(fresh);
    ++result.generations;
    design.insert(design.end(), evaluated.records.begin(), evaluated.records.end());
  }
  if (design.empty()) {
    result.outcome = ev.outcome(ev.halt_reason());
    return result;
  }

  auto step = snobfit_step(SnobState(box, options.seed), design, options);
  if (step.error) {
    result.outcome = ev.outcome(*step.error);
    return result;
  }
  std::vector<double> best_trace{step.state.best_record().f};

  while (true) {
    if (ev.halted()) {
      result.outcome = ev.outcome(ev.halt_reason());
      return result;
    }
    if (step.request.empty()) {
      result.outcome = ev.outcome(Termination::ImprovementBelowThreshold);
      return result;
    }
    auto evaluated = ev.evaluate(step.request);
    ++result.generations;
    step = snobfit_step(std::move(step.state), evaluated.records, options);
    best_trace.push_back(step.state.best_record().f);
    const auto g = best_trace.size() - 1;
    if (g >= static_cast<std::size_t>(options.stall_window) &&
        best_trace[g - options.stall_window] - best_trace[g] < options.uncertainty_floor) {
      result.outcome = ev.outcome(Termination::ImprovementBelowThreshold);
      return result;
    }
  }
}

OptimizeOutcome snobfit_minimize(const Objective& obj, const Box& box, const std::optional<Vec>& x0,
                                 Budget budget, const SnobOptions& options) {
  Evaluator ev(obj, budget.remaining());
  return snobfit_run(ev, box, x0, options).outcome;
}

}  // namespace noisyopt
