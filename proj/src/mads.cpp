#include "noisyopt/mads.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace noisyopt {
namespace {

using Key = std::vector<double>;

Key key_of(const Vec& x) { return Key(x.data(), x.data() + x.size()); }

// Mesh step per coordinate in parameter units.
Vec mesh_step(double mesh, const Box& box) { return mesh * box.width(); }

// Places anchor + step * z inside the box by shrinking each integer offset
// toward zero until it fits.
Vec mesh_point(const Vec& anchor, const Vec& step, Vec z, const Box& box) {
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double lo = std::ceil((box.lower()[i] - anchor[i]) / step[i]);
    const double hi = std::floor((box.upper()[i] - anchor[i]) / step[i]);
    z[i] = std::min(std::max(z[i], lo), hi);
    while (z[i] > 0 && anchor[i] + step[i] * z[i] > box.upper()[i]) z[i] -= 1;
    while (z[i] < 0 && anchor[i] + step[i] * z[i] < box.lower()[i]) z[i] += 1;
  }
  return anchor + step.cwiseProduct(z);
}

Eigen::MatrixXd random_basis(int n, PollDirections kind, std::mt19937_64& rng) {
  std::normal_distribution<double> z(0.0, 1.0);
  Eigen::MatrixXd g(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) g(i, j) = z(rng);
  }
  if (kind == PollDirections::OrthogonalBasis2n) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    return qr.householderQ() * Eigen::MatrixXd::Identity(n, n);
  }
  for (int j = 0; j < n; ++j) g.col(j).normalize();
  return g;
}

}  // namespace

void MadsOptions::validate(int n) const {
  if (!(initial_frame > 0.0 && initial_frame <= 1.0)) {
    throw ContractViolation("MadsOptions: initial_frame must lie in (0, 1]");
  }
  if (max_consecutive_failures < 1) {
    throw ContractViolation("MadsOptions: max_consecutive_failures must be >= 1");
  }
  if (block_size < 1) throw ContractViolation("MadsOptions: block_size must be >= 1");
  if (!(min_mesh > 0.0)) throw ContractViolation("MadsOptions: min_mesh must be positive");
  if (direction_weights) {
    if (direction_weights->size() != n || !(direction_weights->array() > 0.0).all()) {
      throw ContractViolation("MadsOptions: direction_weights must be n positive values");
    }
  }
}

double mesh_for_frame(double frame) { return std::min(frame, frame * frame); }

std::vector<Vec> poll_points(const MadsState& state, const Box& box, const MadsOptions& options,
                             std::uint64_t seed) {
  const int n = box.dimension();
  const Vec& x = state.incumbent.x;
  auto rng = substream(seed, static_cast<std::uint64_t>(state.iteration));
  Eigen::MatrixXd basis = random_basis(n, options.poll, rng);
  if (options.poll == PollDirections::OrthogonalBasis2n && state.last_step.size() == n &&
      state.last_step.norm() > 0.0) {
    // Reflect the basis so its first column follows the last successful step.
    const Vec target = state.last_step.cwiseQuotient(box.width()).normalized();
    const Vec u = basis.col(0) - target;
    if (u.norm() > 1e-12) {
      const Vec v = u.normalized();
      basis -= 2.0 * v * (v.transpose() * basis);
    }
  }
  const Vec step = mesh_step(state.mesh, box);
  const double ratio = state.frame / state.mesh;

  std::vector<Vec> out;
  std::set<Key> seen{key_of(x)};
  for (int j = 0; j < n; ++j) {
    for (int sign : {1, -1}) {
      Vec d = sign * basis.col(j);
      if (options.direction_weights) d = d.cwiseProduct(*options.direction_weights);
      const Vec z = (ratio * d / d.lpNorm<Eigen::Infinity>()).array().round().matrix();
      Vec p = mesh_point(x, step, z, box);
      if (seen.insert(key_of(p)).second) out.push_back(std::move(p));
    }
  }
  if (state.last_step.size() == n && state.last_step.norm() > 0.0) {
    const Vec dir = state.last_step.cwiseQuotient(box.width());
    auto cosine = [&](const Vec& p) {
      const Vec d = (p - x).cwiseQuotient(box.width());
      return d.dot(dir) / d.norm();
    };
    std::stable_sort(out.begin(), out.end(),
                     [&](const Vec& a, const Vec& b) { return cosine(a) > cosine(b); });
  }
  return out;
}

std::vector<Vec> search_points(const MadsState& state, const Box& box, std::uint64_t seed) {
  const int n = box.dimension();
  const Vec& x = state.incumbent.x;
  const Vec frame = state.frame * box.width();
  const Box local((x - frame).cwiseMax(box.lower()), (x + frame).cwiseMin(box.upper()));
  const Vec step = mesh_step(state.mesh, box);
  std::vector<Vec> out;
  std::set<Key> seen{key_of(x)};
  if (state.last_step.size() == n && state.last_step.norm() > 0.0) {
    const Vec z = state.last_step.cwiseQuotient(step).array().round().matrix();
    Vec p = mesh_point(x, step, z, box);
    if (seen.insert(key_of(p)).second) out.push_back(std::move(p));
  }
  const auto sample = uniform_design(local, n, mix_seed(seed, 0x5ea2c4ULL,
                                                         static_cast<std::uint64_t>(state.iteration)));
  for (const Vec& u : sample) {
    const Vec z = (u - x).cwiseQuotient(step).array().round().matrix();
    Vec p = mesh_point(x, step, z, box);
    if (seen.insert(key_of(p)).second) out.push_back(std::move(p));
  }
  return out;
}

MadsResult mads_run(Evaluator& ev, const Box& box, const Vec& x0, const MadsOptions& options) {
  const int n = box.dimension();
  options.validate(n);
  if (x0.size() != n || !box.contains(x0)) {
    throw ContractViolation("mads: x0 must lie inside the box");
  }
  MadsResult result;
  auto finish = [&](Termination t) {
    result.outcome = ev.outcome(t);
    return result;
  };

  const auto first = ev.evaluate_one(x0);
  if (!first) return finish(ev.halt_reason());
  MadsState state;
  state.incumbent = *first;
  state.frame = options.initial_frame;
  state.mesh = mesh_for_frame(state.frame);
  std::set<Key> evaluated{key_of(x0)};
  auto better = [&](const EvalRecord& r) {
    const double inc = std::isfinite(state.incumbent.f) ? state.incumbent.f : INFINITY;
    return std::isfinite(r.f) && r.f < inc;
  };

  // Evaluates the unseen candidates; returns whether the incumbent improved.
  auto try_points = [&](const std::vector<Vec>& candidates, std::size_t& count) {
    std::vector<Vec> fresh;
    for (const Vec& p : candidates) {
      if (!evaluated.contains(key_of(p))) fresh.push_back(p);
    }
    const std::size_t block =
        options.opportunistic ? static_cast<std::size_t>(options.block_size) : fresh.size();
    bool improved = false;
    count = 0;
    for (std::size_t start = 0; start < fresh.size() && !improved && !ev.halted();
         start += block) {
      const std::size_t stop = std::min(fresh.size(), start + block);
      const std::span<const Vec> chunk(fresh.data() + start, stop - start);
      const auto batch = ev.evaluate(chunk);
      count += batch.records.size();
      for (const auto& r : batch.records) {
        evaluated.insert(key_of(r.x));
        if (better(r)) {
          state.incumbent = r;
          improved = true;
        }
      }
    }
    return improved;
  };

  while (true) {
    if (ev.halted()) return finish(ev.halt_reason());
    MadsIteration it;
    it.frame = state.frame;
    it.mesh = state.mesh;
    it.anchor = state.incumbent.x;

    bool success = false;
    if (options.search_enabled) {
      it.search_success = try_points(search_points(state, box, options.seed), it.search_evals);
      success = it.search_success;
    }
    if (!success && !ev.halted()) {
      it.poll_success = try_points(poll_points(state, box, options, options.seed), it.poll_evals);
      success = it.poll_success;
    }
    result.trace.push_back(it);
    if (ev.halted()) return finish(ev.halt_reason());

    if (success) {
      state.last_step = state.incumbent.x - it.anchor;
      state.frame = std::min(2.0 * state.frame, options.initial_frame);
      state.consecutive_failures = 0;
    } else {
      state.frame *= 0.5;
      ++state.consecutive_failures;
      state.last_step = Vec();
    }
    state.mesh = mesh_for_frame(state.frame);
    ++state.iteration;
    if (state.mesh < options.min_mesh ||
        state.consecutive_failures >= options.max_consecutive_failures) {
      return finish(Termination::ImprovementBelowThreshold);
    }
  }
}

OptimizeOutcome mads_minimize(const Objective& obj, const Box& box, const Vec& x0, Budget budget,
                              const MadsOptions& options) {
  Evaluator ev(obj, budget.remaining());
  return mads_run(ev, box, x0, options).outcome;
}

}  // namespace noisyopt
