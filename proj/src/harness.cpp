#include "noisyopt/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <map>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "noisyopt/problems.hpp"

namespace noisyopt::harness {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Reads typed members of one JSON object and rejects keys nobody asked for.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_, "expected an object");
  }

  bool has(const char* key) {
    seen_.insert(key);
    return j_.contains(key);
  }
  const json& raw(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }
  std::string key_path(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  void number(const char* key, double& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_number()) throw ConfigError(key_path(key), "expected a number");
    out = v.get<double>();
  }
  void number(const char* key, std::optional<double>& out) {
    if (!has(key)) return;
    double v = 0.0;
    number(key, v);
    out = v;
  }
  void integer(const char* key, int& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_number_integer()) throw ConfigError(key_path(key), "expected an integer");
    out = v.get<int>();
  }
  void integer(const char* key, std::optional<int>& out) {
    if (!has(key)) return;
    int v = 0;
    integer(key, v);
    out = v;
  }
  void count(const char* key, std::size_t& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
      throw ConfigError(key_path(key), "expected a nonnegative integer");
    }
    out = v.get<std::size_t>();
  }
  void seed(const char* key, std::uint64_t& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
      throw ConfigError(key_path(key), "expected a nonnegative integer");
    }
    out = v.get<std::uint64_t>();
  }
  void boolean(const char* key, bool& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_boolean()) throw ConfigError(key_path(key), "expected true or false");
    out = v.get<bool>();
  }
  void string(const char* key, std::string& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_string()) throw ConfigError(key_path(key), "expected a string");
    out = v.get<std::string>();
  }
  void numbers(const char* key, std::vector<double>& out) {
    if (!has(key)) return;
    out = number_list(j_.at(key), key_path(key));
  }
  void vec(const char* key, std::optional<Vec>& out) {
    if (!has(key)) return;
    const auto v = number_list(j_.at(key), key_path(key));
    out = Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
  }

  static std::vector<double> number_list(const json& v, const std::string& path) {
    if (!v.is_array()) throw ConfigError(path, "expected an array of numbers");
    std::vector<double> out;
    for (const auto& e : v) {
      if (!e.is_number()) throw ConfigError(path, "expected an array of numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError(key_path(k.c_str()), "unknown key");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

json vec_json(const Vec& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

void read_options(ObjectReader& r, ImfilOptions& o) {
  r.numbers("scales", o.scales);
  r.integer("max_inner_iters", o.max_inner_iters);
  r.number("armijo_c", o.armijo_c);
  r.integer("max_backtracks", o.max_backtracks);
  r.number("improvement_tol", o.improvement_tol);
  if (r.has("custom_directions")) {
    const json& d = r.raw("custom_directions");
    if (!d.is_array()) throw ConfigError(r.key_path("custom_directions"), "expected an array");
    for (const auto& e : d) {
      const auto v = ObjectReader::number_list(e, r.key_path("custom_directions"));
      o.custom_directions.push_back(
          Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size())));
    }
  }
}

void read_options(ObjectReader& r, SnobOptions& o) {
  r.integer("batch_size", o.batch_size);
  r.number("local_fraction", o.local_fraction);
  r.number("uncertainty_floor", o.uncertainty_floor);
  r.integer("stall_window", o.stall_window);
  r.boolean("use_uncertainty", o.use_uncertainty);
}

void read_options(ObjectReader& r, TrOptions& o) {
  r.number("rho_begin", o.rho_begin);
  r.number("rho_end", o.rho_end);
  r.integer("m_points", o.m_points);
  r.number("eta_accept", o.eta_accept);
  r.number("eta_strong", o.eta_strong);
  r.number("gamma_shrink", o.gamma_shrink);
  r.number("gamma_grow", o.gamma_grow);
  r.number("alt_step_fraction", o.alt_step_fraction);
  r.number("improvement_tol", o.improvement_tol);
}

void read_options(ObjectReader& r, MadsOptions& o) {
  std::string poll;
  r.string("poll", poll);
  if (poll == "orthogonal") {
    o.poll = PollDirections::OrthogonalBasis2n;
  } else if (poll == "random_unit") {
    o.poll = PollDirections::RandomUnit2n;
  } else if (!poll.empty()) {
    throw ConfigError(r.key_path("poll"), "expected orthogonal or random_unit");
  }
  r.number("initial_frame", o.initial_frame);
  r.integer("max_consecutive_failures", o.max_consecutive_failures);
  r.boolean("search_enabled", o.search_enabled);
  r.number("min_mesh", o.min_mesh);
  r.boolean("opportunistic", o.opportunistic);
  r.integer("block_size", o.block_size);
  r.vec("direction_weights", o.direction_weights);
}

void read_options(ObjectReader& r, BfgsOptions& o) {
  r.number("fd_step", o.fd_step);
  r.number("wolfe_c1", o.wolfe_c1);
  r.number("wolfe_c2", o.wolfe_c2);
  r.number("grad_tol", o.grad_tol);
  r.integer("max_line_steps", o.max_line_steps);
}

void read_options(ObjectReader& r, SimplexOptions& o) {
  r.number("reflection", o.reflection);
  r.number("expansion", o.expansion);
  r.number("contraction", o.contraction);
  r.number("shrink", o.shrink);
  r.number("init_spread", o.init_spread);
  r.number("f_tol", o.f_tol);
  r.number("x_tol", o.x_tol);
}

json options_json(const ImfilOptions& o) {
  json j{{"scales", o.scales},
         {"max_inner_iters", o.max_inner_iters},
         {"armijo_c", o.armijo_c},
         {"max_backtracks", o.max_backtracks},
         {"improvement_tol", o.improvement_tol}};
  if (!o.custom_directions.empty()) {
    json d = json::array();
    for (const Vec& v : o.custom_directions) d.push_back(vec_json(v));
    j["custom_directions"] = d;
  }
  return j;
}

json options_json(const SnobOptions& o) {
  return {{"batch_size", o.batch_size},
          {"local_fraction", o.local_fraction},
          {"uncertainty_floor", o.uncertainty_floor},
          {"stall_window", o.stall_window},
          {"use_uncertainty", o.use_uncertainty}};
}

json options_json(const TrOptions& o) {
  json j{{"eta_accept", o.eta_accept},         {"eta_strong", o.eta_strong},
         {"gamma_shrink", o.gamma_shrink},     {"gamma_grow", o.gamma_grow},
         {"alt_step_fraction", o.alt_step_fraction}, {"improvement_tol", o.improvement_tol}};
  if (o.rho_begin) j["rho_begin"] = *o.rho_begin;
  if (o.rho_end) j["rho_end"] = *o.rho_end;
  if (o.m_points) j["m_points"] = *o.m_points;
  return j;
}

json options_json(const MadsOptions& o) {
  json j{{"poll", o.poll == PollDirections::OrthogonalBasis2n ? "orthogonal" : "random_unit"},
         {"initial_frame", o.initial_frame},
         {"max_consecutive_failures", o.max_consecutive_failures},
         {"search_enabled", o.search_enabled},
         {"min_mesh", o.min_mesh},
         {"opportunistic", o.opportunistic},
         {"block_size", o.block_size}};
  if (o.direction_weights) j["direction_weights"] = vec_json(*o.direction_weights);
  return j;
}

json options_json(const BfgsOptions& o) {
  return {{"fd_step", o.fd_step},
          {"wolfe_c1", o.wolfe_c1},
          {"wolfe_c2", o.wolfe_c2},
          {"grad_tol", o.grad_tol},
          {"max_line_steps", o.max_line_steps}};
}

json options_json(const SimplexOptions& o) {
  return {{"reflection", o.reflection}, {"expansion", o.expansion},
          {"contraction", o.contraction}, {"shrink", o.shrink},
          {"init_spread", o.init_spread}, {"f_tol", o.f_tol},
          {"x_tol", o.x_tol}};
}

OptimizerSpec optimizer_from_json(const json& j, const std::string& path) {
  std::string name;
  const json* options = nullptr;
  if (j.is_string()) {
    name = j.get<std::string>();
  } else {
    ObjectReader r(j, path);
    r.string("name", name);
    if (r.has("options")) options = &r.raw("options");
    r.finish();
  }
  const auto id = optimizer_from_string(name);
  if (!id) throw ConfigError(path, "unknown optimizer '" + name + "'");
  OptimizerSpec spec = OptimizerSpec::defaults(*id);
  if (options) {
    ObjectReader r(*options, path + ".options");
    std::visit([&](auto& o) { read_options(r, o); }, spec.options);
    r.finish();
  }
  return spec;
}

json optimizer_json(const OptimizerSpec& spec) {
  return {{"name", std::string(to_string(spec.id))},
          {"options", std::visit([](const auto& o) { return options_json(o); }, spec.options)}};
}

CompositionPlan plan_from_json(const json& j) {
  ObjectReader r(j, "compose");
  CompositionPlan plan;
  if (r.has("first")) plan.first = optimizer_from_json(r.raw("first"), "compose.first");
  if (r.has("second")) plan.second = optimizer_from_json(r.raw("second"), "compose.second");
  if (r.has("bounds_rule")) {
    const json& b = r.raw("bounds_rule");
    if (b == "last_good_stencil") {
      plan.bounds_rule = LastGoodStencil{};
    } else if (b.is_object()) {
      ObjectReader br(b, "compose.bounds_rule");
      BestPointRadius rule;
      if (!br.has("best_point_radius")) {
        throw ConfigError("compose.bounds_rule", "expected last_good_stencil or best_point_radius");
      }
      br.number("best_point_radius", rule.radius);
      br.finish();
      plan.bounds_rule = rule;
    } else {
      throw ConfigError("compose.bounds_rule", "expected last_good_stencil or best_point_radius");
    }
  }
  if (r.has("budget_split")) {
    const json& b = r.raw("budget_split");
    if (b == "first_until_stall") {
      plan.budget_split = FirstUntilStall{};
    } else if (b.is_object()) {
      ObjectReader br(b, "compose.budget_split");
      FixedFraction split;
      if (!br.has("fixed_fraction")) {
        throw ConfigError("compose.budget_split", "expected first_until_stall or fixed_fraction");
      }
      br.number("fixed_fraction", split.fraction);
      br.finish();
      plan.budget_split = split;
    } else {
      throw ConfigError("compose.budget_split", "expected first_until_stall or fixed_fraction");
    }
  }
  r.finish();
  return plan;
}

json plan_json(const CompositionPlan& plan) {
  json j{{"first", optimizer_json(plan.first)}, {"second", optimizer_json(plan.second)}};
  if (const auto* r = std::get_if<BestPointRadius>(&plan.bounds_rule)) {
    j["bounds_rule"] = {{"best_point_radius", r->radius}};
  } else {
    j["bounds_rule"] = "last_good_stencil";
  }
  if (const auto* f = std::get_if<FixedFraction>(&plan.budget_split)) {
    j["budget_split"] = {{"fixed_fraction", f->fraction}};
  } else {
    j["budget_split"] = "first_until_stall";
  }
  return j;
}

const std::vector<std::string> kProblems = {"toy_molecule", "hubbard",  "sphere",
                                            "rosenbrock",   "two_well", "shallow_multiwell"};

bool is_vqe(const std::string& name) { return name == "toy_molecule" || name == "hubbard"; }

// Optimizer seeds follow the run seed so every cell is replayable from it.
Method seeded(Method m, std::uint64_t seed) {
  auto seed_spec = [seed](OptimizerSpec& spec) {
    if (auto* s = std::get_if<SnobOptions>(&spec.options)) s->seed = seed;
    if (auto* s = std::get_if<MadsOptions>(&spec.options)) s->seed = seed;
  };
  if (auto* spec = std::get_if<OptimizerSpec>(&m)) {
    seed_spec(*spec);
  } else {
    auto& plan = std::get<CompositionPlan>(m);
    seed_spec(plan.first);
    seed_spec(plan.second);
  }
  return m;
}

Box resolved_box(const RunConfig& config, const BenchProblem& p) {
  return config.box.value_or(p.box);
}

Vec resolved_x0(const RunConfig& config, const Box& box) {
  return config.x0.value_or(box.center());
}

}  // namespace

std::vector<std::string> problem_names() { return kProblems; }

std::string method_name(const Method& m) {
  if (const auto* spec = std::get_if<OptimizerSpec>(&m)) return std::string(to_string(spec->id));
  const auto& plan = std::get<CompositionPlan>(m);
  return std::string(to_string(plan.first.id)) + "+" + std::string(to_string(plan.second.id));
}

RunConfig config_from_json(const json& doc) {
  ObjectReader r(doc, "");
  RunConfig c;
  r.string("problem", c.problem);
  r.integer("dimension", c.dimension);
  r.integer("layers", c.layers);
  const bool has_optimizer = r.has("optimizer");
  const bool has_compose = r.has("compose");
  if (has_optimizer && has_compose) {
    throw ConfigError("compose", "give either optimizer or compose, not both");
  }
  if (has_optimizer) c.method = optimizer_from_json(r.raw("optimizer"), "optimizer");
  if (has_compose) c.method = plan_from_json(r.raw("compose"));
  if (r.has("box")) {
    ObjectReader b(r.raw("box"), "box");
    std::optional<Vec> lo, hi;
    b.vec("lower", lo);
    b.vec("upper", hi);
    b.finish();
    if (!lo || !hi) throw ConfigError("box", "needs lower and upper");
    try {
      c.box = Box(*lo, *hi);
    } catch (const ContractViolation& e) {
      throw ConfigError("box", e.what());
    }
  }
  r.vec("x0", c.x0);
  r.count("budget", c.budget);
  if (r.has("noise")) {
    ObjectReader n(r.raw("noise"), "noise");
    n.number("mu", c.noise.mu);
    n.number("sigma", c.noise.sigma);
    n.number("ortho_fraction", c.noise.ortho_fraction);
    n.number("cnot_factor", c.noise.cnot_factor);
    n.finish();
  }
  r.integer("n_samples", c.n_samples);
  r.integer("shots", c.shots);
  r.integer("threads", c.threads);
  r.seed("seed", c.seed);
  r.integer("repeats", c.repeats);
  r.numbers("sigma_grid", c.sigma_grid);
  if (r.has("surface")) {
    ObjectReader s(r.raw("surface"), "surface");
    ScanSpec spec;
    if (s.has("params")) {
      const json& p = s.raw("params");
      if (!p.is_array()) throw ConfigError("surface.params", "expected an array of integers");
      for (const auto& e : p) {
        if (!e.is_number_integer()) {
          throw ConfigError("surface.params", "expected an array of integers");
        }
        spec.params.push_back(e.get<int>());
      }
    }
    s.numbers("lower", spec.lower);
    s.numbers("upper", spec.upper);
    s.integer("resolution", spec.resolution);
    s.finish();
    c.surface = spec;
  }
  r.finish();
  validate(c);
  return c;
}

json config_to_json(const RunConfig& c) {
  json j;
  j["problem"] = c.problem;
  j["dimension"] = c.dimension;
  j["layers"] = c.layers;
  if (const auto* spec = std::get_if<OptimizerSpec>(&c.method)) {
    j["optimizer"] = optimizer_json(*spec);
  } else {
    j["compose"] = plan_json(std::get<CompositionPlan>(c.method));
  }
  if (c.box) j["box"] = {{"lower", vec_json(c.box->lower())}, {"upper", vec_json(c.box->upper())}};
  if (c.x0) j["x0"] = vec_json(*c.x0);
  j["budget"] = c.budget;
  j["noise"] = {{"mu", c.noise.mu},
                {"sigma", c.noise.sigma},
                {"ortho_fraction", c.noise.ortho_fraction},
                {"cnot_factor", c.noise.cnot_factor}};
  j["n_samples"] = c.n_samples;
  j["shots"] = c.shots;
  j["threads"] = c.threads;
  j["seed"] = c.seed;
  j["repeats"] = c.repeats;
  if (!c.sigma_grid.empty()) j["sigma_grid"] = c.sigma_grid;
  if (c.surface) {
    j["surface"] = {{"params", c.surface->params},
                    {"lower", c.surface->lower},
                    {"upper", c.surface->upper},
                    {"resolution", c.surface->resolution}};
  }
  return j;
}

void validate(const RunConfig& c) {
  if (std::find(kProblems.begin(), kProblems.end(), c.problem) == kProblems.end()) {
    throw ConfigError("problem", "unknown problem '" + c.problem + "'");
  }
  if (c.dimension < 1) throw ConfigError("dimension", "must be >= 1");
  if (c.problem == "two_well" && c.dimension != 2) {
    throw ConfigError("dimension", "two_well is two-dimensional");
  }
  if (c.layers < 1 || c.layers > 7) throw ConfigError("layers", "must lie in 1..7");
  if (c.budget < 1) throw ConfigError("budget", "must be >= 1");
  if (c.n_samples < 1) throw ConfigError("n_samples", "must be >= 1");
  if (c.shots < 0) throw ConfigError("shots", "must be >= 0");
  if (c.threads < 1) throw ConfigError("threads", "must be >= 1");
  if (c.repeats < 1) throw ConfigError("repeats", "must be >= 1");
  try {
    c.noise.validate();
  } catch (const ContractViolation& e) {
    throw ConfigError("noise", e.what());
  }
  for (std::size_t i = 0; i < c.sigma_grid.size(); ++i) {
    if (!(c.sigma_grid[i] >= 0.0) || (i > 0 && !(c.sigma_grid[i] > c.sigma_grid[i - 1]))) {
      throw ConfigError("sigma_grid", "must be nonnegative and strictly ascending");
    }
  }

  const BenchProblem p = make_problem(c);
  const int n = p.box.dimension();
  if (c.box && c.box->dimension() != n) throw ConfigError("box", "dimension mismatch");
  const Box box = resolved_box(c, p);
  if (c.x0) {
    if (c.x0->size() != n) throw ConfigError("x0", "dimension mismatch");
    if (!box.contains(*c.x0)) throw ConfigError("x0", "must lie inside the box");
  }
  try {
    if (const auto* spec = std::get_if<OptimizerSpec>(&c.method)) {
      spec->validate(box);
    } else {
      std::get<CompositionPlan>(c.method).validate(box);
    }
  } catch (const ContractViolation& e) {
    throw ConfigError(std::holds_alternative<OptimizerSpec>(c.method) ? "optimizer" : "compose",
                      e.what());
  }
  if (c.surface) {
    const ScanSpec& s = *c.surface;
    const std::size_t k = s.params.size();
    if (k < 1 || k > 2) throw ConfigError("surface.params", "scan one or two parameters");
    if (k == 2 && s.params[0] == s.params[1]) {
      throw ConfigError("surface.params", "parameters must differ");
    }
    for (int q : s.params) {
      if (q < 0 || q >= n) throw ConfigError("surface.params", "index out of range");
    }
    if (s.lower.size() != k || s.upper.size() != k) {
      throw ConfigError("surface", "lower and upper need one entry per parameter");
    }
    for (std::size_t i = 0; i < k; ++i) {
      if (!(s.lower[i] < s.upper[i])) throw ConfigError("surface", "lower must be below upper");
    }
    if (s.resolution < 2) throw ConfigError("surface.resolution", "must be >= 2");
  }
}

BenchProblem make_problem(const RunConfig& c) {
  BenchProblem out;
  out.name = c.problem;
  if (is_vqe(c.problem)) {
    HubbardOptions ho;
    ho.layers = c.layers;
    const VqeProblem vqe = c.problem == "hubbard" ? make_hubbard(ho) : make_toy_molecule();
    out.box = vqe.default_box;
    out.reference_minimum = vqe.exact_ground_energy;
    out.true_value = [vqe](const Vec& x) { return vqe.energy(x); };
    qsim::NoiseSpec noise = c.noise;
    const qsim::EnergyOptions eo{c.n_samples, c.shots, c.threads};
    out.objective = [vqe, noise, eo](double sigma, std::uint64_t seed) {
      qsim::NoiseSpec n = noise;
      n.sigma = sigma;
      return vqe.objective(n, eo, seed);
    };
    return out;
  }
  const auto kind = synthetic_from_string(c.problem);
  if (!kind) throw ConfigError("problem", "unknown problem '" + c.problem + "'");
  const SyntheticProblem base = make_synthetic(*kind, c.dimension, 0.0);
  out.box = base.default_box;
  out.reference_minimum = base.known_minimum;
  out.true_value = base.f;
  out.objective = [base](double sigma, std::uint64_t seed) {
    SyntheticProblem p = base;
    p.noise_sigma_f = sigma;
    return p.objective(seed);
  };
  return out;
}

RunResult run_single(const RunConfig& config) {
  validate(config);
  const BenchProblem p = make_problem(config);
  const Box box = resolved_box(config, p);
  const Vec x0 = resolved_x0(config, box);
  const Objective obj = p.objective(config.noise.sigma, config.seed);
  const Method m = seeded(config.method, config.seed);

  RunResult result;
  if (const auto* spec = std::get_if<OptimizerSpec>(&m)) {
    result.outcome = minimize(obj, box, x0, Budget(config.budget), *spec);
  } else {
    result.outcome =
        run_composition(obj, box, x0, Budget(config.budget), std::get<CompositionPlan>(m))
            .outcome;
  }
  SummaryRow& row = result.row;
  row.sigma = config.noise.sigma;
  row.seed = config.seed;
  row.best_f = result.outcome.best_f;
  row.best_x = result.outcome.best_x;
  row.true_energy = row.best_x.size() == box.dimension() ? p.true_value(row.best_x) : kNaN;
  row.evals_used = result.outcome.evals_used();
  row.termination = result.outcome.termination;
  return result;
}

std::uint64_t cell_seed(std::uint64_t master, std::size_t sigma_index, int repeat) {
  return mix_seed(master, static_cast<std::uint64_t>(sigma_index),
                  static_cast<std::uint64_t>(repeat));
}

double median(std::vector<double> v) {
  if (v.empty()) return kNaN;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<SigmaAggregate> aggregate(const std::vector<SummaryRow>& rows, double reference) {
  std::map<double, std::vector<const SummaryRow*>> groups;
  for (const auto& r : rows) groups[r.sigma].push_back(&r);
  std::vector<SigmaAggregate> out;
  for (const auto& [sigma, members] : groups) {
    SigmaAggregate a;
    a.sigma = sigma;
    a.runs = static_cast<int>(members.size());
    std::vector<double> errors, evals;
    double sum_err = 0.0, sum_f = 0.0;
    a.min_error = a.min_best_f = std::numeric_limits<double>::infinity();
    for (const SummaryRow* r : members) {
      const double e = r->true_energy - reference;
      errors.push_back(e);
      evals.push_back(static_cast<double>(r->evals_used));
      sum_err += e;
      sum_f += r->best_f;
      a.min_error = std::min(a.min_error, e);
      a.min_best_f = std::min(a.min_best_f, r->best_f);
    }
    a.mean_error = sum_err / a.runs;
    a.mean_best_f = sum_f / a.runs;
    a.median_error = median(errors);
    a.median_evals = median(evals);
    a.lowest_objective = a.min_best_f;
    out.push_back(a);
  }
  return out;
}

SweepResult run_sweep(const RunConfig& config, const std::vector<double>& sigma_grid, int jobs) {
  RunConfig checked = config;
  checked.sigma_grid = sigma_grid;
  if (sigma_grid.empty()) throw ConfigError("sigma_grid", "must not be empty");
  validate(checked);
  if (jobs < 1) throw ConfigError("jobs", "must be >= 1");

  const std::size_t cells = sigma_grid.size() * static_cast<std::size_t>(config.repeats);
  SweepResult result;
  result.rows.resize(cells);
  result.reference_minimum = make_problem(config).reference_minimum;

  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;
  auto worker = [&] {
    for (std::size_t k = next++; k < cells; k = next++) {
      const std::size_t si = k / config.repeats;
      const int rep = static_cast<int>(k % config.repeats);
      RunConfig cell = config;
      cell.noise.sigma = sigma_grid[si];
      cell.seed = cell_seed(config.seed, si, rep);
      try {
        SummaryRow row = run_single(cell).row;
        row.repeat = rep;
        result.rows[k] = std::move(row);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = cells;
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    const auto n_workers = std::min<std::size_t>(static_cast<std::size_t>(jobs), cells);
    for (std::size_t w = 1; w < n_workers; ++w) pool.emplace_back(worker);
    worker();
  }
  if (error) std::rethrow_exception(error);
  result.aggregates = aggregate(result.rows, result.reference_minimum);
  return result;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_rows_csv(std::ostream& out, const std::vector<SummaryRow>& rows) {
  out << "sigma,repeat,seed,best_f,true_energy,evals_used,termination";
  const Eigen::Index n = rows.empty() ? 0 : rows.front().best_x.size();
  for (Eigen::Index i = 0; i < n; ++i) out << ",best_x" << i;
  out << '\n';
  for (const auto& r : rows) {
    out << format_double(r.sigma) << ',' << r.repeat << ',' << r.seed << ','
        << format_double(r.best_f) << ',' << format_double(r.true_energy) << ',' << r.evals_used
        << ',' << to_string(r.termination);
    for (Eigen::Index i = 0; i < n; ++i) {
      out << ',' << (i < r.best_x.size() ? format_double(r.best_x[i]) : "nan");
    }
    out << '\n';
  }
}

void write_aggregate_csv(std::ostream& out, const std::vector<SigmaAggregate>& aggregates) {
  out << "sigma,runs,mean_error,min_error,median_error,mean_best_f,min_best_f,median_evals,"
         "lowest_objective\n";
  for (const auto& a : aggregates) {
    out << format_double(a.sigma) << ',' << a.runs << ',' << format_double(a.mean_error) << ','
        << format_double(a.min_error) << ',' << format_double(a.median_error) << ','
        << format_double(a.mean_best_f) << ',' << format_double(a.min_best_f) << ','
        << format_double(a.median_evals) << ',' << format_double(a.lowest_objective) << '\n';
  }
}

std::vector<SurfacePoint> scan_surface(const RunConfig& config, const ScanSpec& spec,
                                       double sigma) {
  RunConfig checked = config;
  checked.surface = spec;
  validate(checked);
  const BenchProblem p = make_problem(config);
  const Box box = resolved_box(config, p);
  const Vec base = resolved_x0(config, box);
  const Objective obj = p.objective(sigma, config.seed);

  const int res = spec.resolution;
  auto coord = [&](std::size_t axis, int i) {
    return spec.lower[axis] + (spec.upper[axis] - spec.lower[axis]) * i / (res - 1);
  };
  std::vector<SurfacePoint> points;
  const int outer = res;
  const int inner = spec.params.size() == 2 ? res : 1;
  for (int i = 0; i < outer; ++i) {
    for (int j = 0; j < inner; ++j) {
      Vec theta = base;
      theta[spec.params[0]] = coord(0, i);
      if (inner > 1) theta[spec.params[1]] = coord(1, j);
      const auto stream = static_cast<std::uint64_t>(points.size());
      points.push_back({theta, obj.evaluate(theta, stream)});
    }
  }
  return points;
}

void write_surface_csv(std::ostream& out, const ScanSpec& spec,
                       const std::vector<SurfacePoint>& points) {
  for (int q : spec.params) out << "theta" << q << ',';
  out << "value\n";
  for (const auto& pt : points) {
    for (int q : spec.params) out << format_double(pt.theta[q]) << ',';
    out << format_double(pt.value) << '\n';
  }
}

namespace {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> lines;  // source line of each row

  std::size_t column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw CsvError(1, "missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  }
  double number(std::size_t row, std::size_t col) const {
    const std::string& s = rows[row][col];
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || *end != '\0') {
      throw CsvError(lines[row], "'" + s + "' is not a number");
    }
    return v;
  }
};

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split(line);
    if (t.header.empty()) {
      t.header = std::move(fields);
      continue;
    }
    if (fields.size() != t.header.size()) {
      throw CsvError(n, "expected " + std::to_string(t.header.size()) + " fields, found " +
                            std::to_string(fields.size()));
    }
    t.rows.push_back(std::move(fields));
    t.lines.push_back(n);
  }
  if (t.header.empty()) throw CsvError(n + 1, "missing header");
  if (t.rows.empty()) throw CsvError(n + 1, "no data rows");
  return t;
}

constexpr double kWidth = 640, kHeight = 420, kLeft = 80, kRight = 150, kTop = 30, kBottom = 50;
constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Axis {
  double lo = 0.0, hi = 1.0;
  bool log = false;

  static Axis fit(double lo, double hi, bool log) {
    Axis a{lo, hi, log};
    if (log) {
      a.lo = std::log10(lo);
      a.hi = std::log10(hi);
    }
    if (!(a.hi > a.lo)) {
      const double pad = a.lo == 0.0 ? 1.0 : 0.5 * std::abs(a.lo);
      a.lo -= pad;
      a.hi += pad;
    }
    return a;
  }
  double unit(double v) const { return ((log ? std::log10(v) : v) - lo) / (hi - lo); }
  double first() const { return log ? std::pow(10.0, lo) : lo; }
  double last() const { return log ? std::pow(10.0, hi) : hi; }
};

double px(const Axis& a, double v) { return kLeft + a.unit(v) * (kWidth - kLeft - kRight); }
double py(const Axis& a, double v) { return kHeight - kBottom - a.unit(v) * (kHeight - kTop - kBottom); }

void frame(std::ostringstream& svg, const Axis& x, const Axis& y, const std::string& xlabel,
           const std::string& ylabel) {
  const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
  svg << "<rect x=\"" << num(x0) << "\" y=\"" << num(y1) << "\" width=\"" << num(x1 - x0)
      << "\" height=\"" << num(y0 - y1) << "\" fill=\"none\" stroke=\"#444\"/>\n";
  svg << "<text x=\"" << num(x0) << "\" y=\"" << num(y0 + 18) << "\" font-size=\"11\">"
      << label(x.first()) << "</text>\n";
  svg << "<text x=\"" << num(x1) << "\" y=\"" << num(y0 + 18)
      << "\" font-size=\"11\" text-anchor=\"end\">" << label(x.last()) << "</text>\n";
  svg << "<text x=\"" << num(x0 - 6) << "\" y=\"" << num(y0)
      << "\" font-size=\"11\" text-anchor=\"end\">" << label(y.first()) << "</text>\n";
  svg << "<text x=\"" << num(x0 - 6) << "\" y=\"" << num(y1 + 10)
      << "\" font-size=\"11\" text-anchor=\"end\">" << label(y.last()) << "</text>\n";
  svg << "<text x=\"" << num((x0 + x1) / 2) << "\" y=\"" << num(kHeight - 12)
      << "\" font-size=\"12\" text-anchor=\"middle\">" << escape(xlabel) << "</text>\n";
  svg << "<text x=\"16\" y=\"" << num((y0 + y1) / 2)
      << "\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
      << num((y0 + y1) / 2) << ")\">" << escape(ylabel) << "</text>\n";
}

std::string svg_open() {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" +
         num(kHeight) + "\" viewBox=\"0 0 " + num(kWidth) + " " + num(kHeight) + "\">\n" +
         "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

std::string plot_sweep(const std::vector<PlotSeries>& series) {
  struct Band {
    std::vector<double> sigma, mean, low;
  };
  std::vector<Band> bands;
  for (const auto& s : series) {
    const CsvTable t = parse_csv(s.csv);
    const std::size_t cs = t.column("sigma"), ce = t.column("true_energy");
    std::map<double, std::vector<double>> groups;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      groups[t.number(r, cs)].push_back(t.number(r, ce));
    }
    Band b;
    for (const auto& [sigma, vals] : groups) {
      double sum = 0.0, low = vals.front();
      for (double v : vals) {
        sum += v;
        low = std::min(low, v);
      }
      b.sigma.push_back(sigma);
      b.mean.push_back(sum / vals.size());
      b.low.push_back(low);
    }
    bands.push_back(std::move(b));
  }
  double xlo = std::numeric_limits<double>::infinity(), xhi = -xlo, ylo = xlo, yhi = -xlo;
  for (const auto& b : bands) {
    xlo = std::min(xlo, b.sigma.front());
    xhi = std::max(xhi, b.sigma.back());
    for (std::size_t i = 0; i < b.sigma.size(); ++i) {
      ylo = std::min(ylo, b.low[i]);
      yhi = std::max(yhi, b.mean[i]);
    }
  }
  const Axis x = Axis::fit(xlo, xhi, xlo > 0.0);
  const Axis y = Axis::fit(ylo, yhi, false);

  std::ostringstream svg;
  svg << svg_open();
  frame(svg, x, y, x.log ? "sigma (log)" : "sigma", "true energy");
  for (std::size_t k = 0; k < bands.size(); ++k) {
    const Band& b = bands[k];
    const char* color = kPalette[k % std::size(kPalette)];
    svg << "<polygon class=\"band\" fill=\"" << color << "\" fill-opacity=\"0.2\" points=\"";
    for (std::size_t i = 0; i < b.sigma.size(); ++i) {
      svg << num(px(x, b.sigma[i])) << ',' << num(py(y, b.mean[i])) << ' ';
    }
    for (std::size_t i = b.sigma.size(); i-- > 0;) {
      svg << num(px(x, b.sigma[i])) << ',' << num(py(y, b.low[i])) << ' ';
    }
    svg << "\"/>\n<path class=\"series\" fill=\"none\" stroke=\"" << color
        << "\" stroke-width=\"2\" d=\"";
    for (std::size_t i = 0; i < b.sigma.size(); ++i) {
      svg << (i ? " L" : "M") << num(px(x, b.sigma[i])) << ',' << num(py(y, b.mean[i]));
    }
    svg << "\"/>\n";
    svg << "<text x=\"" << num(kWidth - kRight + 10) << "\" y=\"" << num(kTop + 16 * (k + 1))
        << "\" font-size=\"12\" fill=\"" << color << "\">" << escape(series[k].label)
        << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

std::string plot_surface(const PlotSeries& series) {
  const CsvTable t = parse_csv(series.csv);
  const std::size_t cv = t.column("value");
  if (t.header.size() != 2 && t.header.size() != 3) {
    throw CsvError(1, "surface CSV needs one or two theta columns and value");
  }
  std::ostringstream svg;
  svg << svg_open();
  const std::size_t n = t.rows.size();
  std::vector<double> a(n), b(n), v(n);
  for (std::size_t r = 0; r < n; ++r) {
    a[r] = t.number(r, 0);
    v[r] = t.number(r, cv);
    if (t.header.size() == 3) b[r] = t.number(r, 1);
  }
  const auto [vmin, vmax] = std::minmax_element(v.begin(), v.end());
  const auto [amin, amax] = std::minmax_element(a.begin(), a.end());
  const Axis x = Axis::fit(*amin, *amax, false);
  if (t.header.size() == 2) {
    const Axis y = Axis::fit(*vmin, *vmax, false);
    frame(svg, x, y, t.header[0], "value");
    svg << "<path class=\"series\" fill=\"none\" stroke=\"" << kPalette[0]
        << "\" stroke-width=\"2\" d=\"";
    for (std::size_t r = 0; r < n; ++r) {
      svg << (r ? " L" : "M") << num(px(x, a[r])) << ',' << num(py(y, v[r]));
    }
    svg << "\"/>\n";
  } else {
    const auto [bmin, bmax] = std::minmax_element(b.begin(), b.end());
    const Axis y = Axis::fit(*bmin, *bmax, false);
    frame(svg, x, y, t.header[0], t.header[1]);
    const std::set<double> xs(a.begin(), a.end()), ys(b.begin(), b.end());
    const double cw = (kWidth - kLeft - kRight) / std::max<std::size_t>(xs.size() - 1, 1);
    const double ch = (kHeight - kTop - kBottom) / std::max<std::size_t>(ys.size() - 1, 1);
    const Axis c = Axis::fit(*vmin, *vmax, false);
    for (std::size_t r = 0; r < n; ++r) {
      const double u = std::clamp(c.unit(v[r]), 0.0, 1.0);
      const int red = static_cast<int>(std::lround(255 * u));
      const int blue = 255 - red;
      char color[8];
      std::snprintf(color, sizeof color, "#%02x40%02x", red, blue);
      svg << "<rect x=\"" << num(px(x, a[r]) - cw / 2) << "\" y=\"" << num(py(y, b[r]) - ch / 2)
          << "\" width=\"" << num(cw) << "\" height=\"" << num(ch) << "\" fill=\"" << color
          << "\"/>\n";
    }
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace

std::string emit_plot(const std::vector<PlotSeries>& series, const std::string& kind) {
  if (series.empty()) throw CsvError(0, "no input");
  if (kind == "sweep") return plot_sweep(series);
  if (kind == "surface") return plot_surface(series.front());
  throw ConfigError("kind", "expected sweep or surface");
}

}  // namespace noisyopt::harness
