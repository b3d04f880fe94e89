#include "noisyopt/problems.hpp"

#include <bit>
#include <cmath>
#include <numbers>

namespace noisyopt {
namespace {

using qsim::Circuit;
using qsim::Gate;
using qsim::PauliSum;

constexpr double kPi = std::numbers::pi;

// Golden-section search for a minimum of a unimodal g on [a, b].
double golden_min(const std::function<double(double)>& g, double a, double b) {
  const double r = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = b - r * (b - a), d = a + r * (b - a);
  double gc = g(c), gd = g(d);
  for (int i = 0; i < 200 && b - a > 1e-14; ++i) {
    if (gc < gd) {
      b = d;
      d = c;
      gd = gc;
      c = b - r * (b - a);
      gc = g(c);
    } else {
      a = c;
      c = d;
      gc = gd;
      d = a + r * (b - a);
      gd = g(d);
    }
  }
  return 0.5 * (a + b);
}

// String with the listed single-qubit operators and identity elsewhere.
std::string pauli_string(int q, std::initializer_list<std::pair<int, char>> ops) {
  std::string s(q, 'I');
  for (auto [k, p] : ops) s[k] = p;
  return s;
}

// a_i^dag a_j + a_j^dag a_i (i < j) = (X_i Z..Z X_j + Y_i Z..Z Y_j) / 2
void add_hop(PauliSum& h, int q, int i, int j, double coeff) {
  std::string xx(q, 'I'), yy(q, 'I');
  for (int k = i + 1; k < j; ++k) xx[k] = yy[k] = 'Z';
  xx[i] = xx[j] = 'X';
  yy[i] = yy[j] = 'Y';
  h.add(0.5 * coeff, xx);
  h.add(0.5 * coeff, yy);
}

// Merges repeated strings so the sum stays compact.
PauliSum simplify(const PauliSum& h) {
  PauliSum out(h.qubits);
  for (const auto& t : h.terms) {
    bool merged = false;
    for (auto& u : out.terms) {
      if (u.ops == t.ops) {
        u.coeff += t.coeff;
        merged = true;
        break;
      }
    }
    if (!merged) out.terms.push_back(t);
  }
  std::erase_if(out.terms, [](const qsim::PauliTerm& t) { return t.coeff == 0.0; });
  return out;
}

double smoothstep(double t) {
  t = std::clamp(t, 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

}  // namespace

double VqeProblem::energy(const Vec& theta) const {
  return qsim::expectation(qsim::execute(ansatz(theta)), hamiltonian);
}

Objective VqeProblem::objective(const qsim::NoiseSpec& noise, const qsim::EnergyOptions& options,
                                std::uint64_t seed) const {
  noise.validate();
  options.validate();
  const auto samples = static_cast<std::uint64_t>(options.n_samples);
  return {n_params, [noise, options, seed, samples, h = hamiltonian, make = ansatz](
                        const Vec& theta, std::uint64_t stream) {
            return qsim::estimate_energy(make(theta), h, noise, options, seed, stream * samples);
          }};
}

void append_pauli_rotation(Circuit& c, const std::string& ops, double theta) {
  std::vector<int> support;
  for (int k = 0; k < static_cast<int>(ops.size()); ++k) {
    if (ops[k] != 'I') support.push_back(k);
  }
  if (support.empty()) return;
  auto basis_in = [&](int k) {
    if (ops[k] == 'X') c.add(Gate::h(k));
    if (ops[k] == 'Y') c.add(Gate::rx(k, kPi / 2));
  };
  auto basis_out = [&](int k) {
    if (ops[k] == 'X') c.add(Gate::h(k));
    if (ops[k] == 'Y') c.add(Gate::rx(k, -kPi / 2));
  };
  for (int k : support) basis_in(k);
  for (std::size_t i = 0; i + 1 < support.size(); ++i) c.add(Gate::cnot(support[i], support[i + 1]));
  c.add(Gate::rz(support.back(), 2.0 * theta));
  for (std::size_t i = support.size() - 1; i > 0; --i) c.add(Gate::cnot(support[i - 1], support[i]));
  for (int k : support) basis_out(k);
}

VqeProblem make_toy_molecule() {
  // Two-qubit reduced molecular Hamiltonian near equilibrium bond length.
  constexpr double g[6] = {-0.4804, 0.3435, -0.4347, 0.5716, 0.0910, 0.0910};
  VqeProblem p;
  p.name = "toy_molecule";
  p.qubits = 2;
  p.n_params = 2;
  p.hamiltonian = PauliSum(2);
  p.hamiltonian.add(g[0], "II").add(g[1], "ZI").add(g[2], "IZ").add(g[3], "ZZ");
  p.hamiltonian.add(g[4], "XX").add(g[5], "YY");
  p.ansatz = [](const Vec& theta) {
    Circuit c(2);
    c.add(Gate::rx(0, kPi));
    append_pauli_rotation(c, "YX", theta[1]);
    append_pauli_rotation(c, "XY", theta[0]);
    return c;
  };
  p.default_box = Box::cube(2, -1.0, 1.0);
  p.exact_ground_energy = qsim::ground_energy(p.hamiltonian);
  const double t1 = golden_min(
      [&](double t) {
        Vec th(2);
        th << t, 0.0;
        return p.energy(th);
      },
      -1.0, 1.0);
  Vec opt(2);
  opt << t1, 0.0;
  p.known_optimum = opt;
  return p;
}

PauliSum hubbard_hamiltonian(int sites, double hopping, double coulomb, double mu) {
  if (sites < 2) throw ContractViolation("hubbard: need at least 2 sites");
  const int q = 2 * sites;
  PauliSum h(q);
  for (int spin = 0; spin < 2; ++spin) {
    for (int i = 0; i + 1 < sites; ++i) add_hop(h, q, i + sites * spin, i + 1 + sites * spin, -hopping);
  }
  // n_up n_dn = (I - Z_u - Z_d + Z_u Z_d) / 4 ;  n = (I - Z) / 2
  for (int i = 0; i < sites; ++i) {
    const int up = i, dn = i + sites;
    h.add(0.25 * coulomb, std::string(q, 'I'));
    h.add(-0.25 * coulomb, pauli_string(q, {{up, 'Z'}}));
    h.add(-0.25 * coulomb, pauli_string(q, {{dn, 'Z'}}));
    h.add(0.25 * coulomb, pauli_string(q, {{up, 'Z'}, {dn, 'Z'}}));
    for (int k : {up, dn}) {
      h.add(-0.5 * mu, std::string(q, 'I'));
      h.add(0.5 * mu, pauli_string(q, {{k, 'Z'}}));
    }
  }
  return simplify(h);
}

double sector_ground_energy(const PauliSum& h, int particles) {
  const qsim::CMat m = qsim::to_matrix(h);
  std::vector<Eigen::Index> basis;
  for (Eigen::Index b = 0; b < m.rows(); ++b) {
    if (std::popcount(static_cast<std::size_t>(b)) == particles) basis.push_back(b);
  }
  if (basis.empty()) throw ContractViolation("sector_ground_energy: empty sector");
  qsim::CMat sub(basis.size(), basis.size());
  for (std::size_t i = 0; i < basis.size(); ++i) {
    for (std::size_t j = 0; j < basis.size(); ++j) sub(i, j) = m(basis[i], basis[j]);
  }
  Eigen::SelfAdjointEigenSolver<qsim::CMat> es(sub, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

VqeProblem make_hubbard(const HubbardOptions& o) {
  if (o.sites != 2) throw ContractViolation("hubbard: only 2 sites are supported");
  if (o.electrons != 2) throw ContractViolation("hubbard: only 2 electrons are supported");
  if (o.layers < 1 || o.layers > 7) throw ContractViolation("hubbard: layers must lie in [1, 7]");
  const int sites = o.sites;
  const int q = 2 * sites;
  VqeProblem p;
  p.name = "hubbard";
  p.qubits = q;
  p.n_params = 2 * o.layers;
  p.hamiltonian = hubbard_hamiltonian(sites, o.hopping, o.coulomb, o.chemical_potential);

  // Hopping and on-site groups (identity dropped: global phase).
  std::vector<qsim::PauliTerm> hop, onsite;
  for (const auto& t : p.hamiltonian.terms) {
    if (t.ops.find_first_of("XY") != std::string::npos) {
      hop.push_back(t);
    } else if (t.ops.find('Z') != std::string::npos) {
      onsite.push_back(t);
    }
  }
  p.ansatz = [q, sites, hop, onsite, layers = o.layers](const Vec& theta) {
    Circuit c(q);
    // One electron per spin in the bonding orbital of the first two sites.
    for (int spin = 0; spin < 2; ++spin) {
      const int a = sites * spin, b = a + 1;
      c.add(Gate::ry(a, kPi / 2));
      c.add(Gate::cnot(a, b));
      c.add(Gate::rx(a, kPi));
    }
    for (int l = 0; l < layers; ++l) {
      for (const auto& t : onsite) append_pauli_rotation(c, t.ops, theta[2 * l] * t.coeff);
      for (const auto& t : hop) append_pauli_rotation(c, t.ops, theta[2 * l + 1] * t.coeff);
    }
    return c;
  };
  p.default_box = Box::cube(p.n_params, -kPi / 2, kPi / 2);
  p.exact_ground_energy = sector_ground_energy(p.hamiltonian, o.electrons);
  return p;
}

std::string_view to_string(SyntheticKind k) {
  switch (k) {
    case SyntheticKind::Sphere: return "sphere";
    case SyntheticKind::Rosenbrock: return "rosenbrock";
    case SyntheticKind::TwoWell: return "two_well";
    case SyntheticKind::ShallowMultiWell: return "shallow_multiwell";
  }
  return "?";
}

std::optional<SyntheticKind> synthetic_from_string(std::string_view s) {
  for (auto k : {SyntheticKind::Sphere, SyntheticKind::Rosenbrock, SyntheticKind::TwoWell,
                 SyntheticKind::ShallowMultiWell}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

Objective SyntheticProblem::objective(std::uint64_t seed) const {
  return {n_params, [f = f, sigma = noise_sigma_f, seed](const Vec& x, std::uint64_t stream) {
            const double v = f(x);
            if (sigma == 0.0) return v;
            auto g = substream(seed, stream);
            std::normal_distribution<double> z(0.0, 1.0);
            return v + sigma * z(g);
          }};
}

SyntheticProblem make_synthetic(SyntheticKind kind, int n, double sigma_f) {
  if (n < 1) throw ContractViolation("make_synthetic: n must be >= 1");
  if (!(sigma_f >= 0.0)) throw ContractViolation("make_synthetic: sigma_f must be >= 0");
  SyntheticProblem p;
  p.name = std::string(to_string(kind));
  p.n_params = n;
  p.noise_sigma_f = sigma_f;
  switch (kind) {
    case SyntheticKind::Sphere:
      p.f = [](const Vec& x) { return x.squaredNorm(); };
      p.default_box = Box::cube(n, -1.0, 1.0);
      p.known_optimum = Vec::Zero(n);
      break;
    case SyntheticKind::Rosenbrock:
      p.f = [](const Vec& x) {
        double s = 0.0;
        for (Eigen::Index i = 0; i + 1 < x.size(); ++i) {
          s += 100.0 * std::pow(x[i + 1] - x[i] * x[i], 2) + std::pow(1.0 - x[i], 2);
        }
        return x.size() == 1 ? std::pow(1.0 - x[0], 2) : s;
      };
      p.default_box = Box::cube(n, -2.0, 2.0);
      p.known_optimum = Vec::Ones(n);
      break;
    case SyntheticKind::TwoWell: {
      if (n != 2) throw ContractViolation("make_synthetic: TwoWell is two-dimensional");
      Vec g(2), l(2);
      g << kTwoWellGlobal[0], kTwoWellGlobal[1];
      l << kTwoWellLocal[0], kTwoWellLocal[1];
      // The local bowl (floor 0.05) takes over inside radius 0.3 of its
      // center; beyond 0.5 only the global bowl remains.
      p.f = [g, l](const Vec& x) {
        const double w = smoothstep(((x - l).norm() - 0.3) / 0.2);
        const double global = (x - g).squaredNorm();
        const double local = (x - l).squaredNorm() + 0.05;
        return w * global + (1.0 - w) * local;
      };
      p.default_box = Box::cube(2, -1.0, 1.0);
      p.known_optimum = g;
      break;
    }
    case SyntheticKind::ShallowMultiWell:
      p.f = [](const Vec& x) {
        double s = 0.0;
        for (double v : x) s += 0.1 * v * v + 0.05 * (1.0 - std::cos(3.0 * kPi * v));
        return s;
      };
      p.default_box = Box::cube(n, -1.0, 1.0);
      p.known_optimum = Vec::Zero(n);
      break;
  }
  p.known_minimum = p.f(p.known_optimum);
  return p;
}

}  // namespace noisyopt
