#pragma once

#include <functional>
#include <optional>
#include <string>

#include "noisyopt/core.hpp"
#include "noisyopt/qsim.hpp"

namespace noisyopt {

struct VqeProblem {
  std::string name;
  int qubits = 0;
  int n_params = 0;
  qsim::PauliSum hamiltonian{1};
  std::function<qsim::Circuit(const Vec&)> ansatz;
  Box default_box = Box::cube(1, 0, 1);
  double exact_ground_energy = 0.0;
  std::optional<Vec> known_optimum;

  /// Noiseless energy of the ansatz state.
  double energy(const Vec& theta) const;

  /// Objective whose value at stream s is estimate_energy with base stream
  /// s * n_samples, so distinct evaluations never share noise draws.
  Objective objective(const qsim::NoiseSpec& noise, const qsim::EnergyOptions& options,
                      std::uint64_t seed) const;
};

/// Two-qubit molecule surrogate: H = g0 I + g1 Z0 + g2 Z1 + g3 Z0Z1 + g4 X0X1
/// + g5 Y0Y1, ansatz X on qubit 0 followed by exp(-i t1 X0Y1) exp(-i t2 Y0X1).
VqeProblem make_toy_molecule();

struct HubbardOptions {
  int sites = 2;
  int electrons = 2;
  int layers = 3;  // ansatz parameters = 2 * layers
  double hopping = 1.0;
  double coulomb = 2.0;
  double chemical_potential = 0.0;
};

/// Fermi-Hubbard chain, Jordan-Wigner mapped with qubit = site + sites * spin.
/// The ansatz starts from the non-interacting bonding state and alternates
/// hopping and on-site evolution layers. Only sites = 2 is supported.
VqeProblem make_hubbard(const HubbardOptions& options = {});

/// Jordan-Wigner Hubbard Hamiltonian (any chain length).
qsim::PauliSum hubbard_hamiltonian(int sites, double hopping, double coulomb,
                                   double chemical_potential);

/// Lowest eigenvalue of h restricted to basis states with `particles` set bits.
double sector_ground_energy(const qsim::PauliSum& h, int particles);

/// exp(-i theta P) for a Pauli string P, compiled to basis changes, a CNOT
/// ladder and one RZ. Identity strings add nothing.
void append_pauli_rotation(qsim::Circuit& c, const std::string& ops, double theta);

enum class SyntheticKind { Sphere, Rosenbrock, TwoWell, ShallowMultiWell };

std::string_view to_string(SyntheticKind k);
std::optional<SyntheticKind> synthetic_from_string(std::string_view s);

struct SyntheticProblem {
  std::string name;
  int n_params = 0;
  std::function<double(const Vec&)> f;
  double noise_sigma_f = 0.0;
  Box default_box = Box::cube(1, 0, 1);
  Vec known_optimum;
  double known_minimum = 0.0;

  /// f(x) + noise_sigma_f * z with z drawn from substream(seed, stream).
  Objective objective(std::uint64_t seed) const;
};

/// TwoWell is two-dimensional; other kinds accept any n >= 1.
SyntheticProblem make_synthetic(SyntheticKind kind, int n, double sigma_f);

/// TwoWell landmarks.
inline constexpr double kTwoWellGlobal[2] = {0.00012, 0.04};
inline constexpr double kTwoWellLocal[2] = {0.5, -0.5};

}  // namespace noisyopt
