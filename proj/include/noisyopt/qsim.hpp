#pragma once

#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "noisyopt/core.hpp"

namespace noisyopt::qsim {

using Complex = std::complex<double>;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;

constexpr int kMaxQubits = 12;

/// Malformed circuit or Hamiltonian text; `line` is 1-based.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

enum class GateKind { RX, RY, RZ, H, CNOT };

struct Gate {
  GateKind kind = GateKind::H;
  int target = 0;   // control qubit for CNOT
  int second = -1;  // CNOT target
  double angle = 0.0;

  static Gate rx(int q, double theta) { return {GateKind::RX, q, -1, theta}; }
  static Gate ry(int q, double theta) { return {GateKind::RY, q, -1, theta}; }
  static Gate rz(int q, double theta) { return {GateKind::RZ, q, -1, theta}; }
  static Gate h(int q) { return {GateKind::H, q, -1, 0.0}; }
  static Gate cnot(int control, int target) { return {GateKind::CNOT, control, target, 0.0}; }
};

struct Circuit {
  int qubits = 0;
  std::vector<Gate> gates;

  explicit Circuit(int qubits);
  /// Checks indices against `qubits` and CNOT distinctness.
  Circuit& add(const Gate& g);
};

/// Little-endian statevector: bit k of an index is qubit k.
class State {
 public:
  explicit State(int qubits);  // |0...0>
  State(int qubits, CVec amplitudes);

  int qubits() const { return qubits_; }
  const CVec& amplitudes() const { return amp_; }
  CVec& amplitudes() { return amp_; }
  double norm() const { return amp_.norm(); }

 private:
  int qubits_;
  CVec amp_;
};

/// exp(-i angle/2 * (n . sigma)) for a unit axis n.
Eigen::Matrix2cd axis_rotation(const Eigen::Vector3d& axis, double angle);
Eigen::Matrix2cd gate_matrix(const Gate& g);  // single-qubit gates only

void apply_single(State& s, int qubit, const Eigen::Matrix2cd& u);
void apply_gate(State& s, const Gate& g);
State execute(const Circuit& c);

struct NoiseSpec {
  double mu = 0.0;
  double sigma = 0.0;
  double ortho_fraction = 0.1;
  double cnot_factor = 2.0;

  void validate() const;
};

/// Runs the circuit with a same-axis N(mu, sigma^2) and an orthogonal-axis
/// N(0, (ortho_fraction*sigma)^2) rotation after every non-RZ gate. CNOT
/// noise hits control and target with angles scaled by cnot_factor. Draws
/// come from substream(seed, stream).
State noisy_execute(const Circuit& c, const NoiseSpec& noise, std::uint64_t seed,
                    std::uint64_t stream);

struct PauliTerm {
  double coeff = 0.0;
  std::string ops;  // ops[k] in {I,X,Y,Z} acts on qubit k
};

struct PauliSum {
  int qubits = 0;
  std::vector<PauliTerm> terms;

  explicit PauliSum(int qubits);
  PauliSum& add(double coeff, std::string ops);
};

/// <psi|H|psi>; the imaginary residue is dropped.
double expectation(const State& s, const PauliSum& h);
/// Dense 2^q x 2^q matrix of the sum.
CMat to_matrix(const PauliSum& h);
/// Smallest eigenvalue of the dense matrix.
double ground_energy(const PauliSum& h);

struct EnergyOptions {
  int n_samples = 25;
  /// 0 evaluates exact expectations; otherwise each term is estimated from
  /// this many simulated measurements in its eigenbasis.
  int shots = 0;
  int threads = 1;

  void validate() const;
};

/// Mean over k < n_samples of the energy of noisy_execute(c, noise, seed,
/// base_stream + k). Callers making repeated estimates should space
/// base_stream by n_samples. A noise spec with sigma = 0 is deterministic and
/// runs once (shots aside).
double estimate_energy(const Circuit& c, const PauliSum& h, const NoiseSpec& noise,
                       const EnergyOptions& options, std::uint64_t seed,
                       std::uint64_t base_stream);

// Text formats ---------------------------------------------------------------

/// One gate per line: `RX 0 1.5708`, `H 1`, `CNOT 0 1`; `#` starts a comment.
/// A `QUBITS n` line may precede the gates; otherwise the count is inferred.
Circuit parse_circuit(std::string_view text);
std::string format_circuit(const Circuit& c);

/// One term per line: `0.5 XZIY`.
PauliSum parse_pauli_sum(std::string_view text);
std::string format_pauli_sum(const PauliSum& h);

}  // namespace noisyopt::qsim
