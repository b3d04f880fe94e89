#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "dense_oracle.hpp"
#include "noisyopt/qsim.hpp"

using namespace noisyopt;
using namespace noisyopt::qsim;
using namespace dense_oracle;

namespace {

CVec random_state(int q, std::mt19937_64& rng) {
  std::normal_distribution<double> z(0.0, 1.0);
  CVec v(1 << q);
  for (auto& a : v) a = Complex(z(rng), z(rng));
  return v.normalized();
}

}  // namespace

TEST(Gates, HadamardOnZero) {
  State s(1);
  apply_gate(s, Gate::h(0));
  EXPECT_NEAR(std::abs(s.amplitudes()[0] - 1.0 / std::sqrt(2.0)), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(s.amplitudes()[1] - 1.0 / std::sqrt(2.0)), 0.0, 1e-15);
}

TEST(Gates, RxPiFlipsWithPhase) {
  State s(1);
  apply_gate(s, Gate::rx(0, std::numbers::pi));
  EXPECT_NEAR(std::abs(s.amplitudes()[0]), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(s.amplitudes()[1] - (-I1)), 0.0, 1e-15);
}

TEST(Gates, CnotFlipsTargetWhenControlSet) {
  State s(2);
  apply_gate(s, Gate::rx(0, std::numbers::pi));  // qubit 0 -> |1>
  apply_gate(s, Gate::cnot(0, 1));
  EXPECT_NEAR(std::abs(s.amplitudes()[3]), 1.0, 1e-15);
  EXPECT_NEAR(std::abs(s.amplitudes()[1]), 0.0, 1e-15);
}

TEST(Gates, BadIndicesRejected) {
  State s(2);
  EXPECT_THROW(apply_gate(s, Gate::h(2)), ContractViolation);
  EXPECT_THROW(apply_gate(s, Gate::cnot(1, 1)), ContractViolation);
  Circuit c(2);
  EXPECT_THROW(c.add(Gate::rx(-1, 0.1)), ContractViolation);
  EXPECT_THROW(Circuit(13), ContractViolation);
  EXPECT_THROW(PauliSum(2).add(1.0, "XQ"), ContractViolation);
  EXPECT_THROW(PauliSum(2).add(1.0, "X"), ContractViolation);
}

TEST(Simulator, MatchesDenseComposition) {
  std::mt19937_64 rng(2024);
  for (int t = 0; t < 50; ++t) {
    const int q = 1 + t % 4;
    const Circuit c = random_circuit(q, 12, rng);
    CMat u = CMat::Identity(1 << q, 1 << q);
    for (const auto& g : c.gates) u = oracle_gate(g, q) * u;
    const CVec expect = u.col(0);
    const State s = execute(c);
    EXPECT_LE((s.amplitudes() - expect).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_NEAR(s.norm(), 1.0, 1e-10);

    const PauliSum h = random_pauli_sum(q, 4, rng);
    const double dense = (expect.adjoint() * oracle_hamiltonian(h) * expect)(0, 0).real();
    EXPECT_NEAR(expectation(s, h), dense, 1e-10);
  }
}

TEST(Simulator, NormPreservedUnderNoise) {
  std::mt19937_64 rng(8);
  NoiseSpec noise{0.02, 0.3, 0.5, 2.0};
  for (int t = 0; t < 20; ++t) {
    const Circuit c = random_circuit(3, 20, rng);
    EXPECT_NEAR(noisy_execute(c, noise, 1, t).norm(), 1.0, 1e-10);
  }
}

TEST(Expectation, Examples) {
  PauliSum z(1);
  z.add(1.0, "Z");
  EXPECT_DOUBLE_EQ(expectation(State(1), z), 1.0);
  State plus(1);
  apply_gate(plus, Gate::h(0));
  EXPECT_NEAR(expectation(plus, z), 0.0, 1e-15);
}

TEST(Expectation, RandomStateMatchesDense) {
  std::mt19937_64 rng(99);
  for (int t = 0; t < 20; ++t) {
    const State s(3, random_state(3, rng));
    const PauliSum h = random_pauli_sum(3, 4, rng);
    const CVec& a = s.amplitudes();
    const Complex dense = (a.adjoint() * oracle_hamiltonian(h) * a)(0, 0);
    EXPECT_NEAR(expectation(s, h), dense.real(), 1e-10);
    EXPECT_NEAR(dense.imag(), 0.0, 1e-10);
    EXPECT_LE((to_matrix(h) - oracle_hamiltonian(h)).cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST(Expectation, GroundEnergyBoundsEveryState) {
  std::mt19937_64 rng(4);
  const PauliSum h = random_pauli_sum(3, 6, rng);
  const double e0 = ground_energy(h);
  for (int t = 0; t < 50; ++t) EXPECT_GE(expectation(State(3, random_state(3, rng)), h), e0 - 1e-12);
}

TEST(Noise, ZeroNoiseIsBitwiseNoiseless) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 10; ++t) {
    const Circuit c = random_circuit(3, 15, rng);
    const State a = execute(c);
    const State b = noisy_execute(c, {}, 5, t);
    for (Eigen::Index i = 0; i < a.amplitudes().size(); ++i) {
      EXPECT_EQ(a.amplitudes()[i], b.amplitudes()[i]);
    }
  }
}

TEST(Noise, CoherentOnlyIsDeterministic) {
  std::mt19937_64 rng(2);
  const Circuit c = random_circuit(3, 15, rng);
  NoiseSpec noise;
  noise.mu = 0.05;
  const State a = noisy_execute(c, noise, 1, 0);
  for (std::uint64_t stream : {1u, 17u, 12345u}) {
    const State b = noisy_execute(c, noise, 99, stream);
    EXPECT_EQ(a.amplitudes(), b.amplitudes());
  }
}

TEST(Noise, CoherentOverRotationAddsToAngle) {
  for (double theta : {0.0, 0.4, -1.3, 2.9}) {
    Circuit c(1);
    c.add(Gate::rx(0, theta));
    NoiseSpec noise;
    noise.mu = 0.05;
    const CVec got = noisy_execute(c, noise, 3, 3).amplitudes();
    // Oracle: the 2x2 product applied to |0>.
    const CMat u = oracle_gate(Gate::rx(0, theta + 0.05), 1);
    EXPECT_LE((got - u.col(0)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Noise, StochasticDependsOnStream) {
  Circuit c(2);
  c.add(Gate::h(0)).add(Gate::cnot(0, 1));
  NoiseSpec noise;
  noise.sigma = 0.1;
  EXPECT_EQ(noisy_execute(c, noise, 1, 4).amplitudes(), noisy_execute(c, noise, 1, 4).amplitudes());
  EXPECT_NE(noisy_execute(c, noise, 1, 4).amplitudes(), noisy_execute(c, noise, 1, 5).amplitudes());
}

TEST(Noise, Validation) {
  NoiseSpec n;
  n.sigma = -1.0;
  EXPECT_THROW(n.validate(), ContractViolation);
  n = {};
  n.cnot_factor = 0.5;
  EXPECT_THROW(n.validate(), ContractViolation);
}

TEST(Energy, ZeroSigmaEqualsNoiseless) {
  std::mt19937_64 rng(6);
  const Circuit c = random_circuit(2, 8, rng);
  const PauliSum h = random_pauli_sum(2, 3, rng);
  const double exact = expectation(execute(c), h);
  for (int samples : {1, 7, 25}) {
    EnergyOptions o;
    o.n_samples = samples;
    EXPECT_EQ(estimate_energy(c, h, {}, o, 1, 0), exact);
  }
}

TEST(Energy, NoisyEstimatesStayAboveGround) {
  std::mt19937_64 rng(7);
  const PauliSum h = random_pauli_sum(3, 5, rng);
  const double e0 = ground_energy(h);
  NoiseSpec noise;
  noise.sigma = 0.2;
  for (int t = 0; t < 10; ++t) {
    const Circuit c = random_circuit(3, 10, rng);
    EXPECT_GE(estimate_energy(c, h, noise, {}, t, 100 * t), e0 - 1e-9);
  }
}

TEST(Energy, ThreadCountDoesNotChangeResult) {
  std::mt19937_64 rng(10);
  const Circuit c = random_circuit(4, 20, rng);
  const PauliSum h = random_pauli_sum(4, 5, rng);
  NoiseSpec noise;
  noise.sigma = 0.05;
  EnergyOptions serial, parallel;
  parallel.threads = 4;
  EXPECT_EQ(estimate_energy(c, h, noise, serial, 3, 50), estimate_energy(c, h, noise, parallel, 3, 50));
}

TEST(Energy, ShotSamplingIsUnbiased) {
  std::mt19937_64 rng(12);
  const Circuit c = random_circuit(2, 8, rng);
  PauliSum h(2);
  h.add(0.7, "XY").add(-0.4, "ZI").add(0.2, "II").add(0.5, "YZ");
  const double exact = expectation(execute(c), h);
  EnergyOptions o;
  o.n_samples = 4;
  o.shots = 20000;
  const double est = estimate_energy(c, h, {}, o, 8, 0);
  // Per-term standard error <= coeff / sqrt(shots * samples).
  EXPECT_NEAR(est, exact, 5.0 * 1.8 / std::sqrt(80000.0));
}

TEST(TextFormat, CircuitRoundTrip) {
  std::mt19937_64 rng(13);
  const Circuit c = random_circuit(4, 30, rng);
  const Circuit back = parse_circuit(format_circuit(c));
  ASSERT_EQ(back.qubits, c.qubits);
  ASSERT_EQ(back.gates.size(), c.gates.size());
  for (std::size_t i = 0; i < c.gates.size(); ++i) {
    EXPECT_EQ(back.gates[i].kind, c.gates[i].kind);
    EXPECT_EQ(back.gates[i].target, c.gates[i].target);
    EXPECT_EQ(back.gates[i].second, c.gates[i].second);
    EXPECT_EQ(back.gates[i].angle, c.gates[i].angle);
  }
}

TEST(TextFormat, CircuitWithCommentsAndInferredWidth) {
  const Circuit c = parse_circuit("# bell pair\nH 0   # superpose\n\nCNOT 0 2\nRX 1 1.5708\n");
  EXPECT_EQ(c.qubits, 3);
  ASSERT_EQ(c.gates.size(), 3u);
  EXPECT_EQ(c.gates[2].kind, GateKind::RX);
  EXPECT_DOUBLE_EQ(c.gates[2].angle, 1.5708);
}

TEST(TextFormat, CircuitErrorsCarryLineNumbers) {
  auto line_of = [](const char* text) {
    try {
      parse_circuit(text);
    } catch (const ParseError& e) {
      return e.line();
    }
    return std::size_t{0};
  };
  EXPECT_EQ(line_of("H 0\nFOO 1\n"), 2u);
  EXPECT_EQ(line_of("H 0\n\nRX 0\n"), 3u);
  EXPECT_EQ(line_of("CNOT 1 1\n"), 1u);
  EXPECT_EQ(line_of("RY 0 abc\n"), 1u);
  EXPECT_EQ(line_of("QUBITS 2\nH 0\nH 3\n"), 3u);
}

TEST(TextFormat, PauliSumRoundTripAndErrors) {
  const PauliSum h = parse_pauli_sum("# toy\n0.5 XZIY\n-0.25 IIII\n1e-3 ZZZZ\n");
  EXPECT_EQ(h.qubits, 4);
  ASSERT_EQ(h.terms.size(), 3u);
  const PauliSum back = parse_pauli_sum(format_pauli_sum(h));
  for (std::size_t i = 0; i < h.terms.size(); ++i) {
    EXPECT_EQ(back.terms[i].coeff, h.terms[i].coeff);
    EXPECT_EQ(back.terms[i].ops, h.terms[i].ops);
  }
  EXPECT_THROW(parse_pauli_sum("0.5 XQ\n"), ParseError);
  EXPECT_THROW(parse_pauli_sum("0.5 XX\n1.0 X\n"), ParseError);
  EXPECT_THROW(parse_pauli_sum("abc XX\n"), ParseError);
  EXPECT_THROW(parse_pauli_sum("# nothing\n"), ParseError);
}
