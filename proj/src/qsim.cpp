#include "noisyopt/qsim.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>
#include <thread>

namespace noisyopt::qsim {
namespace {

using Eigen::Vector3d;

const Vector3d kX{1.0, 0.0, 0.0};
const Vector3d kY{0.0, 1.0, 0.0};
const Vector3d kZ{0.0, 0.0, 1.0};

void check_qubit(int q, int qubits) {
  if (q < 0 || q >= qubits) {
    throw ContractViolation("qsim: qubit index " + std::to_string(q) + " out of range");
  }
}

void apply_cnot(State& s, int control, int target) {
  CVec& a = s.amplitudes();
  const std::size_t cbit = std::size_t{1} << control;
  const std::size_t tbit = std::size_t{1} << target;
  for (std::size_t i = 0; i < static_cast<std::size_t>(a.size()); ++i) {
    if ((i & cbit) && !(i & tbit)) std::swap(a[i], a[i | tbit]);
  }
}

struct TermMasks {
  std::size_t flip = 0;   // X or Y
  std::size_t phase = 0;  // Z or Y
  int n_y = 0;
};

TermMasks masks_of(const std::string& ops) {
  TermMasks m;
  for (std::size_t k = 0; k < ops.size(); ++k) {
    const std::size_t bit = std::size_t{1} << k;
    switch (ops[k]) {
      case 'X': m.flip |= bit; break;
      case 'Y': m.flip |= bit; m.phase |= bit; ++m.n_y; break;
      case 'Z': m.phase |= bit; break;
      default: break;
    }
  }
  return m;
}

Complex term_expectation(const CVec& a, const TermMasks& m) {
  // P|b> = i^{n_y} (-1)^{|b & phase|} |b ^ flip>
  Complex acc = 0.0;
  for (std::size_t b = 0; b < static_cast<std::size_t>(a.size()); ++b) {
    const double sign = (std::popcount(b & m.phase) & 1) ? -1.0 : 1.0;
    acc += std::conj(a[b ^ m.flip]) * (sign * a[b]);
  }
  static const Complex ipow[4] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
  return ipow[m.n_y % 4] * acc;
}

// Estimates a single term from `shots` measurements in its eigenbasis.
double sampled_term(const State& s, const PauliTerm& t, int shots, std::mt19937_64& rng) {
  State rotated = s;
  std::size_t support = 0;
  for (std::size_t k = 0; k < t.ops.size(); ++k) {
    const int q = static_cast<int>(k);
    if (t.ops[k] == 'I') continue;
    support |= std::size_t{1} << k;
    if (t.ops[k] == 'X') apply_gate(rotated, Gate::h(q));
    if (t.ops[k] == 'Y') apply_gate(rotated, Gate::rx(q, std::numbers::pi / 2));
  }
  if (support == 0) return t.coeff;
  const CVec& a = rotated.amplitudes();
  std::vector<double> prob(a.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) prob[i] = std::norm(a[i]);
  std::discrete_distribution<std::size_t> draw(prob.begin(), prob.end());
  long parity_sum = 0;
  for (int k = 0; k < shots; ++k) {
    parity_sum += (std::popcount(draw(rng) & support) & 1) ? -1 : 1;
  }
  return t.coeff * static_cast<double>(parity_sum) / shots;
}

double sampled_energy(const State& s, const PauliSum& h, int shots, std::mt19937_64& rng) {
  double e = 0.0;
  for (const auto& t : h.terms) e += sampled_term(s, t, shots, rng);
  return e;
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

// Calls fn(line_number, content) for every non-blank line with comments removed.
template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (!line.empty()) fn(line_no, line);
  }
}

int parse_int(std::string_view tok, std::size_t line) {
  int v = 0;
  const auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || p != tok.data() + tok.size()) {
    throw ParseError(line, "expected an integer, got '" + std::string(tok) + "'");
  }
  return v;
}

double parse_double(std::string_view tok, std::size_t line) {
  const std::string s(tok);
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(v)) {
    throw ParseError(line, "expected a number, got '" + s + "'");
  }
  return v;
}

std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

ParseError::ParseError(std::size_t line, const std::string& what)
    : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

Circuit::Circuit(int q) : qubits(q) {
  if (q < 1 || q > kMaxQubits) {
    throw ContractViolation("qsim: qubit count must lie in [1, " + std::to_string(kMaxQubits) + "]");
  }
}

Circuit& Circuit::add(const Gate& g) {
  check_qubit(g.target, qubits);
  if (g.kind == GateKind::CNOT) {
    check_qubit(g.second, qubits);
    if (g.second == g.target) throw ContractViolation("qsim: CNOT control equals target");
  }
  gates.push_back(g);
  return *this;
}

State::State(int qubits) : qubits_(qubits) {
  if (qubits < 1 || qubits > kMaxQubits) throw ContractViolation("qsim: bad qubit count");
  amp_ = CVec::Zero(std::size_t{1} << qubits);
  amp_[0] = 1.0;
}

State::State(int qubits, CVec amplitudes) : qubits_(qubits), amp_(std::move(amplitudes)) {
  if (qubits < 1 || qubits > kMaxQubits ||
      amp_.size() != static_cast<Eigen::Index>(std::size_t{1} << qubits)) {
    throw ContractViolation("qsim: amplitude count does not match qubit count");
  }
}

Eigen::Matrix2cd axis_rotation(const Vector3d& n, double angle) {
  const double c = std::cos(0.5 * angle);
  const double s = std::sin(0.5 * angle);
  const Complex i(0.0, 1.0);
  Eigen::Matrix2cd u;
  u << c - i * s * n.z(), -i * s * n.x() - s * n.y(),
       -i * s * n.x() + s * n.y(), c + i * s * n.z();
  return u;
}

Eigen::Matrix2cd gate_matrix(const Gate& g) {
  switch (g.kind) {
    case GateKind::RX: return axis_rotation(kX, g.angle);
    case GateKind::RY: return axis_rotation(kY, g.angle);
    case GateKind::RZ: return axis_rotation(kZ, g.angle);
    case GateKind::H: {
      const double r = 1.0 / std::sqrt(2.0);
      Eigen::Matrix2cd u;
      u << r, r, r, -r;
      return u;
    }
    case GateKind::CNOT: break;
  }
  throw ContractViolation("qsim: CNOT has no single-qubit matrix");
}

void apply_single(State& s, int qubit, const Eigen::Matrix2cd& u) {
  check_qubit(qubit, s.qubits());
  CVec& a = s.amplitudes();
  const std::size_t bit = std::size_t{1} << qubit;
  for (std::size_t i = 0; i < static_cast<std::size_t>(a.size()); ++i) {
    if (i & bit) continue;
    const Complex a0 = a[i];
    const Complex a1 = a[i | bit];
    a[i] = u(0, 0) * a0 + u(0, 1) * a1;
    a[i | bit] = u(1, 0) * a0 + u(1, 1) * a1;
  }
}

void apply_gate(State& s, const Gate& g) {
  if (g.kind == GateKind::CNOT) {
    check_qubit(g.target, s.qubits());
    check_qubit(g.second, s.qubits());
    if (g.target == g.second) throw ContractViolation("qsim: CNOT control equals target");
    apply_cnot(s, g.target, g.second);
    return;
  }
  apply_single(s, g.target, gate_matrix(g));
}

State execute(const Circuit& c) {
  State s(c.qubits);
  for (const auto& g : c.gates) apply_gate(s, g);
  return s;
}

void NoiseSpec::validate() const {
  if (!(sigma >= 0.0)) throw ContractViolation("NoiseSpec: sigma must be >= 0");
  if (!(ortho_fraction >= 0.0)) throw ContractViolation("NoiseSpec: ortho_fraction must be >= 0");
  if (!(cnot_factor >= 1.0)) throw ContractViolation("NoiseSpec: cnot_factor must be >= 1");
  if (!std::isfinite(mu)) throw ContractViolation("NoiseSpec: mu must be finite");
}

State noisy_execute(const Circuit& c, const NoiseSpec& noise, std::uint64_t seed,
                    std::uint64_t stream) {
  noise.validate();
  auto rng = substream(seed, stream);
  std::normal_distribution<double> z(0.0, 1.0);
  State s(c.qubits);
  const Vector3d h_axis = Vector3d(1.0, 0.0, 1.0).normalized();

  // Draws are taken for every noisy gate so the stream layout does not depend
  // on the noise level. Exact-zero angles are skipped to keep the zero-noise
  // path bitwise identical to execute().
  auto perturb = [&](int qubit, const Vector3d& axis, const Vector3d& ortho, double scale) {
    const double e = scale * (noise.mu + noise.sigma * z(rng));
    const double e_perp = scale * noise.ortho_fraction * noise.sigma * z(rng);
    if (e != 0.0) apply_single(s, qubit, axis_rotation(axis, e));
    if (e_perp != 0.0) apply_single(s, qubit, axis_rotation(ortho, e_perp));
  };

  for (const auto& g : c.gates) {
    apply_gate(s, g);
    switch (g.kind) {
      case GateKind::RX: perturb(g.target, kX, kY, 1.0); break;
      case GateKind::RY: perturb(g.target, kY, kX, 1.0); break;
      case GateKind::H: perturb(g.target, h_axis, kY, 1.0); break;
      case GateKind::CNOT:
        perturb(g.target, kX, kY, noise.cnot_factor);
        perturb(g.second, kX, kY, noise.cnot_factor);
        break;
      case GateKind::RZ: break;
    }
  }
  return s;
}

PauliSum::PauliSum(int q) : qubits(q) {
  if (q < 1 || q > kMaxQubits) throw ContractViolation("qsim: bad qubit count");
}

PauliSum& PauliSum::add(double coeff, std::string ops) {
  if (static_cast<int>(ops.size()) != qubits) {
    throw ContractViolation("PauliSum: string '" + ops + "' does not cover " +
                            std::to_string(qubits) + " qubits");
  }
  for (char ch : ops) {
    if (ch != 'I' && ch != 'X' && ch != 'Y' && ch != 'Z') {
      throw ContractViolation("PauliSum: bad operator '" + std::string(1, ch) + "'");
    }
  }
  if (!std::isfinite(coeff)) throw ContractViolation("PauliSum: coefficient must be finite");
  terms.push_back({coeff, std::move(ops)});
  return *this;
}

double expectation(const State& s, const PauliSum& h) {
  if (s.qubits() != h.qubits) throw ContractViolation("expectation: qubit count mismatch");
  double e = 0.0;
  for (const auto& t : h.terms) e += t.coeff * term_expectation(s.amplitudes(), masks_of(t.ops)).real();
  return e;
}

CMat to_matrix(const PauliSum& h) {
  const std::size_t dim = std::size_t{1} << h.qubits;
  CMat m = CMat::Zero(dim, dim);
  static const Complex ipow[4] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
  for (const auto& t : h.terms) {
    const auto mk = masks_of(t.ops);
    for (std::size_t b = 0; b < dim; ++b) {
      const double sign = (std::popcount(b & mk.phase) & 1) ? -1.0 : 1.0;
      m(b ^ mk.flip, b) += t.coeff * sign * ipow[mk.n_y % 4];
    }
  }
  return m;
}

double ground_energy(const PauliSum& h) {
  Eigen::SelfAdjointEigenSolver<CMat> es(to_matrix(h), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

void EnergyOptions::validate() const {
  if (n_samples < 1) throw ContractViolation("EnergyOptions: n_samples must be >= 1");
  if (shots < 0) throw ContractViolation("EnergyOptions: shots must be >= 0");
  if (threads < 1) throw ContractViolation("EnergyOptions: threads must be >= 1");
}

double estimate_energy(const Circuit& c, const PauliSum& h, const NoiseSpec& noise,
                       const EnergyOptions& options, std::uint64_t seed,
                       std::uint64_t base_stream) {
  options.validate();
  noise.validate();
  if (c.qubits != h.qubits) throw ContractViolation("estimate_energy: qubit count mismatch");

  auto sample = [&](std::uint64_t k) {
    const State s = noisy_execute(c, noise, seed, base_stream + k);
    if (options.shots == 0) return expectation(s, h);
    auto rng = substream(mix_seed(seed, 0x5407ULL), base_stream + k);
    return sampled_energy(s, h, options.shots, rng);
  };
  if (noise.sigma == 0.0 && options.shots == 0) return sample(0);

  const std::size_t n = static_cast<std::size_t>(options.n_samples);
  std::vector<double> values(n);
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(options.threads));
  if (workers <= 1) {
    for (std::size_t k = 0; k < n; ++k) values[k] = sample(k);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t k = w; k < n; k += workers) values[k] = sample(k);
      });
    }
  }
  double total = 0.0;
  for (double v : values) total += v;
  return total / static_cast<double>(n);
}

Circuit parse_circuit(std::string_view text) {
  std::optional<int> declared;
  struct Pending {
    Gate gate;
    std::size_t line;
  };
  std::vector<Pending> pending;
  int max_qubit = -1;
  for_each_line(text, [&](std::size_t line, std::string_view content) {
    const auto tok = split_ws(content);
    const std::string_view op = tok[0];
    auto need = [&](std::size_t count) {
      if (tok.size() != count) {
        throw ParseError(line, std::string(op) + " expects " + std::to_string(count - 1) +
                                   " argument(s)");
      }
    };
    if (op == "QUBITS") {
      need(2);
      if (declared || !pending.empty()) throw ParseError(line, "QUBITS must come first");
      declared = parse_int(tok[1], line);
      if (*declared < 1 || *declared > kMaxQubits) throw ParseError(line, "qubit count out of range");
      return;
    }
    Gate g;
    if (op == "RX" || op == "RY" || op == "RZ") {
      need(3);
      g = op == "RX" ? Gate::rx(0, 0) : op == "RY" ? Gate::ry(0, 0) : Gate::rz(0, 0);
      g.target = parse_int(tok[1], line);
      g.angle = parse_double(tok[2], line);
    } else if (op == "H") {
      need(2);
      g = Gate::h(parse_int(tok[1], line));
    } else if (op == "CNOT") {
      need(3);
      g = Gate::cnot(parse_int(tok[1], line), parse_int(tok[2], line));
      if (g.target == g.second) throw ParseError(line, "CNOT control equals target");
      max_qubit = std::max(max_qubit, g.second);
    } else {
      throw ParseError(line, "unknown gate '" + std::string(op) + "'");
    }
    if (g.target < 0 || g.second < -1 || (g.kind == GateKind::CNOT && g.second < 0)) {
      throw ParseError(line, "negative qubit index");
    }
    max_qubit = std::max(max_qubit, g.target);
    pending.push_back({g, line});
  });
  const int q = declared.value_or(std::max(1, max_qubit + 1));
  if (q > kMaxQubits) throw ParseError(1, "too many qubits");
  Circuit c(q);
  for (const auto& p : pending) {
    try {
      c.add(p.gate);
    } catch (const ContractViolation& e) {
      throw ParseError(p.line, e.what());
    }
  }
  return c;
}

std::string format_circuit(const Circuit& c) {
  std::ostringstream out;
  out << "QUBITS " << c.qubits << '\n';
  for (const auto& g : c.gates) {
    switch (g.kind) {
      case GateKind::RX: out << "RX " << g.target << ' ' << fmt17(g.angle) << '\n'; break;
      case GateKind::RY: out << "RY " << g.target << ' ' << fmt17(g.angle) << '\n'; break;
      case GateKind::RZ: out << "RZ " << g.target << ' ' << fmt17(g.angle) << '\n'; break;
      case GateKind::H: out << "H " << g.target << '\n'; break;
      case GateKind::CNOT: out << "CNOT " << g.target << ' ' << g.second << '\n'; break;
    }
  }
  return out.str();
}

PauliSum parse_pauli_sum(std::string_view text) {
  std::vector<std::pair<double, std::string>> raw;
  for_each_line(text, [&](std::size_t line, std::string_view content) {
    const auto tok = split_ws(content);
    if (tok.size() != 2) throw ParseError(line, "expected '<coefficient> <pauli string>'");
    const double coeff = parse_double(tok[0], line);
    std::string ops(tok[1]);
    for (char ch : ops) {
      if (ch != 'I' && ch != 'X' && ch != 'Y' && ch != 'Z') {
        throw ParseError(line, "bad Pauli operator '" + std::string(1, ch) + "'");
      }
    }
    if (!raw.empty() && ops.size() != raw.front().second.size()) {
      throw ParseError(line, "Pauli string length differs from earlier terms");
    }
    if (ops.empty() || ops.size() > static_cast<std::size_t>(kMaxQubits)) {
      throw ParseError(line, "Pauli string length out of range");
    }
    raw.emplace_back(coeff, std::move(ops));
  });
  if (raw.empty()) throw ParseError(1, "no terms");
  PauliSum h(static_cast<int>(raw.front().second.size()));
  for (auto& [coeff, ops] : raw) h.add(coeff, std::move(ops));
  return h;
}

std::string format_pauli_sum(const PauliSum& h) {
  std::string out;
  for (const auto& t : h.terms) out += fmt17(t.coeff) + ' ' + t.ops + '\n';
  return out;
}

}  // namespace noisyopt::qsim
