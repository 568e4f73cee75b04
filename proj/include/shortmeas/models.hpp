#pragma once

// Hamiltonians and Lindblad generators of the probe / mediator / system model.
// hbar = 1 and frequencies are in units of the probe coupling g_p.

#include <cmath>
#include <vector>

#include "shortmeas/diagnostics.hpp"
#include "shortmeas/hilbert.hpp"

namespace shortmeas {

struct ModelParams {
  double omega_p = 100.0;  // probe transition frequency
  double omega_s = 100.0;  // system transition frequency
  double omega_a = 100.0;  // mediator frequency
  double g_p = 1.0;
  double g_s = 1.0;
  double bath_rate = 0.0;        // gamma, mediator-bath coupling
  double collective_rate = 0.0;  // Gamma, shared-reservoir decay of both qubits
  double mediator_nbar = 0.0;    // nbar_a, thermal occupation of the initial mediator state
  double bath_nbar = 0.0;        // nbar_b
  double probe_phase = 0.0;      // phi of |+_phi>
  int cutoff = 30;

  /// delta = omega_p - omega_a.
  double detuning() const { return omega_p - omega_a; }

  /// Sets omega_a so that detuning() == delta.
  ModelParams& set_detuning(double delta) {
    omega_a = omega_p - delta;
    return *this;
  }

  void validate() const {
    if (!(g_p > 0.0)) throw InvalidArgument(fmt::format("g_p must be positive, got {}", g_p));
    if (bath_rate < 0.0) throw InvalidArgument(fmt::format("bath rate gamma must be >= 0, got {}", bath_rate));
    if (collective_rate < 0.0)
      throw InvalidArgument(fmt::format("collective rate Gamma must be >= 0, got {}", collective_rate));
    if (mediator_nbar < 0.0) throw InvalidArgument(fmt::format("nbar_a must be >= 0, got {}", mediator_nbar));
    if (bath_nbar < 0.0) throw InvalidArgument(fmt::format("nbar_b must be >= 0, got {}", bath_nbar));
    if (cutoff < 2) throw InvalidArgument(fmt::format("Fock cutoff must be >= 2, got {}", cutoff));
  }
};

struct IonParams {
  double rabi = 0.002;             // Omega
  double trap_frequency = 1.0;     // nu
  double lamb_dicke = 0.05;        // eta
  double laser_detuning = -1.0;    // delta_L = omega - omega_0
  double laser_phase = 0.0;        // phi_L
  int cutoff = 10;
  double lamb_dicke_threshold = 0.3;

  void validate() const {
    if (!(lamb_dicke > 0.0)) throw InvalidArgument(fmt::format("Lamb-Dicke parameter must be positive, got {}", lamb_dicke));
    if (!(trap_frequency > 0.0)) throw InvalidArgument(fmt::format("trap frequency must be positive, got {}", trap_frequency));
    if (cutoff < 2) throw InvalidArgument(fmt::format("Fock cutoff must be >= 2, got {}", cutoff));
  }

  /// eta * sqrt(<n> + 1) below the configured threshold.
  bool lamb_dicke_regime(double mean_n) const {
    return lamb_dicke * std::sqrt(mean_n + 1.0) < lamb_dicke_threshold;
  }

  double sideband_coupling() const { return lamb_dicke * rabi / 2.0; }
};

struct Jump {
  Operator op;
  double rate;
};

/// Dissipator D(rho) = sum_k rate_k (J rho J^dag - {J^dag J, rho}/2).
class LindbladGenerator {
 public:
  explicit LindbladGenerator(SpaceLayout layout) : layout_(std::move(layout)) {}

  LindbladGenerator& add(Operator op, double rate) {
    require_same_layout(layout_, op.layout(), "jump operator");
    if (rate < 0.0) throw InvalidArgument(fmt::format("jump rate {} is negative", rate));
    jumps_.push_back({std::move(op), rate});
    return *this;
  }

  const SpaceLayout& layout() const { return layout_; }
  const std::vector<Jump>& jumps() const { return jumps_; }
  bool empty() const { return jumps_.empty(); }

  /// sum_k rate_k J_k^dag J_k.
  Matrix decay_operator() const {
    const int d = layout_.total_dim();
    Matrix k = Matrix::Zero(d, d);
    for (const auto& j : jumps_) k.noalias() += j.rate * (j.op.matrix().adjoint() * j.op.matrix());
    return k;
  }

  Matrix apply(const Matrix& rho) const {
    const Matrix k = decay_operator();
    Matrix out = -0.5 * (k * rho + rho * k);
    for (const auto& j : jumps_) {
      if (j.rate == 0.0) continue;
      out.noalias() += j.rate * (j.op.matrix() * rho * j.op.matrix().adjoint());
    }
    return out;
  }

  /// Heisenberg-picture dual: D^dag(X) = sum_k rate_k (J^dag X J - {J^dag J, X}/2).
  Matrix apply_adjoint(const Matrix& x) const {
    const Matrix k = decay_operator();
    Matrix out = -0.5 * (k * x + x * k);
    for (const auto& j : jumps_) {
      if (j.rate == 0.0) continue;
      out.noalias() += j.rate * (j.op.matrix().adjoint() * x * j.op.matrix());
    }
    return out;
  }

 private:
  SpaceLayout layout_;
  std::vector<Jump> jumps_;
};

namespace detail {

inline Operator jc_coupling(const SpaceLayout& layout, Slot qubit, int cutoff) {
  const auto q = qubit_operators(qubit);
  const auto a = annihilation(cutoff);
  const auto up = embed(q.raise, qubit, layout);
  const auto am = embed(a, Slot::mediator, layout);
  return up * am + (up * am).adjoint();
}

}  // namespace detail

/// (w_p/2) sz_p + w_a a^dag a + (w_s/2) sz_s + g_p(s+_p a + h.c.) + g_s(s+_s a + h.c.).
inline Operator tripartite_hamiltonian(const ModelParams& p) {
  p.validate();
  const auto layout = SpaceLayout::tripartite(p.cutoff);
  const auto qp = qubit_operators(Slot::probe);
  const auto qs = qubit_operators(Slot::system);
  Operator h = (0.5 * p.omega_p) * embed(qp.z, Slot::probe, layout);
  h += p.omega_a * embed(number_operator(p.cutoff), Slot::mediator, layout);
  h += (0.5 * p.omega_s) * embed(qs.z, Slot::system, layout);
  h += p.g_p * detail::jc_coupling(layout, Slot::probe, p.cutoff);
  h += p.g_s * detail::jc_coupling(layout, Slot::system, p.cutoff);
  return h;
}

/// Total excitation number s+_p s-_p + s+_s s-_s + a^dag a on the tripartite layout.
inline Operator excitation_number(int cutoff) {
  const auto layout = SpaceLayout::tripartite(cutoff);
  return embed(qubit_operators(Slot::probe).excited, Slot::probe, layout) +
         embed(qubit_operators(Slot::system).excited, Slot::system, layout) +
         embed(number_operator(cutoff), Slot::mediator, layout);
}

/// tripartite_hamiltonian(p) - frame_frequency * N_exc. N_exc commutes with the
/// Hamiltonian, so every observable that commutes with N_exc (P_e, populations)
/// has the same expectation value in this frame as in the lab frame.
inline Operator rotating_frame_hamiltonian(const ModelParams& p, double frame_frequency) {
  return tripartite_hamiltonian(p) - frame_frequency * excitation_number(p.cutoff);
}

/// |delta| / (g sqrt(nbar_a + 1)); the second-order Hamiltonian wants this >= 10.
inline double dispersive_ratio(const ModelParams& p) {
  return std::abs(p.detuning()) / (p.g_p * std::sqrt(p.mediator_nbar + 1.0));
}

/// Second-order effective Hamiltonian of the dispersive regime,
/// (g^2/delta)[(sz_p + sz_s) a^dag a + (s+_p + s+_s)(s-_p + s-_s)].
inline Operator dispersive_hamiltonian(const ModelParams& p) {
  p.validate();
  if (p.omega_p != p.omega_s)
    throw InvalidArgument(fmt::format("dispersive model needs omega_p == omega_s ({} vs {})", p.omega_p, p.omega_s));
  if (p.g_p != p.g_s) throw InvalidArgument(fmt::format("dispersive model needs g_p == g_s ({} vs {})", p.g_p, p.g_s));
  const double delta = p.detuning();
  if (delta == 0.0) throw InvalidArgument("dispersive model needs a nonzero detuning");
  if (dispersive_ratio(p) < 10.0)
    warn(fmt::format("dispersive regime marginal: delta/(g sqrt(nbar_a+1)) = {:.3g} < 10", dispersive_ratio(p)));

  const auto layout = SpaceLayout::tripartite(p.cutoff);
  const auto qp = qubit_operators(Slot::probe);
  const auto qs = qubit_operators(Slot::system);
  const auto n = embed(number_operator(p.cutoff), Slot::mediator, layout);
  const auto sz = embed(qp.z, Slot::probe, layout) + embed(qs.z, Slot::system, layout);
  const auto up = embed(qp.raise, Slot::probe, layout) + embed(qs.raise, Slot::system, layout);
  const double chi = p.g_p * p.g_p / delta;
  return chi * (sz * n + up * up.adjoint());
}

/// Thermal reservoir on the mediator: a^dag at rate gamma nbar_b, a at rate gamma (nbar_b + 1).
inline LindbladGenerator thermal_bath_generator(const ModelParams& p, const SpaceLayout& layout) {
  p.validate();
  const int cutoff = layout.dim(Slot::mediator);
  const auto a = embed(annihilation(cutoff), Slot::mediator, layout);
  LindbladGenerator gen(layout);
  gen.add(a.adjoint(), p.bath_rate * p.bath_nbar);
  gen.add(a, p.bath_rate * (p.bath_nbar + 1.0));
  return gen;
}

inline LindbladGenerator thermal_bath_generator(const ModelParams& p) {
  return thermal_bath_generator(p, SpaceLayout::tripartite(p.cutoff));
}

struct CollectiveDecayModel {
  Operator free_hamiltonian;  // (w_s/2) sz_s + (w_p/2) sz_p
  LindbladGenerator generator;
};

/// Both qubits decaying into a common reservoir: single jump s-_p + s-_s at rate Gamma,
/// on the (probe, system) layout.
inline CollectiveDecayModel collective_decay_generator(const ModelParams& p) {
  p.validate();
  const auto layout = SpaceLayout::qubit_pair();
  const auto qp = qubit_operators(Slot::probe);
  const auto qs = qubit_operators(Slot::system);
  Operator h0 = (0.5 * p.omega_s) * embed(qs.z, Slot::system, layout) + (0.5 * p.omega_p) * embed(qp.z, Slot::probe, layout);
  LindbladGenerator gen(layout);
  gen.add(embed(qp.lower, Slot::probe, layout) + embed(qs.lower, Slot::system, layout), p.collective_rate);
  return {std::move(h0), std::move(gen)};
}

/// Ion-laser coupling after the optical RWA, on the (probe = ion qubit, mediator = COM mode) layout:
/// (Omega/2)[|D><S| D(t) e^{i(phi_L - delta_L t)} + h.c.], D(t) = exp(i eta (a^dag e^{i nu t} + a e^{-i nu t})).
/// D(t) = R(t) D(0) R(t)^dag with R = exp(i nu t a^dag a), so the exponential is computed
/// once by Hermitian diagonalization and then phased per time.
class IonLaserHamiltonian {
 public:
  explicit IonLaserHamiltonian(IonParams ip) : ip_(ip), layout_(SpaceLayout::qubit_oscillator(ip.cutoff)) {
    ip_.validate();
    const auto a = annihilation(ip_.cutoff).matrix();
    const Matrix x = ip_.lamb_dicke * (a + a.adjoint());
    Eigen::SelfAdjointEigenSolver<Matrix> es(x);
    const Eigen::VectorXcd phases = (kI * es.eigenvalues().cast<cplx>()).array().exp();
    displacement0_ = es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint();
  }

  const SpaceLayout& layout() const { return layout_; }
  const IonParams& params() const { return ip_; }

  Matrix displacement(double t) const {
    const int n = ip_.cutoff;
    Matrix d(n, n);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) d(r, c) = std::polar(1.0, ip_.trap_frequency * t * (r - c)) * displacement0_(r, c);
    return d;
  }

  Matrix matrix_at(double t) const {
    const int n = ip_.cutoff;
    const cplx laser = 0.5 * ip_.rabi * std::polar(1.0, ip_.laser_phase - ip_.laser_detuning * t);
    const Matrix coupling = laser * displacement(t);  // <D| . |S> block
    Matrix h = Matrix::Zero(2 * n, 2 * n);
    // index = i_qubit * n + n_fock, |S> = 0, |D> = 1
    h.block(n, 0, n, n) = coupling;
    h.block(0, n, n, n) = coupling.adjoint();
    return h;
  }

  Operator at(double t) const { return {layout_, matrix_at(t)}; }

 private:
  IonParams ip_;
  SpaceLayout layout_;
  Matrix displacement0_;
};

inline Operator ion_laser_hamiltonian(const IonParams& ip, double t) { return IonLaserHamiltonian(ip).at(t); }

/// Red-sideband Jaynes-Cummings form (i eta Omega / 2)(a^dag |S><D| e^{-i phi_L} - a |D><S| e^{i phi_L}).
inline Operator red_sideband_hamiltonian(const IonParams& ip) {
  ip.validate();
  const auto layout = SpaceLayout::qubit_oscillator(ip.cutoff);
  const auto q = qubit_operators(Slot::probe);
  const auto a = embed(annihilation(ip.cutoff), Slot::mediator, layout);
  const auto up = embed(q.raise, Slot::probe, layout);
  const cplx ph = std::polar(1.0, ip.laser_phase);
  const Operator term = (a.adjoint() * up.adjoint()) * std::conj(ph);
  return (0.5 * ip.lamb_dicke * ip.rabi * kI) * (term - term.adjoint());
}

/// V = |S><S| - i|D><D| on the ion qubit. At phi_L = 0,
/// V^dag H_R V = (eta Omega / 2)(s+ a + s- a^dag), the probe-mediator coupling with g = eta Omega / 2.
inline Operator red_sideband_frame_rotation(int cutoff) {
  const auto layout = SpaceLayout::qubit_oscillator(cutoff);
  Matrix v = Matrix::Zero(2, 2);
  v(0, 0) = 1.0;
  v(1, 1) = -kI;
  return embed(Operator(SpaceLayout::single(Slot::probe, 2), v), Slot::probe, layout);
}

}  // namespace shortmeas
