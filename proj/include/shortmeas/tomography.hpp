#pragma once

// Linear inversion of short-time derivative measurements into the system qubit
// density matrix, with Frobenius fidelity and relative-error metrics.

#include <cmath>
#include <numbers>
#include <optional>
#include <vector>

#include "shortmeas/parallel.hpp"
#include "shortmeas/shorttime.hpp"

namespace shortmeas {

enum class Provenance { exact, fitted };

constexpr std::string_view to_string(Provenance p) { return p == Provenance::exact ? "exact" : "fitted"; }

struct Measurement {
  double value = 0.0;
  Provenance provenance = Provenance::exact;
  std::optional<double> uncertainty;
};

/// Second derivatives of P_e at tau = 0: resonant at phi = 0 and phi = pi/2 (tau = g_p t),
/// dispersive in tau_eff = g_p^2 t / delta.
struct MeasurementSet {
  std::optional<Measurement> d2_resonant_phi0;
  std::optional<Measurement> d2_resonant_phi90;
  std::optional<Measurement> d2_dispersive;

  bool complete() const { return d2_resonant_phi0 && d2_resonant_phi90 && d2_dispersive; }
};

/// Sign of Re rho12 and Im rho12 in terms of (d2 + 1) at phi = 0 and phi = pi/2.
struct CoherenceSigns {
  double re = -1.0;
  double im = +1.0;
};

struct Reconstruction {
  QubitDensity rho;  // raw linear inversion, never projected
  bool physical = true;
  double min_eigenvalue = 0.0;
};

inline Reconstruction reconstruct(const MeasurementSet& m, const ModelParams& p, CoherenceSigns signs = {}) {
  if (!m.complete()) {
    std::string missing;
    if (!m.d2_resonant_phi0) missing += " d2_resonant_phi0";
    if (!m.d2_resonant_phi90) missing += " d2_resonant_phi90";
    if (!m.d2_dispersive) missing += " d2_dispersive";
    throw InvalidArgument("measurement set incomplete, missing:" + missing);
  }
  if (!(p.g_s != 0.0)) throw InvalidArgument("reconstruction needs g_s != 0");
  const double ratio = p.g_p / p.g_s;
  const double inversion = m.d2_dispersive->value;
  Reconstruction r;
  r.rho = QubitDensity::unchecked(0.5 * (1.0 - inversion), 0.5 * (1.0 + inversion),
                                  cplx(signs.re * ratio * (m.d2_resonant_phi0->value + 1.0),
                                       signs.im * ratio * (m.d2_resonant_phi90->value + 1.0)));
  r.min_eigenvalue = r.rho.min_eigenvalue();
  r.physical = r.min_eigenvalue >= -1e-9;
  return r;
}

/// F = Tr[a b^dag] / sqrt(Tr[a a^dag] Tr[b b^dag]).
inline double frobenius_fidelity(const QubitDensity& a, const QubitDensity& b) {
  const Matrix ma = a.matrix(), mb = b.matrix();
  const double na = ma.squaredNorm(), nb = mb.squaredNorm();
  if (na == 0.0 || nb == 0.0) throw InvalidArgument("Frobenius fidelity of a zero matrix");
  return (ma * mb.adjoint()).trace().real() / std::sqrt(na * nb);
}

/// |(rho12 - rho12_exp)/rho12| and (rho22 - rho22_exp)/rho22; absent where the denominator vanishes.
struct RelativeErrors {
  std::optional<double> rho12;
  std::optional<double> rho22;
};

inline RelativeErrors relative_errors(const QubitDensity& measured, const QubitDensity& truth, double zero_tol = 1e-12) {
  RelativeErrors e;
  if (std::abs(truth.rho12) > zero_tol) e.rho12 = std::abs((truth.rho12 - measured.rho12) / truth.rho12);
  if (std::abs(truth.rho22) > zero_tol) e.rho22 = (truth.rho22 - measured.rho22) / truth.rho22;
  return e;
}

/// How measurements are generated from a known system state. Resonant readouts use the
/// tripartite Hamiltonian with omega_a = omega_p; the dispersive readout uses the
/// second-order effective Hamiltonian at `dispersive_detuning`. Both use a thermal
/// mediator with nbar_a from the parameters.
struct MeasurementSetup {
  double dispersive_detuning = 30.0;
  double tail = 1e-12;   // thermal tail mass bound that sets the Fock cutoff
  int min_cutoff = 0;    // floor on the cutoff (0: none)
};

inline int measurement_cutoff(const ModelParams& p, const MeasurementSetup& s) {
  return std::max({minimum_thermal_cutoff(p.mediator_nbar, s.tail), s.min_cutoff, 4});
}

inline ModelParams resonant_params(ModelParams p) {
  p.omega_a = p.omega_p;
  return p;
}

inline ModelParams dispersive_params(ModelParams p, double delta) {
  p.omega_s = p.omega_p;
  p.g_s = p.g_p;
  p.set_detuning(delta);
  return p;
}

inline QState tripartite_state(const ProbeState& probe, const QState& mediator, const QubitDensity& system) {
  return tensor({probe.state(), mediator, system.state()});
}

/// Exact measurements for a probe with population inversion delta_p (applied to every preparation).
inline MeasurementSet simulate_measurements(const QubitDensity& system, const ModelParams& p, double delta_p = 0.0,
                                            const MeasurementSetup& setup = {}) {
  ModelParams q = p;
  q.cutoff = measurement_cutoff(p, setup);
  const QState mediator = thermal_state(q.mediator_nbar, q.cutoff);

  const ModelParams res = resonant_params(q);
  const Operator h_res = tripartite_hamiltonian(res);
  MeasurementSet m;
  m.d2_resonant_phi0 = Measurement{derivative_at_zero_exact(
      tripartite_state(ProbeState::from_inversion(delta_p, 0.0), mediator, system), h_res, nullptr, 2, q.g_p)};
  m.d2_resonant_phi90 = Measurement{derivative_at_zero_exact(
      tripartite_state(ProbeState::from_inversion(delta_p, std::numbers::pi / 2), mediator, system), h_res, nullptr, 2,
      q.g_p)};

  const ModelParams disp = dispersive_params(q, setup.dispersive_detuning);
  m.d2_dispersive = Measurement{derivative_at_zero_exact(
      tripartite_state(ProbeState::from_inversion(delta_p, 0.0), mediator, system), dispersive_hamiltonian(disp),
      nullptr, 2, TimeUnit::dispersive(disp.g_p, disp.detuning()).scale)};
  return m;
}

/// Recovers the coherence signs from exact measurements on (|1> + i|2>)/sqrt(2) and on
/// (|1> + |2>)/sqrt(2), whose coherences are known.
inline CoherenceSigns calibrate_coherence_signs(const ModelParams& p) {
  ModelParams q = p;
  q.mediator_nbar = 0.0;
  const auto re_probe = simulate_measurements(QubitDensity::from_pure(1.0, 1.0), q);
  const auto im_probe = simulate_measurements(QubitDensity::from_pure(1.0, kI), q);
  const double ratio = q.g_p / q.g_s;
  CoherenceSigns s;
  // rho12 = 1/2 and rho12 = -i/2 respectively
  s.re = (ratio * (re_probe.d2_resonant_phi0->value + 1.0)) / 0.5 > 0.0 ? 1.0 : -1.0;
  s.im = (ratio * (im_probe.d2_resonant_phi90->value + 1.0)) / -0.5 > 0.0 ? 1.0 : -1.0;
  return s;
}

struct SweepRow {
  double delta_p = 0.0;
  std::optional<double> eps_rho12;
  std::optional<double> eps_rho22;
  double infidelity = 0.0;
  bool physical = true;
  QubitDensity reconstructed;
};

/// Reconstruction errors for a probe with inversion delta_p, reconstructing with the ideal formulas.
inline std::vector<SweepRow> probe_inversion_sweep(const QubitDensity& system, const std::vector<double>& delta_p_grid,
                                                   const ModelParams& p, const MeasurementSetup& setup = {},
                                                   CoherenceSigns signs = {}, unsigned workers = 0) {
  bool has_zero = false;
  for (double d : delta_p_grid) {
    if (!(std::abs(d) <= 1.0)) throw InvalidArgument(fmt::format("population inversion {} outside [-1, 1]", d));
    has_zero = has_zero || std::abs(d) < 1e-12;
  }
  if (!has_zero) throw InvalidArgument("inversion grid must include 0");
  if (std::abs(system.min_eigenvalue()) > 1e-9) throw InvalidArgument("sweep expects a pure system state");

  return parallel_map<SweepRow>(
      delta_p_grid.size(),
      [&](std::size_t i) {
        const double d = delta_p_grid[i];
        const auto rec = reconstruct(simulate_measurements(system, p, d, setup), p, signs);
        const auto err = relative_errors(rec.rho, system);
        return SweepRow{d, err.rho12, err.rho22, 1.0 - frobenius_fidelity(rec.rho, system), rec.physical, rec.rho};
      },
      workers);
}

}  // namespace shortmeas
