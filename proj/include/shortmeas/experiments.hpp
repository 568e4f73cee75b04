#pragma once

// End-to-end protocol runs: the dispersive readout figure, the probe-inversion
// robustness sweep, the trapped-ion sideband reduction and the shot-noise study.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numbers>
#include <optional>
#include <vector>

#include "shortmeas/tomography.hpp"

namespace shortmeas {

struct CutoffCheck {
  int cutoff = 0;            // cutoff of the reported run
  int reference_cutoff = 0;  // cutoff + step used for the comparison
  double difference = 0.0;   // max abs difference of the compared observables
  bool converged = false;
};

/// Runs at `start` and `start + step`; while the observables differ by more than
/// `tol`, raises the cutoff by `step` (up to `max_cutoff`). Returns the run at the
/// lower cutoff of the accepted pair.
template <class Run, class Distance>
auto run_with_cutoff_check(int start, double tol, int max_cutoff, Run&& run, Distance&& distance, int step = 10) {
  int n = start;
  auto lower = run(n);
  for (;;) {
    auto upper = run(n + step);
    const double diff = distance(lower, upper);
    if (diff <= tol || n + step >= max_cutoff) {
      const bool ok = diff <= tol;
      if (!ok)
        warn(fmt::format("observables still change by {:.3g} between cutoffs {} and {} (tolerance {:.3g})", diff, n,
                         n + step, tol));
      return std::pair{std::move(lower), CutoffCheck{n, n + step, diff, ok}};
    }
    n += step;
    lower = std::move(upper);
  }
}

inline double max_abs_difference(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

/// Smallest cutoff >= requested that holds the thermal mediator (warns when raised).
inline int thermal_cutoff(double nbar, int requested) {
  const int needed = minimum_thermal_cutoff(nbar);
  if (requested < needed) {
    warn(fmt::format("cutoff {} too small for nbar = {}; raised to {}", requested, nbar, needed));
    return needed;
  }
  return requested;
}

// ---------------------------------------------------------------------------
// Dispersive readout of the system populations

struct Figure3Config {
  ModelParams params = [] {
    ModelParams p;
    p.set_detuning(30.0);
    p.mediator_nbar = 1.0;
    return p;
  }();
  QubitDensity system = QubitDensity::from_pure(0.1, std::polar(std::sqrt(1.0 - 0.01), std::numbers::pi / 3));
  double probe_phase = 0.0;

  double fit_window = 0.6;  // tau_eff
  int fit_degree = 4;
  int samples_per_fast_period = 40;  // fast period 2 pi / delta

  double effective_span = 2.0 * std::numbers::pi;  // two periods of the effective signal
  std::size_t effective_samples = 1001;
  double effective_fit_window = 0.3;
  int effective_fit_degree = 4;

  std::optional<long long> shots;
  std::uint64_t seed = 0;
  double cutoff_tolerance = 1e-6;
  int max_cutoff = 80;
  // long unitary runs: 1e-11 keeps the accumulated trace drift near 1e-9
  IntegratorOptions integrator{Method::dormand_prince, 1e-11};
};

struct Figure3Result {
  TimeSeries ab_initio;     // tripartite model, tau_eff in [0, fit_window]
  TimeSeries effective;     // second-order model, tau_eff in [0, effective_span]
  DerivativeReport ab_initio_fit;
  DerivativeReport effective_fit;
  DerivativeReport effective_exact;
  double closed_form = 0.0;  // rho22 - rho11
  double dispersive_ratio = 0.0;
  CutoffCheck cutoff;
  PhysicalityReport physicality;
  IntegratorStats integrator;
  std::size_t ab_initio_samples = 0;
};

inline std::size_t figure3_ab_initio_samples(const Figure3Config& c) {
  const double delta = std::abs(c.params.detuning());
  const double t_max = c.fit_window / TimeUnit::dispersive(c.params.g_p, c.params.detuning()).scale;
  const double dt = 2.0 * std::numbers::pi / delta / c.samples_per_fast_period;
  return static_cast<std::size_t>(std::ceil(t_max / dt)) + 1;
}

inline Figure3Result figure3(const Figure3Config& c) {
  const ModelParams& p0 = c.params;
  p0.validate();
  if (p0.detuning() == 0.0) throw InvalidArgument("dispersive readout needs a nonzero detuning");
  const TimeUnit unit = TimeUnit::dispersive(p0.g_p, p0.detuning());
  const ProbeState probe = ProbeState::plus(c.probe_phase);

  Figure3Result r;
  r.closed_form = second_derivative_dispersive(c.system, p0, TimeUnitKind::dispersive);
  r.dispersive_ratio = dispersive_ratio(p0);
  r.ab_initio_samples = figure3_ab_initio_samples(c);
  const auto grid = uniform_grid(c.fit_window, r.ab_initio_samples, unit);
  EvolutionOptions evo;
  evo.integrator = c.integrator;

  auto simulate = [&](int cutoff) {
    ModelParams p = p0;
    p.cutoff = cutoff;
    const QState rho0 = tripartite_state(probe, thermal_state(p.mediator_nbar, cutoff), c.system);
    const std::array<Operator, 1> obs{probe_excited_projector(rho0.layout())};
    return evolve_recording(Hamiltonian(rotating_frame_hamiltonian(p, p.omega_a)), nullptr, rho0, grid, obs, unit, evo);
  };
  auto [rec, check] = run_with_cutoff_check(
      thermal_cutoff(p0.mediator_nbar, p0.cutoff), c.cutoff_tolerance, c.max_cutoff, simulate,
      [](const Recording& a, const Recording& b) { return max_abs_difference(a.series[0].values, b.series[0].values); });
  r.cutoff = check;
  r.physicality = rec.physicality;
  r.integrator = rec.integrator;
  r.ab_initio = std::move(rec.series[0]);

  // effective model at the accepted cutoff
  ModelParams pe = p0;
  pe.cutoff = check.cutoff;
  const QState rho0 = tripartite_state(probe, thermal_state(pe.mediator_nbar, pe.cutoff), c.system);
  const Operator h_eff = dispersive_hamiltonian(pe);
  r.effective_exact = exact_derivative_report(rho0, h_eff, nullptr, 3, unit);
  const std::array<Operator, 1> obs{probe_excited_projector(rho0.layout())};
  auto eff = evolve_recording(Hamiltonian(h_eff), nullptr, rho0, uniform_grid(c.effective_span, c.effective_samples, unit),
                              obs, unit, evo);
  r.physicality.merge(eff.physicality);
  r.effective = std::move(eff.series[0]);

  if (c.shots) {
    r.ab_initio = sample_projection_noise(r.ab_initio, *c.shots, c.seed);
    r.effective = sample_projection_noise(r.effective, *c.shots, c.seed + 1);
  }
  FitOptions fit;
  fit.degree = c.fit_degree;
  fit.window = FitWindow{0.0, c.fit_window};
  r.ab_initio_fit = estimate_derivatives(r.ab_initio, fit);
  fit.degree = c.effective_fit_degree;
  fit.window = FitWindow{0.0, c.effective_fit_window};
  r.effective_fit = estimate_derivatives(r.effective, fit);
  return r;
}

// ---------------------------------------------------------------------------
// Probe-inversion robustness sweep

inline std::vector<double> linspace(double lo, double hi, std::size_t n) {
  if (n < 2) throw InvalidArgument("linspace needs at least two points");
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  return v;
}

struct Figure4Config {
  ModelParams params = [] {
    ModelParams p;
    p.mediator_nbar = 1.0;
    return p;
  }();
  QubitDensity system = QubitDensity::from_pure(0.3, std::sqrt(1.0 - 0.09));
  std::vector<double> delta_p = linspace(-0.2, 0.2, 81);
  MeasurementSetup setup;
  double cutoff_tolerance = 1e-6;
  int max_cutoff = 200;
  unsigned workers = 0;
};

struct Figure4Result {
  std::vector<SweepRow> rows;
  CoherenceSigns calibration;
  CutoffCheck cutoff;
  bool infidelity_monotone = true;  // nondecreasing in |delta_p|
};

inline Figure4Result figure4(const Figure4Config& c) {
  c.params.validate();
  Figure4Result r;
  r.calibration = calibrate_coherence_signs(c.params);

  auto sweep = [&](int cutoff) {
    MeasurementSetup s = c.setup;
    s.min_cutoff = cutoff;
    return probe_inversion_sweep(c.system, c.delta_p, c.params, s, r.calibration, c.workers);
  };
  auto distance = [](const std::vector<SweepRow>& a, const std::vector<SweepRow>& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      d = std::max(d, std::abs(a[i].infidelity - b[i].infidelity));
      d = std::max(d, std::abs(a[i].reconstructed.rho22 - b[i].reconstructed.rho22));
      d = std::max(d, std::abs(a[i].reconstructed.rho12 - b[i].reconstructed.rho12));
    }
    return d;
  };
  auto [rows, check] = run_with_cutoff_check(measurement_cutoff(c.params, c.setup), c.cutoff_tolerance, c.max_cutoff,
                                             sweep, distance);
  r.rows = std::move(rows);
  r.cutoff = check;

  // monotonicity in |delta_p|, within roundoff
  std::vector<const SweepRow*> by_abs;
  for (const auto& row : r.rows) by_abs.push_back(&row);
  std::stable_sort(by_abs.begin(), by_abs.end(),
                   [](const SweepRow* a, const SweepRow* b) { return std::abs(a->delta_p) < std::abs(b->delta_p); });
  for (std::size_t i = 1; i < by_abs.size(); ++i)
    if (std::abs(by_abs[i]->delta_p) > std::abs(by_abs[i - 1]->delta_p) + 1e-12 &&
        by_abs[i]->infidelity < by_abs[i - 1]->infidelity - 1e-12)
      r.infidelity_monotone = false;
  return r;
}

// ---------------------------------------------------------------------------
// Trapped-ion red-sideband reduction

struct IonCheckConfig {
  IonParams ion;
  int initial_fock = 1;
  std::size_t samples = 401;
  double periods = 1.0;  // in units of the sideband period 2 pi / (eta Omega)
  double cutoff_tolerance = 1e-6;
  int max_cutoff = 60;
  IntegratorOptions integrator;
};

struct IonCheckResult {
  TimeSeries full;     // P_D under the ion-laser Hamiltonian
  TimeSeries reduced;  // P_D under the red-sideband Jaynes-Cummings form
  double max_deviation = 0.0;
  double period = 0.0;
  bool lamb_dicke_regime = true;
  CutoffCheck cutoff;
  PhysicalityReport physicality;
  IntegratorStats integrator;
};

inline IonCheckResult ion_check(const IonCheckConfig& c) {
  c.ion.validate();
  if (c.initial_fock < 0) throw InvalidArgument("initial Fock number must be >= 0");
  IonCheckResult r;
  r.period = 2.0 * std::numbers::pi / (c.ion.lamb_dicke * c.ion.rabi);
  r.lamb_dicke_regime = c.ion.lamb_dicke_regime(c.initial_fock);
  if (!r.lamb_dicke_regime)
    warn(fmt::format("outside the Lamb-Dicke regime: eta sqrt(n+1) = {:.3g} >= {:.3g}",
                     c.ion.lamb_dicke * std::sqrt(c.initial_fock + 1.0), c.ion.lamb_dicke_threshold));
  const auto grid = uniform_grid(c.periods * r.period, c.samples);
  EvolutionOptions evo;
  evo.integrator = c.integrator;

  auto simulate = [&](int cutoff) {
    IonParams ip = c.ion;
    ip.cutoff = cutoff;
    const QState rho0 = tensor({qubit_state(1.0, 0.0, Slot::probe), fock_state(c.initial_fock, cutoff)});
    const std::array<Operator, 1> obs{probe_excited_projector(rho0.layout())};
    const auto laser = std::make_shared<IonLaserHamiltonian>(ip);
    const Hamiltonian full(laser->layout(), [laser](double t) { return laser->matrix_at(t); });
    return evolve_recording(full, nullptr, rho0, grid, obs, TimeUnit::lab(), evo);
  };
  const int start = std::max(c.ion.cutoff, c.initial_fock + 2);
  auto [rec, check] = run_with_cutoff_check(
      start, c.cutoff_tolerance, c.max_cutoff, simulate,
      [](const Recording& a, const Recording& b) { return max_abs_difference(a.series[0].values, b.series[0].values); });
  r.cutoff = check;
  r.physicality = rec.physicality;
  r.integrator = rec.integrator;
  r.full = std::move(rec.series[0]);

  IonParams ip = c.ion;
  ip.cutoff = check.cutoff;
  const QState rho0 = tensor({qubit_state(1.0, 0.0, Slot::probe), fock_state(c.initial_fock, ip.cutoff)});
  const std::array<Operator, 1> obs{probe_excited_projector(rho0.layout())};
  auto red = evolve_recording(Hamiltonian(red_sideband_hamiltonian(ip)), nullptr, rho0, grid, obs, TimeUnit::lab(), evo);
  r.physicality.merge(red.physicality);
  r.reduced = std::move(red.series[0]);
  r.max_deviation = max_abs_difference(r.full.values, r.reduced.values);
  return r;
}

// ---------------------------------------------------------------------------
// Shot-noise study of the dispersive second derivative

struct NoiseStudyConfig {
  ModelParams params = Figure3Config{}.params;
  QubitDensity system = Figure3Config{}.system;
  double probe_phase = 0.0;
  long long shots = 10'000;
  int repetitions = 100;
  std::uint64_t seed = 1;
  int degree = 5;
  double window = 1.6;  // tau_eff
  std::size_t samples = 4001;  // step g_p dt = 0.012, above g_p/omega_p
  unsigned workers = 0;
  IntegratorOptions integrator;
};

struct NoiseStudyResult {
  std::vector<double> estimates;
  double mean = 0.0;
  double stddev = 0.0;       // sample standard deviation
  double noiseless = 0.0;    // same fit on the exact series
  double expected = 0.0;     // rho22 - rho11
  PhysicalityReport physicality;
};

inline NoiseStudyResult noise_study(const NoiseStudyConfig& c) {
  c.params.validate();
  if (c.repetitions < 2) throw InvalidArgument("noise study needs at least two repetitions");
  const TimeUnit unit = TimeUnit::dispersive(c.params.g_p, c.params.detuning());
  ModelParams p = c.params;
  p.cutoff = thermal_cutoff(p.mediator_nbar, p.cutoff);
  const QState rho0 = tripartite_state(ProbeState::plus(c.probe_phase), thermal_state(p.mediator_nbar, p.cutoff), c.system);
  const std::array<Operator, 1> obs{probe_excited_projector(rho0.layout())};
  EvolutionOptions evo;
  evo.integrator = c.integrator;
  auto rec = evolve_recording(Hamiltonian(dispersive_hamiltonian(p)), nullptr, rho0,
                              uniform_grid(c.window, c.samples, unit), obs, unit, evo);

  NoiseStudyResult r;
  r.physicality = rec.physicality;
  r.expected = second_derivative_dispersive(c.system, p, TimeUnitKind::dispersive);
  const TimeSeries& exact = rec.series[0];
  FitOptions fit;
  fit.degree = c.degree;
  fit.window = FitWindow{0.0, c.window};
  r.noiseless = estimate_derivatives(exact, fit).value(2);
  r.estimates = parallel_map<double>(
      static_cast<std::size_t>(c.repetitions),
      [&](std::size_t i) { return estimate_derivatives(sample_projection_noise(exact, c.shots, c.seed + i), fit).value(2); },
      c.workers);
  for (double e : r.estimates) r.mean += e;
  r.mean /= static_cast<double>(r.estimates.size());
  for (double e : r.estimates) r.stddev += (e - r.mean) * (e - r.mean);
  r.stddev = std::sqrt(r.stddev / static_cast<double>(r.estimates.size() - 1));
  return r;
}

}  // namespace shortmeas
