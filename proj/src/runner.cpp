#include "shortmeas/cli/runner.hpp"

#include <algorithm>
#include <fstream>
#include <numbers>
#include <sstream>

#ifndef SHORTMEAS_VERSION
#define SHORTMEAS_VERSION "0.0.0"
#endif

namespace shortmeas::cli {

namespace {

using cli::to_json;

// ---------------------------------------------------------------------------
// summaries

Json to_json(const PhysicalityReport& p) {
  return Json{{"max_trace_deviation", p.max_trace_deviation},
              {"min_eigenvalue", std::isfinite(p.min_eigenvalue) ? Json(p.min_eigenvalue) : Json(nullptr)},
              {"max_purity_drift", p.max_purity_drift},
              {"points", p.points},
              {"ok", p.ok()}};
}

Json to_json(const IntegratorStats& s) {
  return Json{{"method", std::string(shortmeas::to_string(s.method))},
              {"tolerance", s.tolerance},
              {"accepted_steps", s.accepted},
              {"rejected_steps", s.rejected},
              {"smallest_step", s.smallest_step},
              {"largest_step", s.largest_step}};
}

Json to_json(const CutoffCheck& c) {
  return Json{{"cutoff", c.cutoff},
              {"reference_cutoff", c.reference_cutoff},
              {"difference", c.difference},
              {"converged", c.converged}};
}

Json to_json(const CoherenceSigns& s) { return Json{{"re", s.re}, {"im", s.im}}; }

Json errors_json(const RelativeErrors& e) {
  return Json{{"eps_rho12", e.rho12 ? Json(*e.rho12) : Json(nullptr)},
              {"eps_rho22", e.rho22 ? Json(*e.rho22) : Json(nullptr)}};
}

// ---------------------------------------------------------------------------
// model assembly

bool has_mediator(const ExperimentConfig& c) { return c.hamiltonian != HamiltonianKind::collective; }

int starting_cutoff(const ExperimentConfig& c) {
  if (c.mediator.kind == MediatorKind::fock) return std::max(c.model.cutoff, c.mediator.fock + 2);
  return thermal_cutoff(c.model.mediator_nbar, c.model.cutoff);
}

QState initial_state(const ExperimentConfig& c, int cutoff) {
  const ProbeState probe = c.probe.state();
  if (!has_mediator(c)) return tensor({probe.state(), c.system.state()});
  return tripartite_state(probe, c.mediator.state(c.model.mediator_nbar, cutoff), c.system);
}

struct Model {
  Operator lab;       // Hamiltonian used for exact derivatives
  Operator frame;     // same dynamics of P_e, slower phases; used for integration
  std::optional<LindbladGenerator> generator;

  const LindbladGenerator* gen() const { return generator ? &*generator : nullptr; }
};

Model build_model(const ExperimentConfig& c, int cutoff) {
  ModelParams p = c.model;
  if (has_mediator(c)) p.cutoff = cutoff;
  switch (c.hamiltonian) {
    case HamiltonianKind::tripartite: {
      Model m{tripartite_hamiltonian(p), rotating_frame_hamiltonian(p, p.omega_a), std::nullopt};
      if (c.dissipation == DissipationKind::bath) m.generator = thermal_bath_generator(p);
      return m;
    }
    case HamiltonianKind::dispersive: {
      const Operator h = dispersive_hamiltonian(p);
      Model m{h, h, std::nullopt};
      if (c.dissipation == DissipationKind::bath) m.generator = thermal_bath_generator(p);
      return m;
    }
    case HamiltonianKind::zero: {
      const Operator h = Operator::zero(SpaceLayout::tripartite(cutoff));
      Model m{h, h, std::nullopt};
      if (c.dissipation == DissipationKind::bath) m.generator = thermal_bath_generator(p);
      return m;
    }
    case HamiltonianKind::collective: {
      auto cd = collective_decay_generator(p);
      // the jump operator is covariant under the total excitation rotation at omega_p
      const auto layout = SpaceLayout::qubit_pair();
      const Operator sz = embed(qubit_operators(Slot::probe).z, Slot::probe, layout) +
                          embed(qubit_operators(Slot::system).z, Slot::system, layout);
      Operator frame = cd.free_hamiltonian - (0.5 * p.omega_p) * sz;
      return Model{cd.free_hamiltonian, frame, std::move(cd.generator)};
    }
  }
  throw InvalidArgument("unknown Hamiltonian kind");
}

struct Simulation {
  TimeSeries series;
  CutoffCheck cutoff;
  PhysicalityReport physicality;
  IntegratorStats integrator;
};

Simulation simulate_series(const ExperimentConfig& c) {
  const TimeUnit unit = grid_unit(c);
  const auto grid = uniform_grid(c.grid.t_max, c.grid.samples, unit);
  EvolutionOptions evo;
  evo.integrator = c.integrator;
  auto run = [&](int cutoff) {
    const Model m = build_model(c, cutoff);
    const QState rho0 = initial_state(c, cutoff);
    const std::array<Operator, 1> obs{probe_excited_projector(rho0.layout())};
    return evolve_recording(Hamiltonian(m.frame), m.gen(), rho0, grid, obs, unit, evo);
  };
  Simulation s;
  Recording rec;
  if (has_mediator(c)) {
    const int start = starting_cutoff(c);
    auto [r, check] = run_with_cutoff_check(
        start, c.cutoff_tolerance, start + 40, run,
        [](const Recording& a, const Recording& b) { return max_abs_difference(a.series[0].values, b.series[0].values); });
    rec = std::move(r);
    s.cutoff = check;
  } else {
    rec = run(0);
    s.cutoff = CutoffCheck{0, 0, 0.0, true};  // no oscillator
  }
  s.physicality = rec.physicality;
  s.integrator = rec.integrator;
  s.series = std::move(rec.series[0]);
  if (c.shots) s.series = sample_projection_noise(s.series, *c.shots, c.seed);
  return s;
}

Json simulation_summary(const Simulation& s) {
  return Json{{"samples", s.series.size()},
              {"unit", std::string(s.series.unit.name())},
              {"unit_scale", s.series.unit.scale},
              {"shots", s.series.exact() ? Json(nullptr) : Json(s.series.shots.front())},
              {"cutoff", to_json(s.cutoff)},
              {"integrator", to_json(s.integrator)},
              {"physicality", to_json(s.physicality)}};
}

std::string csv(const TimeSeries& s) {
  std::ostringstream out;
  write_timeseries_csv(out, s);
  return out.str();
}

std::string csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  write_sweep_csv(out, rows);
  return out.str();
}

FitOptions fit_options(const ExperimentConfig& c) {
  FitOptions f;
  f.degree = c.fit.degree;
  f.window = c.fit.window;
  return f;
}

// Closed forms that apply to the configured model in the configured unit; empty when none does.
std::optional<DerivativeReport> closed_form_report(const ExperimentConfig& c, int cutoff, Json& notes) {
  const TimeUnit unit = grid_unit(c);
  const ProbeState probe = c.probe.state();
  DerivativeReport r{DerivativeMethod::closed_form, unit, {}, std::nullopt};
  switch (c.hamiltonian) {
    case HamiltonianKind::zero:
      if (c.dissipation == DissipationKind::none) r.derivatives = {{1, 0.0, std::nullopt}, {2, 0.0, std::nullopt}};
      break;
    case HamiltonianKind::tripartite: {
      if (unit.kind != TimeUnitKind::resonant || !probe.balanced()) break;
      const QState mediator = c.mediator.state(c.model.mediator_nbar, cutoff);
      r.derivatives.push_back({1, first_derivative_quadrature(mediator, probe.phase()), std::nullopt});
      r.derivatives.push_back({2, second_derivative_resonant(c.system, probe, c.model), std::nullopt});
      break;
    }
    case HamiltonianKind::dispersive:
      if (unit.kind == TimeUnitKind::resonant || unit.kind == TimeUnitKind::dispersive)
        r.derivatives.push_back({2, second_derivative_dispersive(c.system, c.model, unit.kind), std::nullopt});
      break;
    case HamiltonianKind::collective:
      if (unit.kind == TimeUnitKind::collective && probe.balanced())
        r.derivatives.push_back({2, second_derivative_collective(c.system, probe.phase()), std::nullopt});
      break;
  }
  if (c.dissipation == DissipationKind::bath && c.hamiltonian != HamiltonianKind::collective &&
      unit.kind == TimeUnitKind::resonant) {
    notes["third_derivative_bath_correction"] = third_derivative_bath_correction(probe, c.model);
  }
  if (r.derivatives.empty()) return std::nullopt;
  return r;
}

// ---------------------------------------------------------------------------
// experiment kinds

struct Output {
  std::filesystem::path dir;
  std::vector<std::string> names;

  void write(const std::string& name, const std::string& content) {
    write_file(dir / name, content);
    names.push_back(name);
  }
};

Json run_simulate(const ExperimentConfig& c, Output& out) {
  const Simulation s = simulate_series(c);
  out.write("timeseries.csv", csv(s.series));
  return simulation_summary(s);
}

Json run_derivatives(const ExperimentConfig& c, Output& out) {
  const Simulation s = simulate_series(c);
  out.write("timeseries.csv", csv(s.series));
  Json summary = simulation_summary(s);

  const int cutoff = s.cutoff.cutoff;
  const Model m = build_model(c, cutoff);
  const QState rho0 = initial_state(c, cutoff);
  const TimeUnit unit = grid_unit(c);
  std::vector<LabeledReport> reports;
  reports.push_back({"exact", exact_derivative_report(rho0, m.lab, m.gen(), 3, unit)});
  if (m.generator) {
    const auto unitary = exact_derivative_report(rho0, m.lab, nullptr, 3, unit);
    reports.push_back({"exact-without-dissipation", unitary});
    if (c.hamiltonian != HamiltonianKind::collective && unit.kind == TimeUnitKind::resonant)
      summary["third_derivative_bath_shift"] = reports[0].report.value(3) - unitary.value(3);
  }
  Json notes = Json::object();
  if (auto cf = closed_form_report(c, cutoff, notes)) reports.push_back({"closed-form", *cf});
  for (auto& [k, v] : notes.items()) summary[k] = v;
  reports.push_back({"fit", estimate_derivatives(s.series, fit_options(c))});
  out.write("derivatives.json", dump(derivatives_document(reports)));
  summary["second_derivative_exact"] = reports.front().report.value(2);
  summary["second_derivative_fit"] = reports.back().report.value(2);
  return summary;
}

MeasurementSetup measurement_setup(const ExperimentConfig& c) {
  MeasurementSetup s;
  s.dispersive_detuning = c.dispersive_detuning;
  s.min_cutoff = c.model.cutoff;
  return s;
}

double probe_inversion(const ExperimentConfig& c) {
  return c.probe.form == ProbeForm::phase ? 0.0 : c.probe.state().inversion();
}

// One readout fitted from a sampled P_e series.
Measurement fitted_measurement(const ExperimentConfig& c, const Operator& h, const QState& rho0, TimeUnit unit,
                               std::uint64_t seed) {
  const double t_max = c.grid.t_max > 0.0 ? c.grid.t_max : 0.5;
  const std::size_t samples = c.grid.samples >= 2 ? c.grid.samples : 201;
  EvolutionOptions evo;
  evo.integrator = c.integrator;
  const std::array<Operator, 1> obs{probe_excited_projector(rho0.layout())};
  auto rec = evolve_recording(Hamiltonian(h), nullptr, rho0, uniform_grid(t_max, samples, unit), obs, unit, evo);
  TimeSeries s = std::move(rec.series[0]);
  if (c.shots) s = sample_projection_noise(s, *c.shots, seed);
  const auto report = estimate_derivatives(s, fit_options(c));
  return Measurement{report.value(2), Provenance::fitted, report.uncertainty(2)};
}

MeasurementSet fitted_measurements(const ExperimentConfig& c, const MeasurementSetup& setup) {
  ModelParams q = c.model;
  q.cutoff = measurement_cutoff(q, setup);
  const QState mediator = thermal_state(q.mediator_nbar, q.cutoff);
  const double dp = probe_inversion(c);
  const ModelParams res = resonant_params(q);
  const Operator h_res = rotating_frame_hamiltonian(res, res.omega_a);
  const ModelParams disp = dispersive_params(q, setup.dispersive_detuning);
  MeasurementSet m;
  m.d2_resonant_phi0 = fitted_measurement(
      c, h_res, tripartite_state(ProbeState::from_inversion(dp, 0.0), mediator, c.system), TimeUnit::resonant(q.g_p),
      c.seed);
  m.d2_resonant_phi90 = fitted_measurement(
      c, h_res, tripartite_state(ProbeState::from_inversion(dp, std::numbers::pi / 2), mediator, c.system),
      TimeUnit::resonant(q.g_p), c.seed + 1);
  m.d2_dispersive = fitted_measurement(
      c, dispersive_hamiltonian(disp), tripartite_state(ProbeState::from_inversion(dp, 0.0), mediator, c.system),
      TimeUnit::dispersive(disp.g_p, disp.detuning()), c.seed + 2);
  return m;
}

Json run_reconstruct(const ExperimentConfig& c, Output& out) {
  const MeasurementSetup setup = measurement_setup(c);
  const CoherenceSigns signs = calibrate_coherence_signs(c.model);
  const MeasurementSet m =
      c.shots ? fitted_measurements(c, setup) : simulate_measurements(c.system, c.model, probe_inversion(c), setup);
  const Reconstruction rec = reconstruct(m, c.model, signs);
  const double fidelity = frobenius_fidelity(rec.rho, c.system);
  Json doc;
  doc["measurements"] = to_json(m);
  doc["coherence_signs"] = to_json(signs);
  doc["dispersive_detuning"] = setup.dispersive_detuning;
  doc["cutoff"] = measurement_cutoff(c.model, setup);
  doc["reconstructed"] = to_json(rec.rho);
  doc["physical"] = rec.physical;
  doc["min_eigenvalue"] = rec.min_eigenvalue;
  doc["truth"] = to_json(c.system);
  doc["fidelity"] = fidelity;
  doc["relative_errors"] = errors_json(relative_errors(rec.rho, c.system));
  out.write("reconstruction.json", dump(doc));
  return Json{{"fidelity", fidelity}, {"physical", rec.physical}, {"provenance", c.shots ? "fitted" : "exact"}};
}

std::vector<double> sweep_grid(const ExperimentConfig& c) {
  auto grid = linspace(c.sweep.lo, c.sweep.hi, c.sweep.points);
  // the reference row at delta_p = 0 is always present
  for (double& d : grid)
    if (std::abs(d) < 1e-12) d = 0.0;
  if (std::none_of(grid.begin(), grid.end(), [](double d) { return d == 0.0; })) {
    if (c.sweep.lo > 0.0 || c.sweep.hi < 0.0) throw InvalidArgument("sweep range must contain delta_p = 0");
    grid.insert(std::upper_bound(grid.begin(), grid.end(), 0.0), 0.0);
  }
  return grid;
}

Json sweep_summary(const std::vector<SweepRow>& rows) {
  double worst = 0.0;
  bool physical = true;
  for (const auto& r : rows) {
    worst = std::max(worst, r.infidelity);
    physical = physical && r.physical;
  }
  return Json{{"rows", rows.size()}, {"max_infidelity", worst}, {"all_physical", physical}};
}

Json run_sweep(const ExperimentConfig& c, Output& out) {
  const CoherenceSigns signs = calibrate_coherence_signs(c.model);
  const auto rows = probe_inversion_sweep(c.system, sweep_grid(c), c.model, measurement_setup(c), signs);
  out.write("sweep.csv", csv(rows));
  Json s = sweep_summary(rows);
  s["coherence_signs"] = to_json(signs);
  return s;
}

Json run_figure3(const ExperimentConfig& c, Output& out) {
  Figure3Config f;
  f.params = c.model;
  f.system = c.system;
  f.probe_phase = c.probe.phi;
  f.fit_degree = c.fit.degree;
  if (c.fit.window) f.fit_window = c.fit.window->hi;
  f.shots = c.shots;
  f.seed = c.seed;
  f.cutoff_tolerance = c.cutoff_tolerance;
  f.integrator = c.integrator;
  const auto r = figure3(f);
  out.write("timeseries.csv", csv(r.ab_initio));
  out.write("timeseries_effective.csv", csv(r.effective));
  DerivativeReport closed{DerivativeMethod::closed_form, r.effective_exact.unit, {{2, r.closed_form, std::nullopt}},
                          std::nullopt};
  out.write("derivatives.json", dump(derivatives_document({{"ab-initio-fit", r.ab_initio_fit},
                                                           {"effective-fit", r.effective_fit},
                                                           {"effective-exact", r.effective_exact},
                                                           {"closed-form", closed}})));
  return Json{{"ab_initio_second_derivative", r.ab_initio_fit.value(2)},
              {"ab_initio_uncertainty", r.ab_initio_fit.uncertainty(2) ? Json(*r.ab_initio_fit.uncertainty(2)) : Json(nullptr)},
              {"effective_fit_second_derivative", r.effective_fit.value(2)},
              {"effective_exact_second_derivative", r.effective_exact.value(2)},
              {"closed_form", r.closed_form},
              {"dispersive_ratio", r.dispersive_ratio},
              {"ab_initio_samples", r.ab_initio_samples},
              {"ab_initio_span_tau_eff", f.fit_window},
              {"effective_span_tau_eff", f.effective_span},
              {"effective_samples", f.effective_samples},
              {"cutoff", to_json(r.cutoff)},
              {"integrator", to_json(r.integrator)},
              {"physicality", to_json(r.physicality)}};
}

Json run_figure4(const ExperimentConfig& c, Output& out) {
  Figure4Config f;
  f.params = c.model;
  f.system = c.system;
  f.delta_p = sweep_grid(c);
  f.setup.dispersive_detuning = c.dispersive_detuning;
  f.setup.min_cutoff = c.model.cutoff;
  f.cutoff_tolerance = c.cutoff_tolerance;
  const auto r = figure4(f);
  out.write("sweep.csv", csv(r.rows));
  Json s = sweep_summary(r.rows);
  s["coherence_signs"] = to_json(r.calibration);
  s["cutoff"] = to_json(r.cutoff);
  s["infidelity_monotone_in_abs_delta_p"] = r.infidelity_monotone;
  for (const auto& row : r.rows)
    if (std::abs(row.delta_p - 0.01) < 1e-12) s["infidelity_at_0.01"] = row.infidelity;
  return s;
}

Json run_ion_check(const ExperimentConfig& c, Output& out) {
  IonCheckConfig f;
  f.ion = c.ion;
  f.initial_fock = c.ion_initial_fock;
  f.samples = c.ion_samples;
  f.periods = c.ion_periods;
  f.cutoff_tolerance = c.cutoff_tolerance;
  f.integrator = c.integrator;
  const auto r = ion_check(f);
  out.write("timeseries.csv", csv(r.full));
  out.write("timeseries_reduced.csv", csv(r.reduced));
  return Json{{"max_deviation", r.max_deviation},
              {"sideband_period", r.period},
              {"lamb_dicke_regime", r.lamb_dicke_regime},
              {"cutoff", to_json(r.cutoff)},
              {"integrator", to_json(r.integrator)},
              {"physicality", to_json(r.physicality)}};
}

Json run_noise_study(const ExperimentConfig& c, Output& out) {
  NoiseStudyConfig f;
  f.params = c.model;
  f.system = c.system;
  f.probe_phase = c.probe.phi;
  if (c.shots) f.shots = *c.shots;
  f.repetitions = c.repetitions;
  f.seed = c.seed;
  f.degree = c.fit.degree;
  f.window = c.fit.window ? c.fit.window->hi : c.grid.t_max;
  f.samples = c.grid.samples;
  f.integrator = c.integrator;
  const auto r = noise_study(f);
  Json doc;
  doc["unit"] = "tau_eff";
  doc["shots_per_point"] = f.shots;
  doc["expected"] = r.expected;
  doc["noiseless_fit"] = r.noiseless;
  doc["estimates"] = r.estimates;
  doc["mean"] = r.mean;
  doc["stddev"] = r.stddev;
  out.write("derivatives.json", dump(doc));
  return Json{{"mean", r.mean},
              {"stddev", r.stddev},
              {"noiseless_fit", r.noiseless},
              {"expected", r.expected},
              {"physicality", to_json(r.physicality)}};
}

std::string format_short(double v) { return fmt::format("{:.3g}", v); }

}  // namespace

std::string_view code_version() { return SHORTMEAS_VERSION; }

void apply_overrides(ExperimentConfig& c, const Overrides& o) {
  if (o.out) c.output = *o.out;
  if (o.seed) c.seed = *o.seed;
  if (o.shots) {
    if (*o.shots < 1) throw ConfigError("--shots must be a positive integer");
    c.shots = *o.shots;
  }
  if (o.cutoff) {
    if (*o.cutoff < 2) throw ConfigError("--cutoff must be >= 2");
    c.model.cutoff = *o.cutoff;
    c.ion.cutoff = *o.cutoff;
  }
}

RunResult run_experiment(const ExperimentConfig& c, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  Output out{out_dir, {}};
  Json summary;
  switch (c.kind) {
    case ExperimentKind::simulate: summary = run_simulate(c, out); break;
    case ExperimentKind::derivatives: summary = run_derivatives(c, out); break;
    case ExperimentKind::reconstruct: summary = run_reconstruct(c, out); break;
    case ExperimentKind::sweep: summary = run_sweep(c, out); break;
    case ExperimentKind::figure3: summary = run_figure3(c, out); break;
    case ExperimentKind::figure4: summary = run_figure4(c, out); break;
    case ExperimentKind::ion_check: summary = run_ion_check(c, out); break;
    case ExperimentKind::noise_study: summary = run_noise_study(c, out); break;
  }
  Json manifest;
  manifest["tool"] = "shortmeas";
  manifest["version"] = std::string(code_version());
  manifest["kind"] = to_string(c.kind);
  manifest["seed"] = c.seed;
  manifest["config"] = to_json(c);
  manifest["results"] = summary;
  manifest["artifacts"] = out.names;
  write_file(out_dir / "run-manifest.json", dump(manifest));
  out.names.push_back("run-manifest.json");
  return RunResult{out.names, summary};
}

std::string ValidationReport::text() const {
  std::string s;
  for (const auto& n : notes) s += n + "\n";
  for (const auto& w : warnings) s += "warning: " + w + "\n";
  for (const auto& e : errors) s += "error: " + e + "\n";
  s += errors.empty() ? "config OK\n" : "config has errors\n";
  return s;
}

ValidationReport check_config(const ExperimentConfig& c) {
  ValidationReport r;
  const auto& m = c.model;
  r.notes.push_back(fmt::format("kind: {}", to_string(c.kind)));

  // Fock truncation
  if (c.kind == ExperimentKind::ion_check) {
    const int needed = c.ion_initial_fock + 2;
    if (c.ion.cutoff < needed)
      r.warnings.push_back(fmt::format("cutoff: ion cutoff {} will be raised to {}", c.ion.cutoff, needed));
    else
      r.notes.push_back(fmt::format("cutoff: OK (N = {}, checked against N + 10 at run time)", c.ion.cutoff));
  } else if (!((c.kind == ExperimentKind::simulate || c.kind == ExperimentKind::derivatives) && !has_mediator(c))) {
    if (c.mediator.kind == MediatorKind::fock && c.mediator.fock + 2 > m.cutoff) {
      r.warnings.push_back(
          fmt::format("cutoff: Fock state n = {} needs N >= {}, have {}", c.mediator.fock, c.mediator.fock + 2, m.cutoff));
    } else if (c.mediator.kind == MediatorKind::thermal) {
      const double tail = thermal_tail_mass(m.mediator_nbar, m.cutoff);
      const int needed = minimum_thermal_cutoff(m.mediator_nbar);
      if (m.cutoff < needed)
        r.warnings.push_back(fmt::format("cutoff: thermal tail mass {} at N = {} exceeds 1e-8; runs use N = {}",
                                         format_short(tail), m.cutoff, needed));
      else
        r.notes.push_back(fmt::format("cutoff: OK (thermal tail mass {} at N = {})", format_short(tail), m.cutoff));
    }
  }

  // dispersive regime
  std::optional<ModelParams> dispersive;
  switch (c.kind) {
    case ExperimentKind::figure3:
    case ExperimentKind::noise_study: dispersive = m; break;
    case ExperimentKind::reconstruct:
    case ExperimentKind::sweep:
    case ExperimentKind::figure4: dispersive = dispersive_params(m, c.dispersive_detuning); break;
    default:
      if (c.hamiltonian == HamiltonianKind::dispersive) dispersive = m;
  }
  if (dispersive) {
    if (dispersive->detuning() == 0.0) {
      r.errors.push_back("dispersive: the detuning is zero");
    } else {
      const double ratio = dispersive_ratio(*dispersive);
      const std::string text = fmt::format("(δ/g√(n̄+1) = {:.1f})", ratio);
      if (ratio >= 10.0)
        r.notes.push_back("dispersive: OK " + text);
      else
        r.warnings.push_back("dispersive: marginal " + text + ", the second-order model wants >= 10");
    }
    if (c.hamiltonian == HamiltonianKind::dispersive && (m.omega_p != m.omega_s || m.g_p != m.g_s))
      r.errors.push_back("dispersive: the effective model needs omega_p == omega_s and g_p == g_s");
  }

  // sampling step against the optical period
  auto sampling = [&](double dt_lab, const std::string& what) {
    const double step = m.g_p * dt_lab, floor = m.g_p / m.omega_p;
    if (step < floor)
      r.warnings.push_back(fmt::format(
          "sampling: {} step g_p dt = {} is below g_p/omega_p = {}; the rotating-wave model is not meaningful on "
          "time scales shorter than 1/omega_p",
          what, format_short(step), format_short(floor)));
    else
      r.notes.push_back(fmt::format("sampling: OK ({} step g_p dt = {} >= g_p/omega_p = {})", what,
                                    format_short(step), format_short(floor)));
  };
  if ((c.kind == ExperimentKind::simulate || c.kind == ExperimentKind::derivatives) && has_mediator(c) &&
      c.grid.samples >= 2) {
    const TimeUnit unit = grid_unit(c);
    sampling(c.grid.t_max / static_cast<double>(c.grid.samples - 1) / unit.scale, "grid");
    if (c.fit.window && c.fit.window->hi > c.grid.t_max * (1.0 + 1e-12))
      r.warnings.push_back(fmt::format("fit: window end {} lies beyond the grid end {}", c.fit.window->hi, c.grid.t_max));
  }
  if (c.kind == ExperimentKind::figure3) {
    Figure3Config f;
    f.params = m;
    if (c.fit.window) f.fit_window = c.fit.window->hi;
    const double dt = f.fit_window / TimeUnit::dispersive(m.g_p, m.detuning()).scale /
                      static_cast<double>(figure3_ab_initio_samples(f) - 1);
    sampling(dt, "ab-initio");
  }
  if (c.kind == ExperimentKind::noise_study && c.grid.samples >= 2)
    sampling(c.grid.t_max / static_cast<double>(c.grid.samples - 1) / TimeUnit::dispersive(m.g_p, m.detuning()).scale,
             "grid");

  // ion trap
  if (c.kind == ExperimentKind::ion_check) {
    const double x = c.ion.lamb_dicke * std::sqrt(c.ion_initial_fock + 1.0);
    if (c.ion.lamb_dicke_regime(c.ion_initial_fock))
      r.notes.push_back(fmt::format("lamb-dicke: OK (eta sqrt(n+1) = {} < {})", format_short(x),
                                    format_short(c.ion.lamb_dicke_threshold)));
    else
      r.warnings.push_back(fmt::format("lamb-dicke: outside the regime (eta sqrt(n+1) = {} >= {})", format_short(x),
                                       format_short(c.ion.lamb_dicke_threshold)));
    if (std::abs(c.ion.laser_detuning + c.ion.trap_frequency) > 1e-12 * c.ion.trap_frequency)
      r.warnings.push_back("ion: laser detuning is not -nu; the red-sideband reduction assumes the first red sideband");
  }

  // probe preparation
  const ProbeState probe = c.probe.state();
  if (!probe.balanced(1e-9) && c.kind != ExperimentKind::sweep && c.kind != ExperimentKind::figure4)
    r.warnings.push_back(
        fmt::format("probe: population inversion {} is nonzero; the readout formulas assume 0", format_short(probe.inversion())));
  return r;
}

ValidationReport validate_file(const std::filesystem::path& path, const Overrides& o) {
  try {
    ExperimentConfig c = load_config(path);
    apply_overrides(c, o);
    return check_config(c);
  } catch (const ConfigError& e) {
    ValidationReport r;
    r.errors.push_back(e.what());
    return r;
  } catch (const InvalidArgument& e) {
    ValidationReport r;
    r.errors.push_back(e.what());
    return r;
  }
}

}  // namespace shortmeas::cli
