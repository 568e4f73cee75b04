// Acceptance run: one PASS/FAIL line per criterion, followed by indented details.
// Exit status is nonzero when any criterion fails.

#include <chrono>
#include <cstdio>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "oracles.hpp"
#include "shortmeas/shortmeas.hpp"

using namespace shortmeas;

namespace {

constexpr double kPi = std::numbers::pi;

struct Outcome {
  bool pass = true;
  std::vector<std::string> details;

  void check(bool ok, std::string what) {
    pass = pass && ok;
    details.push_back(fmt::format("{} {}", ok ? "ok  " : "MISS", what));
  }
  void note(std::string what) { details.push_back("note " + what); }
};

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// Physicality reports gathered from every trajectory the criteria below integrate.
PhysicalityReport g_physicality;
std::size_t g_trajectories = 0;

void track(const PhysicalityReport& r) {
  g_physicality.merge(r);
  ++g_trajectories;
}

QubitDensity random_qubit(std::mt19937_64& rng) { return QubitDensity::from_matrix(oracle::random_density(2, rng)); }

// ---------------------------------------------------------------------------

Outcome dispersive_readout() {
  Outcome o;
  Figure3Config c;
  c.params.cutoff = 30;
  Stopwatch clock;
  const auto r = figure3(c);
  const double elapsed = clock.seconds();
  track(r.physicality);

  o.check(std::abs(r.closed_form - 0.98) <= 1e-6, fmt::format("closed form rho22 - rho11 = {:.12f} (target 0.98, tol 1e-6)", r.closed_form));
  o.check(std::abs(r.effective_exact.value(2) - 0.98) <= 1e-6,
          fmt::format("effective model exact second derivative = {:.12f}", r.effective_exact.value(2)));
  const double fit = r.ab_initio_fit.value(2);
  o.check(std::abs(fit - 0.975) <= 0.015, fmt::format("ab-initio polynomial fit = {:.6f} (target 0.975 +/- 0.015)", fit));
  o.check(elapsed <= 120.0, fmt::format("runtime {:.1f} s at cutoff {} (limit 120 s)", elapsed, r.cutoff.cutoff));
  o.note(fmt::format("effective-model fit over two periods = {:.6f}; ab-initio samples = {}; cutoff change {:.2g}",
                     r.effective_fit.value(2), r.ab_initio_samples, r.cutoff.difference));
  return o;
}

Outcome inversion_sweep() {
  Outcome o;
  Stopwatch clock;
  const auto r = figure4(Figure4Config{});
  const double elapsed = clock.seconds();

  const SweepRow* at_001 = nullptr;
  std::vector<const SweepRow*> window;
  for (const auto& row : r.rows) {
    if (std::abs(row.delta_p - 0.01) < 1e-9) at_001 = &row;
    if (std::abs(row.delta_p) <= 0.1 + 1e-12) window.push_back(&row);
  }
  o.check(at_001 != nullptr && at_001->infidelity < 0.01,
          fmt::format("1 - F at delta_p = 0.01 is {:.3e} (limit 1e-2)", at_001 ? at_001->infidelity : NAN));

  // continuity: every curve finite, and no step between neighbours larger than 5x the mean step
  auto curve_ok = [&](auto get, const char* name) {
    std::vector<double> v;
    for (const auto* row : window) {
      const std::optional<double> x = get(*row);
      if (!x || !std::isfinite(*x)) {
        o.check(false, fmt::format("{} undefined or not finite at delta_p = {}", name, row->delta_p));
        return;
      }
      v.push_back(*x);
    }
    double mean = 0.0, worst = 0.0;
    for (std::size_t i = 1; i < v.size(); ++i) {
      const double step = std::abs(v[i] - v[i - 1]);
      mean += step;
      worst = std::max(worst, step);
    }
    mean /= static_cast<double>(v.size() - 1);
    o.check(worst <= 5.0 * mean, fmt::format("{} finite on {} points, largest step {:.3e} vs mean step {:.3e}", name,
                                             v.size(), worst, mean));
  };
  curve_ok([](const SweepRow& s) { return s.eps_rho12; }, "eps_rho12");
  curve_ok([](const SweepRow& s) { return s.eps_rho22; }, "eps_rho22");
  curve_ok([](const SweepRow& s) { return std::optional<double>(s.infidelity); }, "1 - F");
  o.check(elapsed <= 60.0, fmt::format("runtime {:.1f} s (limit 60 s)", elapsed));
  o.note(fmt::format("1 - F nondecreasing in |delta_p|: {}; coherence signs ({:+}, {:+}); cutoff {}",
                     r.infidelity_monotone ? "yes" : "no", r.calibration.re, r.calibration.im, r.cutoff.cutoff));
  return o;
}

Outcome resonant_second_derivative() {
  Outcome o;
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst_exact = 0.0, worst_fd = 0.0;
  for (int k = 0; k < 50; ++k) {
    ModelParams p;
    p.mediator_nbar = 3.0 * u(rng);
    p.cutoff = minimum_thermal_cutoff(p.mediator_nbar, 1e-12);
    const auto system = random_qubit(rng);
    const auto probe = ProbeState::plus(2 * kPi * u(rng));
    const auto rho0 = tripartite_state(probe, thermal_state(p.mediator_nbar, p.cutoff), system);
    const Operator h = rotating_frame_hamiltonian(p, p.omega_a);
    const double closed = second_derivative_resonant(system, probe, p);
    const double exact = derivative_at_zero_exact(rho0, h, nullptr, 2, p.g_p);
    FiniteDifferenceOptions fd;
    fd.step = 0.01;
    const auto numeric = finite_difference_derivatives(Hamiltonian(h), rho0, p.g_p, probe_excited_projector(rho0.layout()), fd);
    worst_exact = std::max(worst_exact, std::abs(closed - exact));
    worst_fd = std::max(worst_fd, std::abs(numeric[2] - closed) / std::abs(closed));
  }
  o.check(worst_exact <= 1e-8, fmt::format("closed form vs exact adjoint: max abs difference {:.3e} (tol 1e-8)", worst_exact));
  o.check(worst_fd <= 1e-3,
          fmt::format("closed form vs Richardson finite differences: max relative difference {:.3e} (tol 1e-3)", worst_fd));
  return o;
}

Outcome bath_robustness() {
  Outcome o;
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst_d1 = 0.0, worst_d2 = 0.0, worst_rel = 0.0, worst_shift_formula = 0.0;
  int within = 0;
  std::vector<std::string> samples;
  for (int k = 0; k < 20; ++k) {
    ModelParams p;
    p.bath_rate = 0.2 * u(rng);
    p.bath_nbar = 3.0 * u(rng);
    p.mediator_nbar = 3.0 * u(rng);
    p.cutoff = minimum_thermal_cutoff(std::max(p.mediator_nbar, p.bath_nbar), 1e-12);
    const auto probe = ProbeState::from_inversion(2.0 * u(rng) - 1.0, 2 * kPi * u(rng));
    const auto system = random_qubit(rng);
    const auto rho0 = tripartite_state(probe, thermal_state(p.mediator_nbar, p.cutoff), system);
    const Operator h = rotating_frame_hamiltonian(p, p.omega_a);
    const auto bath = thermal_bath_generator(p);
    const auto pe = probe_excited_projector(rho0.layout());
    const auto with = exact_derivatives(rho0, h, &bath, 3, p.g_p, pe);
    const auto without = exact_derivatives(rho0, h, nullptr, 3, p.g_p, pe);
    worst_d1 = std::max(worst_d1, std::abs(with[1] - without[1]));
    worst_d2 = std::max(worst_d2, std::abs(with[2] - without[2]));
    const double shift = with[3] - without[3];
    const double predicted = third_derivative_bath_correction(probe, p);
    const double rel = std::abs(shift - predicted) / std::max(std::abs(shift), 1e-300);
    worst_rel = std::max(worst_rel, rel);
    within += rel <= 0.05;
    worst_shift_formula = std::max(worst_shift_formula, std::abs(shift - third_derivative_bath_shift(probe, p, without[2])));
    if (k < 3)
      samples.push_back(fmt::format("gamma {:.3f}, nbar_a {:.3f}, nbar_b {:.3f}, inversion {:+.3f}: shift {:+.6e}, "
                                    "published correction {:+.6e}",
                                    p.bath_rate, p.mediator_nbar, p.bath_nbar, probe.inversion(), shift, predicted));

    // a short Lindblad trajectory of the same instance for the physicality suite
    if (k < 4) {
      EvolutionOptions evo;
      const std::array<Operator, 1> obs{pe};
      track(evolve_recording(Hamiltonian(h), &bath, rho0, uniform_grid(2.0, 21, TimeUnit::resonant(p.g_p)), obs,
                             TimeUnit::resonant(p.g_p), evo)
                .physicality);
    }
  }
  o.check(worst_d1 < 1e-10, fmt::format("first derivative unchanged by the bath: max change {:.3e}", worst_d1));
  o.check(worst_d2 < 1e-10, fmt::format("second derivative unchanged by the bath: max change {:.3e}", worst_d2));
  o.check(within == 20, fmt::format("third-derivative shift equals the published correction within 5% in {}/20 "
                                    "instances (worst relative error {:.3g})",
                                    within, worst_rel));
  for (const auto& s : samples) o.note(s);
  o.note(fmt::format("the exact shift equals (gamma/g_p)[2(|beta|^2 - |alpha|^2)(nbar_a - nbar_b) - d2/2] to {:.2e}; "
                     "the published correction lacks the -d2/2 damping term, and its thermal term is -1/2 times the "
                     "exact one",
                     worst_shift_formula));
  return o;
}

Outcome collective_decay() {
  Outcome o;
  std::mt19937_64 rng(55);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ModelParams p;
  p.collective_rate = 1.0;
  const auto model = collective_decay_generator(p);
  double worst = 0.0;
  for (int k = 0; k < 20; ++k) {
    const auto system = random_qubit(rng);
    const double phi = 2 * kPi * u(rng);
    const auto rho0 = tensor({ProbeState::plus(phi).state(), system.state()});
    const double exact = derivative_at_zero_exact(rho0, model.free_hamiltonian, &model.generator, 2,
                                                  TimeUnit::collective(p.collective_rate).scale);
    worst = std::max(worst, std::abs(exact - second_derivative_collective(system, phi)));
    if (k < 4) {
      // rotating frame of the free Hamiltonian; the collective jump is covariant under it
      const auto unit = TimeUnit::collective(p.collective_rate);
      const std::array<Operator, 1> obs{probe_excited_projector(rho0.layout())};
      track(evolve_recording(Hamiltonian::zero(rho0.layout()), &model.generator, rho0, uniform_grid(3.0, 31, unit), obs,
                             unit)
                .physicality);
    }
  }
  o.check(worst <= 1e-8, fmt::format("closed form vs exact adjoint under collective decay: max difference {:.3e}", worst));
  return o;
}

Outcome ion_reduction() {
  Outcome o;
  IonCheckConfig c;
  c.ion.lamb_dicke = 0.05;
  const auto r = ion_check(c);
  track(r.physicality);
  o.check(r.max_deviation < 1e-2, fmt::format("eta = 0.05: max |P_D(full) - P_D(JC)| = {:.3e} over one period (limit 1e-2), "
                                              "cutoff {}",
                                              r.max_deviation, r.cutoff.cutoff));
  c.ion.lamb_dicke = 0.15;
  const auto wide = ion_check(c);
  track(wide.physicality);
  o.note(fmt::format("eta = 0.15: max deviation {:.3e} ({} than at eta = 0.05)", wide.max_deviation,
                     wide.max_deviation > r.max_deviation ? "larger" : "not larger"));
  return o;
}

Outcome physicality() {
  Outcome o;
  o.check(g_physicality.max_trace_deviation < 1e-8,
          fmt::format("max |Tr rho - 1| = {:.3e} over {} trajectories", g_physicality.max_trace_deviation, g_trajectories));
  o.check(g_physicality.min_eigenvalue > -1e-7, fmt::format("min eigenvalue = {:.3e}", g_physicality.min_eigenvalue));
  return o;
}

Outcome shot_noise() {
  Outcome o;
  const auto r = noise_study(NoiseStudyConfig{});
  track(r.physicality);
  o.check(r.stddev <= 0.05, fmt::format("std dev of the fitted second derivative over {} seeds at 1e4 shots = {:.4f} "
                                        "(limit 0.05)",
                                        r.estimates.size(), r.stddev));
  o.note(fmt::format("mean {:.4f}, noiseless fit {:.4f}, expected {:.4f}", r.mean, r.noiseless, r.expected));
  return o;
}

}  // namespace

int main() {
  std::vector<std::string> warnings;
  ScopedWarningHandler guard([&](std::string_view m) { warnings.emplace_back(m); });

  struct Criterion {
    int id;
    const char* name;
    Outcome (*run)();
  };
  const Criterion criteria[] = {
      {1, "dispersive readout of the population inversion", dispersive_readout},
      {2, "probe-inversion robustness sweep", inversion_sweep},
      {3, "resonant second derivative closed form", resonant_second_derivative},
      {4, "bath robustness of the derivatives", bath_robustness},
      {5, "collective-decay second derivative closed form", collective_decay},
      {6, "trapped-ion red-sideband reduction", ion_reduction},
      {7, "physicality of all trajectories", physicality},
      {8, "shot-noise spread of the fitted second derivative", shot_noise},
  };
  // physicality is summarized after every other criterion has run
  std::vector<std::pair<const Criterion*, Outcome>> results;
  for (const auto& c : criteria)
    if (c.id != 7) results.emplace_back(&c, c.run());
  results.emplace(results.begin() + 6, &criteria[6], physicality());

  bool all = true;
  for (const auto& [c, out] : results) {
    all = all && out.pass;
    std::printf("%s criterion %d: %s\n", out.pass ? "PASS" : "FAIL", c->id, c->name);
    for (const auto& d : out.details) std::printf("    %s\n", d.c_str());
  }
  for (const auto& w : warnings) std::printf("    warning: %s\n", w.c_str());
  std::fflush(stdout);
  return all ? 0 : 1;
}
