#pragma once

// Experiment configuration: INI-style sections mapped onto the library's parameter records.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "shortmeas/shortmeas.hpp"

namespace shortmeas::cli {

/// Parse or validation failure; the message names the section and key.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ExperimentKind { simulate, derivatives, reconstruct, sweep, figure3, figure4, ion_check, noise_study };
enum class HamiltonianKind { tripartite, dispersive, zero, collective };
enum class DissipationKind { none, bath };
enum class MediatorKind { thermal, fock };
enum class ProbeForm { phase, amplitudes, inversion };

std::string to_string(ExperimentKind k);
std::string to_string(HamiltonianKind k);

struct ProbeSpec {
  ProbeForm form = ProbeForm::phase;
  double phi = 0.0;
  cplx alpha{1.0, 0.0};
  cplx beta{0.0, 0.0};
  double delta_p = 0.0;

  ProbeState state() const;
};

struct MediatorSpec {
  MediatorKind kind = MediatorKind::thermal;
  int fock = 0;

  QState state(double nbar, int cutoff) const;
};

struct GridSpec {
  double t_max = 0.0;  // in `unit`
  std::size_t samples = 0;
  TimeUnitKind unit = TimeUnitKind::resonant;
};

struct FitSpec {
  int degree = 4;
  std::optional<FitWindow> window;
};

struct SweepSpec {
  double lo = -0.2;
  double hi = 0.2;
  std::size_t points = 81;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::simulate;
  std::optional<long long> shots;
  std::uint64_t seed = 0;
  std::string output = "out";

  ModelParams model;
  HamiltonianKind hamiltonian = HamiltonianKind::tripartite;
  DissipationKind dissipation = DissipationKind::none;
  double dispersive_detuning = 30.0;  // readout detuning of reconstruct / sweep / figure4

  ProbeSpec probe;
  MediatorSpec mediator;
  QubitDensity system;

  GridSpec grid;
  FitSpec fit;
  SweepSpec sweep;

  IonParams ion;
  int ion_initial_fock = 1;
  double ion_periods = 1.0;
  std::size_t ion_samples = 401;

  int repetitions = 100;  // noise study
  IntegratorOptions integrator;
  double cutoff_tolerance = 1e-6;
};

/// Defaults of each experiment kind before the file is applied.
ExperimentConfig defaults_for(ExperimentKind kind);

/// Parses INI text; `origin` labels error messages (usually the file path).
ExperimentConfig parse_config(const std::string& text, const std::string& origin = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);

/// Every resolved setting, in a fixed key order.
nlohmann::ordered_json to_json(const ExperimentConfig& c);

/// Physical unit scale of the configured grid (tau = scale * t).
TimeUnit grid_unit(const ExperimentConfig& c);

}  // namespace shortmeas::cli
