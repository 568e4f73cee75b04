#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "shortmeas/cli/artifacts.hpp"
#include "shortmeas/cli/config.hpp"

namespace shortmeas::cli {

std::string_view code_version();

/// Command-line overrides applied on top of the file.
struct Overrides {
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<long long> shots;
  std::optional<int> cutoff;
};

void apply_overrides(ExperimentConfig& c, const Overrides& o);

struct RunResult {
  std::vector<std::string> artifacts;  // file names inside the output directory
  Json summary;
};

/// Runs the experiment and writes its artifacts plus run-manifest.json into `out_dir`.
RunResult run_experiment(const ExperimentConfig& c, const std::filesystem::path& out_dir);

struct ValidationReport {
  std::vector<std::string> errors;
  std::vector<std::string> warnings;
  std::vector<std::string> notes;

  bool ok() const { return errors.empty(); }
  std::string text() const;
};

/// Physical-validity checks of a parsed configuration; no simulation is run.
ValidationReport check_config(const ExperimentConfig& c);

/// Parses the file and checks it; parse problems become report errors.
ValidationReport validate_file(const std::filesystem::path& path, const Overrides& o = {});

}  // namespace shortmeas::cli
