// shortmeas: run or validate an experiment configuration.

#include <iostream>

#include "CLI11.hpp"
#include "shortmeas/cli/runner.hpp"

namespace {

using namespace shortmeas;
using namespace shortmeas::cli;

enum Exit { ok = 0, failure = 1, config_error = 2, numerical_error = 3 };

int run_command(const std::string& path, const Overrides& o) {
  ExperimentConfig c;
  try {
    c = load_config(path);
    apply_overrides(c, o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return config_error;
  }
  try {
    const auto result = run_experiment(c, c.output);
    for (const auto& name : result.artifacts) std::cout << (std::filesystem::path(c.output) / name).string() << '\n';
    return ok;
  } catch (const IntegratorFailure& e) {
    std::cerr << "integrator failure: " << e.what() << '\n';
    return numerical_error;
  } catch (const FitFailure& e) {
    std::cerr << "fit failure: " << e.what() << '\n';
    return numerical_error;
  } catch (const CutoffTooSmall& e) {
    std::cerr << "cutoff too small: " << e.what() << '\n';
    return numerical_error;
  } catch (const InvalidArgument& e) {
    std::cerr << "invalid setting: " << e.what() << '\n';
    return config_error;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return failure;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Short-time indirect measurement simulator"};
  app.set_version_flag("--version", std::string(code_version()));
  app.require_subcommand(1);

  std::string path;
  Overrides o;
  auto add_overrides = [&](CLI::App* sub) {
    sub->add_option("config", path, "INI configuration file")->required();
    sub->add_option("--out", o.out, "output directory (overrides [experiment] output)");
    sub->add_option("--seed", o.seed, "random seed");
    sub->add_option("--shots", o.shots, "shots per time point");
    sub->add_option("--cutoff", o.cutoff, "Fock cutoff");
  };
  auto* run = app.add_subcommand("run", "run the experiment and write its artifacts");
  add_overrides(run);
  auto* validate = app.add_subcommand("validate", "parse the configuration and report physical-validity checks");
  add_overrides(validate);

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) return run_command(path, o);
  const auto report = validate_file(path, o);
  std::cout << report.text();
  return report.ok() ? ok : failure;
}
