#include "shortmeas/cli/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace shortmeas::cli {

namespace {

namespace pt = boost::property_tree;

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"experiment", {"kind", "seed", "shots", "output"}},
      {"model",
       {"omega_p", "omega_s", "omega_a", "detuning", "g_p", "g_s", "gamma", "Gamma", "nbar_b", "cutoff", "hamiltonian",
        "dissipation", "dispersive_detuning"}},
      {"probe", {"phi", "alpha_re", "alpha_im", "beta_re", "beta_im", "delta_p"}},
      {"mediator", {"state", "nbar", "n"}},
      {"system", {"rho11", "rho12_re", "rho12_im", "c1_re", "c1_im", "c2_re", "c2_im"}},
      {"grid", {"t_max", "samples", "unit"}},
      {"fit", {"degree", "window_lo", "window_hi"}},
      {"sweep", {"delta_p_min", "delta_p_max", "points"}},
      {"ion",
       {"rabi", "trap_frequency", "lamb_dicke", "laser_detuning", "laser_phase", "cutoff", "lamb_dicke_threshold",
        "initial_fock", "periods", "samples"}},
      {"noise", {"repetitions"}},
      {"integrator", {"method", "tolerance", "fixed_step", "cutoff_tolerance"}},
  };
  return keys;
}

class Reader {
 public:
  Reader(const pt::ptree& tree, std::string origin) : tree_(tree), origin_(std::move(origin)) {}

  bool has(const std::string& section, const std::string& key) const { return raw(section, key).has_value(); }

  std::optional<std::string> raw(const std::string& section, const std::string& key) const {
    const auto sec = tree_.get_child_optional(section);
    if (!sec) return std::nullopt;
    const auto v = sec->get_optional<std::string>(key);
    if (!v) return std::nullopt;
    return *v;
  }

  [[noreturn]] void fail(const std::string& section, const std::string& key, const std::string& what) const {
    throw ConfigError(fmt::format("{}: [{}] {}: {}", origin_, section, key, what));
  }

  std::optional<double> number(const std::string& section, const std::string& key) const {
    const auto v = raw(section, key);
    if (!v) return std::nullopt;
    double out = 0.0;
    const char* b = v->data();
    const char* e = b + v->size();
    const auto res = std::from_chars(b, e, out);
    if (res.ec != std::errc() || res.ptr != e || !std::isfinite(out))
      fail(section, key, fmt::format("expected a number, got '{}'", *v));
    return out;
  }

  template <class Int>
  std::optional<Int> integer(const std::string& section, const std::string& key) const {
    const auto v = raw(section, key);
    if (!v) return std::nullopt;
    Int out{};
    const char* b = v->data();
    const char* e = b + v->size();
    const auto res = std::from_chars(b, e, out);
    if (res.ec != std::errc() || res.ptr != e) fail(section, key, fmt::format("expected an integer, got '{}'", *v));
    return out;
  }

  void set(double& target, const std::string& section, const std::string& key) const {
    if (auto v = number(section, key)) target = *v;
  }
  void set(int& target, const std::string& section, const std::string& key) const {
    if (auto v = integer<int>(section, key)) target = *v;
  }
  void set(std::size_t& target, const std::string& section, const std::string& key) const {
    if (auto v = integer<std::size_t>(section, key)) target = *v;
  }

  template <class E>
  std::optional<E> choice(const std::string& section, const std::string& key,
                          const std::vector<std::pair<std::string, E>>& options) const {
    const auto v = raw(section, key);
    if (!v) return std::nullopt;
    for (const auto& [name, value] : options)
      if (*v == name) return value;
    std::string allowed;
    for (const auto& [name, value] : options) allowed += (allowed.empty() ? "" : ", ") + name;
    fail(section, key, fmt::format("'{}' is not one of: {}", *v, allowed));
  }

  void check_unknown() const {
    for (const auto& [section, child] : tree_) {
      const auto it = known_keys().find(section);
      if (it == known_keys().end()) {
        if (child.empty() && !child.data().empty())
          throw ConfigError(fmt::format("{}: key '{}' outside any section", origin_, section));
        throw ConfigError(fmt::format("{}: unknown section [{}]", origin_, section));
      }
      for (const auto& [key, value] : child)
        if (!it->second.contains(key)) fail(section, key, "unknown key");
    }
  }

  const std::string& origin() const { return origin_; }

 private:
  const pt::ptree& tree_;
  std::string origin_;
};

const std::vector<std::pair<std::string, ExperimentKind>> kKinds{
    {"simulate", ExperimentKind::simulate},   {"derivatives", ExperimentKind::derivatives},
    {"reconstruct", ExperimentKind::reconstruct}, {"sweep", ExperimentKind::sweep},
    {"figure3", ExperimentKind::figure3},     {"figure4", ExperimentKind::figure4},
    {"ion-check", ExperimentKind::ion_check}, {"noise-study", ExperimentKind::noise_study},
};

const std::vector<std::pair<std::string, HamiltonianKind>> kHamiltonians{
    {"tripartite", HamiltonianKind::tripartite},
    {"dispersive", HamiltonianKind::dispersive},
    {"zero", HamiltonianKind::zero},
    {"collective", HamiltonianKind::collective},
};

const std::vector<std::pair<std::string, DissipationKind>> kDissipations{
    {"none", DissipationKind::none},
    {"bath", DissipationKind::bath},
};

const std::vector<std::pair<std::string, TimeUnitKind>> kUnits{
    {"tau", TimeUnitKind::resonant},
    {"tau_eff", TimeUnitKind::dispersive},
    {"tau_gamma", TimeUnitKind::collective},
    {"t", TimeUnitKind::lab},
};

template <class E>
std::string name_of(const std::vector<std::pair<std::string, E>>& options, E value) {
  for (const auto& [name, v] : options)
    if (v == value) return name;
  return "?";
}

}  // namespace

std::string to_string(ExperimentKind k) { return name_of(kKinds, k); }
std::string to_string(HamiltonianKind k) { return name_of(kHamiltonians, k); }

ProbeState ProbeSpec::state() const {
  switch (form) {
    case ProbeForm::phase: return ProbeState::plus(phi);
    case ProbeForm::inversion: return ProbeState::from_inversion(delta_p, phi);
    case ProbeForm::amplitudes: return ProbeState::from_amplitudes(alpha, beta);
  }
  return {};
}

QState MediatorSpec::state(double nbar, int cutoff) const {
  return kind == MediatorKind::thermal ? thermal_state(nbar, cutoff) : fock_state(fock, cutoff);
}

ExperimentConfig defaults_for(ExperimentKind kind) {
  ExperimentConfig c;
  c.kind = kind;
  switch (kind) {
    case ExperimentKind::figure3: {
      const Figure3Config f;
      c.model = f.params;
      c.system = f.system;
      c.fit = {f.fit_degree, FitWindow{0.0, f.fit_window}};
      c.integrator = f.integrator;
      break;
    }
    case ExperimentKind::figure4: {
      const Figure4Config f;
      c.model = f.params;
      c.system = f.system;
      break;
    }
    case ExperimentKind::noise_study: {
      const NoiseStudyConfig f;
      c.model = f.params;
      c.system = f.system;
      c.fit = {f.degree, FitWindow{0.0, f.window}};
      c.grid = {f.window, f.samples, TimeUnitKind::dispersive};
      c.shots = f.shots;
      c.seed = f.seed;
      c.repetitions = f.repetitions;
      break;
    }
    default: break;
  }
  return c;
}

ExperimentConfig parse_config(const std::string& text, const std::string& origin) {
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(fmt::format("{}:{}: {}", origin, e.line(), e.message()));
  }
  const Reader r(tree, origin);
  r.check_unknown();

  const auto kind = r.choice("experiment", "kind", kKinds);
  if (!kind) r.fail("experiment", "kind", "missing required key");
  ExperimentConfig c = defaults_for(*kind);

  if (auto v = r.integer<long long>("experiment", "shots")) {
    if (*v < 1) r.fail("experiment", "shots", "must be a positive integer");
    c.shots = *v;
  }
  if (auto v = r.integer<std::uint64_t>("experiment", "seed")) c.seed = *v;
  if (auto v = r.raw("experiment", "output")) c.output = *v;

  // model
  auto& m = c.model;
  const double default_detuning = m.detuning();
  r.set(m.omega_p, "model", "omega_p");
  r.set(m.omega_s, "model", "omega_s");
  r.set(m.g_p, "model", "g_p");
  r.set(m.g_s, "model", "g_s");
  r.set(m.bath_rate, "model", "gamma");
  r.set(m.collective_rate, "model", "Gamma");
  r.set(m.bath_nbar, "model", "nbar_b");
  r.set(m.cutoff, "model", "cutoff");
  r.set(m.mediator_nbar, "mediator", "nbar");
  const auto omega_a = r.number("model", "omega_a");
  const auto detuning = r.number("model", "detuning");
  if (omega_a) m.omega_a = *omega_a;
  if (detuning) {
    if (omega_a && std::abs((m.omega_p - *omega_a) - *detuning) > 1e-12)
      r.fail("model", "detuning", fmt::format("{} disagrees with omega_p - omega_a = {}", *detuning, m.omega_p - *omega_a));
    m.set_detuning(*detuning);
  } else if (!omega_a) {
    m.set_detuning(default_detuning);  // a shifted omega_p keeps the kind's detuning
  }
  if (auto v = r.choice("model", "hamiltonian", kHamiltonians)) c.hamiltonian = *v;
  if (auto v = r.choice("model", "dissipation", kDissipations)) c.dissipation = *v;
  r.set(c.dispersive_detuning, "model", "dispersive_detuning");
  try {
    m.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(fmt::format("{}: [model] {}", origin, e.what()));
  }
  if (c.hamiltonian == HamiltonianKind::collective && c.dissipation == DissipationKind::bath)
    r.fail("model", "dissipation", "the collective model has no mediator to couple to a bath");
  if (c.dispersive_detuning == 0.0) r.fail("model", "dispersive_detuning", "must be nonzero");

  // probe
  const bool amplitudes = r.has("probe", "alpha_re") || r.has("probe", "alpha_im") || r.has("probe", "beta_re") ||
                          r.has("probe", "beta_im");
  r.set(c.probe.phi, "probe", "phi");
  if (amplitudes) {
    if (r.has("probe", "delta_p") || r.has("probe", "phi"))
      r.fail("probe", "alpha_re", "give either amplitudes or phi/delta_p, not both");
    c.probe.form = ProbeForm::amplitudes;
    c.probe.alpha = {r.number("probe", "alpha_re").value_or(0.0), r.number("probe", "alpha_im").value_or(0.0)};
    c.probe.beta = {r.number("probe", "beta_re").value_or(0.0), r.number("probe", "beta_im").value_or(0.0)};
    if (std::abs(std::norm(c.probe.alpha) + std::norm(c.probe.beta) - 1.0) > 1e-12)
      r.fail("probe", "alpha_re", "amplitudes must satisfy |alpha|^2 + |beta|^2 = 1");
  } else if (auto d = r.number("probe", "delta_p")) {
    if (std::abs(*d) > 1.0) r.fail("probe", "delta_p", "must lie in [-1, 1]");
    c.probe.form = ProbeForm::inversion;
    c.probe.delta_p = *d;
  }

  // mediator
  if (auto v = r.choice("mediator", "state",
                        std::vector<std::pair<std::string, MediatorKind>>{{"thermal", MediatorKind::thermal},
                                                                          {"fock", MediatorKind::fock}}))
    c.mediator.kind = *v;
  r.set(c.mediator.fock, "mediator", "n");
  if (c.mediator.fock < 0) r.fail("mediator", "n", "must be >= 0");

  // system
  const bool density = r.has("system", "rho11") || r.has("system", "rho12_re") || r.has("system", "rho12_im");
  const bool vector = r.has("system", "c1_re") || r.has("system", "c1_im") || r.has("system", "c2_re") ||
                      r.has("system", "c2_im");
  if (density && vector) r.fail("system", "rho11", "give either rho11/rho12 or c1/c2, not both");
  if (density) {
    if (!r.has("system", "rho11")) r.fail("system", "rho11", "missing required key");
    const double rho11 = *r.number("system", "rho11");
    const cplx rho12{r.number("system", "rho12_re").value_or(0.0), r.number("system", "rho12_im").value_or(0.0)};
    c.system = QubitDensity::unchecked(rho11, 1.0 - rho11, rho12);
    if (!c.system.is_physical()) r.fail("system", "rho11", "rho11, rho12 do not form a density matrix");
  } else if (vector) {
    const cplx c1{r.number("system", "c1_re").value_or(0.0), r.number("system", "c1_im").value_or(0.0)};
    const cplx c2{r.number("system", "c2_re").value_or(0.0), r.number("system", "c2_im").value_or(0.0)};
    if (std::norm(c1) + std::norm(c2) == 0.0) r.fail("system", "c1_re", "state vector is zero");
    c.system = QubitDensity::from_pure(c1, c2);
  } else if (c.kind == ExperimentKind::reconstruct || c.kind == ExperimentKind::sweep) {
    r.fail("system", "rho11", "missing required key (or c1_re/c2_re)");
  }

  // grid and fit
  const bool needs_grid = c.kind == ExperimentKind::simulate || c.kind == ExperimentKind::derivatives;
  if (needs_grid && !r.has("grid", "t_max")) r.fail("grid", "t_max", "missing required key");
  if (needs_grid && !r.has("grid", "samples")) r.fail("grid", "samples", "missing required key");
  r.set(c.grid.t_max, "grid", "t_max");
  r.set(c.grid.samples, "grid", "samples");
  if (auto v = r.choice("grid", "unit", kUnits)) c.grid.unit = *v;
  if (needs_grid || r.has("grid", "t_max")) {
    if (!(c.grid.t_max > 0.0)) r.fail("grid", "t_max", "must be positive");
    if (c.grid.samples < 2) r.fail("grid", "samples", "need at least 2 samples");
  }
  r.set(c.fit.degree, "fit", "degree");
  if (c.fit.degree < 1 || c.fit.degree > 12) r.fail("fit", "degree", "must lie in 1..12");
  const auto lo = r.number("fit", "window_lo");
  const auto hi = r.number("fit", "window_hi");
  if (lo.has_value() != hi.has_value()) r.fail("fit", lo ? "window_hi" : "window_lo", "missing required key");
  if (lo) {
    if (!(*hi > *lo)) r.fail("fit", "window_hi", "must exceed window_lo");
    c.fit.window = FitWindow{*lo, *hi};
  }

  // sweep
  r.set(c.sweep.lo, "sweep", "delta_p_min");
  r.set(c.sweep.hi, "sweep", "delta_p_max");
  r.set(c.sweep.points, "sweep", "points");
  if (c.sweep.points < 2) r.fail("sweep", "points", "need at least 2 points");
  if (!(c.sweep.lo < c.sweep.hi)) r.fail("sweep", "delta_p_max", "must exceed delta_p_min");
  if (c.sweep.lo < -1.0 || c.sweep.hi > 1.0) r.fail("sweep", "delta_p_min", "range must lie within [-1, 1]");

  // ion
  auto& ip = c.ion;
  r.set(ip.rabi, "ion", "rabi");
  r.set(ip.trap_frequency, "ion", "trap_frequency");
  r.set(ip.lamb_dicke, "ion", "lamb_dicke");
  r.set(ip.laser_detuning, "ion", "laser_detuning");
  r.set(ip.laser_phase, "ion", "laser_phase");
  r.set(ip.cutoff, "ion", "cutoff");
  r.set(ip.lamb_dicke_threshold, "ion", "lamb_dicke_threshold");
  r.set(c.ion_initial_fock, "ion", "initial_fock");
  r.set(c.ion_periods, "ion", "periods");
  r.set(c.ion_samples, "ion", "samples");
  try {
    ip.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(fmt::format("{}: [ion] {}", origin, e.what()));
  }
  if (c.ion_initial_fock < 0) r.fail("ion", "initial_fock", "must be >= 0");
  if (!(c.ion_periods > 0.0)) r.fail("ion", "periods", "must be positive");
  if (c.ion_samples < 2) r.fail("ion", "samples", "need at least 2 samples");

  r.set(c.repetitions, "noise", "repetitions");
  if (c.repetitions < 2) r.fail("noise", "repetitions", "need at least 2 repetitions");

  if (auto v = r.choice("integrator", "method",
                        std::vector<std::pair<std::string, Method>>{{"dormand-prince", Method::dormand_prince},
                                                                    {"rk4", Method::rk4_fixed}}))
    c.integrator.method = *v;
  r.set(c.integrator.tolerance, "integrator", "tolerance");
  r.set(c.integrator.fixed_step, "integrator", "fixed_step");
  r.set(c.cutoff_tolerance, "integrator", "cutoff_tolerance");
  if (!(c.integrator.tolerance > 0.0)) r.fail("integrator", "tolerance", "must be positive");
  if (c.integrator.fixed_step < 0.0) r.fail("integrator", "fixed_step", "must be >= 0");
  if (!(c.cutoff_tolerance > 0.0)) r.fail("integrator", "cutoff_tolerance", "must be positive");

  // a grid in tau_eff or tau_gamma needs the matching rate
  if (needs_grid) {
    if (c.grid.unit == TimeUnitKind::dispersive && m.detuning() == 0.0)
      r.fail("grid", "unit", "tau_eff needs a nonzero detuning");
    if (c.grid.unit == TimeUnitKind::collective && !(m.collective_rate > 0.0))
      r.fail("grid", "unit", "tau_gamma needs Gamma > 0");
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot read config file '{}'", path.string()));
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), path.string());
}

TimeUnit grid_unit(const ExperimentConfig& c) {
  switch (c.grid.unit) {
    case TimeUnitKind::resonant: return TimeUnit::resonant(c.model.g_p);
    case TimeUnitKind::dispersive: return TimeUnit::dispersive(c.model.g_p, c.model.detuning());
    case TimeUnitKind::collective: return TimeUnit::collective(c.model.collective_rate);
    case TimeUnitKind::lab: return TimeUnit::lab();
  }
  return TimeUnit::lab();
}

nlohmann::ordered_json to_json(const ExperimentConfig& c) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["experiment"] = {{"kind", to_string(c.kind)},
                     {"seed", c.seed},
                     {"shots", c.shots ? ordered_json(*c.shots) : ordered_json(nullptr)},
                     {"output", c.output}};
  const auto& m = c.model;
  j["model"] = {{"omega_p", m.omega_p},
                {"omega_s", m.omega_s},
                {"omega_a", m.omega_a},
                {"detuning", m.detuning()},
                {"g_p", m.g_p},
                {"g_s", m.g_s},
                {"gamma", m.bath_rate},
                {"Gamma", m.collective_rate},
                {"nbar_b", m.bath_nbar},
                {"cutoff", m.cutoff},
                {"hamiltonian", to_string(c.hamiltonian)},
                {"dissipation", name_of(kDissipations, c.dissipation)},
                {"dispersive_detuning", c.dispersive_detuning}};
  const ProbeState probe = c.probe.state();
  j["probe"] = {{"form", c.probe.form == ProbeForm::phase       ? "phase"
                         : c.probe.form == ProbeForm::inversion ? "inversion"
                                                                : "amplitudes"},
                {"alpha_re", probe.alpha.real()},
                {"alpha_im", probe.alpha.imag()},
                {"beta_re", probe.beta.real()},
                {"beta_im", probe.beta.imag()},
                {"phi", probe.phase()},
                {"delta_p", probe.inversion()}};
  j["mediator"] = {{"state", c.mediator.kind == MediatorKind::thermal ? "thermal" : "fock"},
                   {"nbar", m.mediator_nbar},
                   {"n", c.mediator.fock}};
  j["system"] = {{"rho11", c.system.rho11},
                 {"rho22", c.system.rho22},
                 {"rho12_re", c.system.rho12.real()},
                 {"rho12_im", c.system.rho12.imag()}};
  j["grid"] = {{"t_max", c.grid.t_max}, {"samples", c.grid.samples}, {"unit", name_of(kUnits, c.grid.unit)}};
  j["fit"] = {{"degree", c.fit.degree},
              {"window_lo", c.fit.window ? ordered_json(c.fit.window->lo) : ordered_json(nullptr)},
              {"window_hi", c.fit.window ? ordered_json(c.fit.window->hi) : ordered_json(nullptr)}};
  j["sweep"] = {{"delta_p_min", c.sweep.lo}, {"delta_p_max", c.sweep.hi}, {"points", c.sweep.points}};
  const auto& ip = c.ion;
  j["ion"] = {{"rabi", ip.rabi},
              {"trap_frequency", ip.trap_frequency},
              {"lamb_dicke", ip.lamb_dicke},
              {"laser_detuning", ip.laser_detuning},
              {"laser_phase", ip.laser_phase},
              {"cutoff", ip.cutoff},
              {"lamb_dicke_threshold", ip.lamb_dicke_threshold},
              {"initial_fock", c.ion_initial_fock},
              {"periods", c.ion_periods},
              {"samples", c.ion_samples}};
  j["noise"] = {{"repetitions", c.repetitions}};
  j["integrator"] = {{"method", std::string(shortmeas::to_string(c.integrator.method))},
                     {"tolerance", c.integrator.tolerance},
                     {"fixed_step", c.integrator.fixed_step},
                     {"cutoff_tolerance", c.cutoff_tolerance}};
  return j;
}

}  // namespace shortmeas::cli
