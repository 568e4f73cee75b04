#include "shortmeas/cli/artifacts.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace shortmeas::cli {

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s, std::size_t line) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw InvalidArgument(fmt::format("line {}: '{}' is not a number", line, s));
  return v;
}

std::optional<double> parse_optional(const std::string& s, std::size_t line) {
  if (s.empty()) return std::nullopt;
  return parse_double(s, line);
}

std::string format_optional(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

Json optional_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

std::optional<double> optional_from(const Json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

std::vector<std::string> read_rows(std::istream& in, const std::string& header) {
  std::string line;
  if (!std::getline(in, line) || line != header)
    throw InvalidArgument(fmt::format("expected CSV header '{}'", header));
  std::vector<std::string> rows;
  while (std::getline(in, line))
    if (!line.empty()) rows.push_back(line);
  return rows;
}

TimeUnitKind unit_kind(const std::string& name) {
  for (auto k : {TimeUnitKind::lab, TimeUnitKind::resonant, TimeUnitKind::dispersive, TimeUnitKind::collective})
    if (TimeUnit{k, 1.0}.name() == name) return k;
  throw InvalidArgument(fmt::format("unknown time unit '{}'", name));
}

DerivativeMethod method_from(const std::string& name) {
  for (auto m : {DerivativeMethod::exact_adjoint, DerivativeMethod::closed_form, DerivativeMethod::polynomial_fit})
    if (to_string(m) == name) return m;
  throw InvalidArgument(fmt::format("unknown derivative method '{}'", name));
}

Json unit_json(const TimeUnit& u) { return Json{{"name", std::string(u.name())}, {"scale", u.scale}}; }

TimeUnit unit_from(const Json& j) { return {unit_kind(j.at("name").get<std::string>()), j.at("scale").get<double>()}; }

}  // namespace

std::string format_double(double v) { return fmt::format("{:.17g}", v); }

void write_timeseries_csv(std::ostream& out, const TimeSeries& s) {
  out << "time,value,shots,unit\n";
  const std::string unit(s.unit.name());
  for (std::size_t i = 0; i < s.size(); ++i)
    out << format_double(s.times[i]) << ',' << format_double(s.values[i]) << ','
        << (s.exact() ? std::string() : std::to_string(s.shots[i])) << ',' << unit << '\n';
}

TimeSeries read_timeseries_csv(std::istream& in, double scale) {
  const auto rows = read_rows(in, "time,value,shots,unit");
  TimeSeries s;
  bool first = true;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto f = split(rows[i]);
    if (f.size() != 4) throw InvalidArgument(fmt::format("line {}: expected 4 fields, got {}", i + 2, f.size()));
    s.times.push_back(parse_double(f[0], i + 2));
    s.values.push_back(parse_double(f[1], i + 2));
    if (!f[2].empty()) s.shots.push_back(static_cast<long long>(parse_double(f[2], i + 2)));
    const TimeUnit u{unit_kind(f[3]), scale};
    if (first) s.unit = u;
    else if (!(u == s.unit)) throw InvalidArgument(fmt::format("line {}: mixed time units", i + 2));
    first = false;
  }
  if (!s.shots.empty() && s.shots.size() != s.times.size())
    throw InvalidArgument("shot counts must be given for every row or for none");
  return s;
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "delta_p,eps_rho12,eps_rho22,infidelity\n";
  for (const auto& r : rows)
    out << format_double(r.delta_p) << ',' << format_optional(r.eps_rho12) << ',' << format_optional(r.eps_rho22)
        << ',' << format_double(r.infidelity) << '\n';
}

std::vector<SweepRow> read_sweep_csv(std::istream& in) {
  const auto rows = read_rows(in, "delta_p,eps_rho12,eps_rho22,infidelity");
  std::vector<SweepRow> out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto f = split(rows[i]);
    if (f.size() != 4) throw InvalidArgument(fmt::format("line {}: expected 4 fields, got {}", i + 2, f.size()));
    SweepRow r;
    r.delta_p = parse_double(f[0], i + 2);
    r.eps_rho12 = parse_optional(f[1], i + 2);
    r.eps_rho22 = parse_optional(f[2], i + 2);
    r.infidelity = parse_double(f[3], i + 2);
    out.push_back(r);
  }
  return out;
}

Json to_json(const DerivativeReport& r) {
  Json j;
  j["method"] = std::string(to_string(r.method));
  j["unit"] = unit_json(r.unit);
  Json list = Json::array();
  for (const auto& d : r.derivatives)
    list.push_back(Json{{"order", d.order}, {"value", d.value}, {"uncertainty", optional_json(d.uncertainty)}});
  j["derivatives"] = std::move(list);
  if (r.fit) {
    const auto& f = *r.fit;
    j["fit"] = Json{{"degree", f.degree},
                    {"window_lo", f.window_lo},
                    {"window_hi", f.window_hi},
                    {"samples", f.samples},
                    {"shots", f.shots ? Json(*f.shots) : Json(nullptr)},
                    {"total_shots", f.total_shots},
                    {"condition_number", f.condition_number},
                    {"residual_rms", f.residual_rms},
                    {"shrink_steps", f.shrink_steps},
                    {"unit", unit_json(f.unit)}};
  } else {
    j["fit"] = nullptr;
  }
  return j;
}

DerivativeReport derivative_report_from_json(const Json& j) {
  DerivativeReport r;
  r.method = method_from(j.at("method").get<std::string>());
  r.unit = unit_from(j.at("unit"));
  for (const auto& d : j.at("derivatives"))
    r.derivatives.push_back({d.at("order").get<int>(), d.at("value").get<double>(), optional_from(d.at("uncertainty"))});
  if (const auto& f = j.at("fit"); !f.is_null()) {
    FitMetadata m;
    m.degree = f.at("degree").get<int>();
    m.window_lo = f.at("window_lo").get<double>();
    m.window_hi = f.at("window_hi").get<double>();
    m.samples = f.at("samples").get<std::size_t>();
    if (!f.at("shots").is_null()) m.shots = f.at("shots").get<long long>();
    m.total_shots = f.at("total_shots").get<long long>();
    m.condition_number = f.at("condition_number").get<double>();
    m.residual_rms = f.at("residual_rms").get<double>();
    m.shrink_steps = f.at("shrink_steps").get<int>();
    m.unit = unit_from(f.at("unit"));
    r.fit = m;
  }
  return r;
}

Json derivatives_document(const std::vector<LabeledReport>& reports) {
  Json list = Json::array();
  for (const auto& [label, report] : reports) {
    Json entry{{"label", label}};
    entry.update(to_json(report));
    list.push_back(std::move(entry));
  }
  return Json{{"reports", std::move(list)}};
}

std::vector<LabeledReport> read_derivatives_document(const Json& j) {
  std::vector<LabeledReport> out;
  for (const auto& e : j.at("reports")) out.push_back({e.at("label").get<std::string>(), derivative_report_from_json(e)});
  return out;
}

Json to_json(const QubitDensity& rho) {
  return Json{{"rho11", rho.rho11},
              {"rho22", rho.rho22},
              {"rho12_re", rho.rho12.real()},
              {"rho12_im", rho.rho12.imag()}};
}

QubitDensity qubit_density_from_json(const Json& j) {
  return QubitDensity::unchecked(j.at("rho11").get<double>(), j.at("rho22").get<double>(),
                                 {j.at("rho12_re").get<double>(), j.at("rho12_im").get<double>()});
}

Json to_json(const MeasurementSet& m) {
  auto one = [](const std::optional<Measurement>& x) {
    if (!x) return Json(nullptr);
    return Json{{"value", x->value},
                {"provenance", std::string(to_string(x->provenance))},
                {"uncertainty", optional_json(x->uncertainty)}};
  };
  return Json{{"d2_resonant_phi0", one(m.d2_resonant_phi0)},
              {"d2_resonant_phi90", one(m.d2_resonant_phi90)},
              {"d2_dispersive", one(m.d2_dispersive)}};
}

MeasurementSet measurement_set_from_json(const Json& j) {
  auto one = [](const Json& x) -> std::optional<Measurement> {
    if (x.is_null()) return std::nullopt;
    const auto prov = x.at("provenance").get<std::string>();
    if (prov != "exact" && prov != "fitted") throw InvalidArgument(fmt::format("unknown provenance '{}'", prov));
    return Measurement{x.at("value").get<double>(), prov == "exact" ? Provenance::exact : Provenance::fitted,
                       optional_from(x.at("uncertainty"))};
  };
  MeasurementSet m;
  m.d2_resonant_phi0 = one(j.at("d2_resonant_phi0"));
  m.d2_resonant_phi90 = one(j.at("d2_resonant_phi90"));
  m.d2_dispersive = one(j.at("d2_dispersive"));
  return m;
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
  out << content;
  if (!out) throw std::runtime_error(fmt::format("write to '{}' failed", path.string()));
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(fmt::format("cannot read '{}'", path.string()));
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace shortmeas::cli
