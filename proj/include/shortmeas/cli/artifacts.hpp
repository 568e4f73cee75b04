#pragma once

// Artifact files: CSV series and sweeps, JSON derivative and reconstruction reports.
// Every writer has a matching reader; output depends only on the values written.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "shortmeas/shortmeas.hpp"

namespace shortmeas::cli {

using Json = nlohmann::ordered_json;

/// 17 significant digits, enough to round-trip any double.
std::string format_double(double v);

void write_timeseries_csv(std::ostream& out, const TimeSeries& s);
/// The unit column carries only the unit name; its scale comes from `scale`.
TimeSeries read_timeseries_csv(std::istream& in, double scale = 1.0);

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows);
std::vector<SweepRow> read_sweep_csv(std::istream& in);

Json to_json(const DerivativeReport& r);
DerivativeReport derivative_report_from_json(const Json& j);

/// {"label": ..., report fields...} entries under "reports".
struct LabeledReport {
  std::string label;
  DerivativeReport report;
};
Json derivatives_document(const std::vector<LabeledReport>& reports);
std::vector<LabeledReport> read_derivatives_document(const Json& j);

Json to_json(const QubitDensity& rho);
QubitDensity qubit_density_from_json(const Json& j);
Json to_json(const MeasurementSet& m);
MeasurementSet measurement_set_from_json(const Json& j);

/// Pretty-printed with a trailing newline.
std::string dump(const Json& j);
void write_file(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

}  // namespace shortmeas::cli
