#pragma once

// File formats: RFC-4180 CSV for data, key=value configuration files, and
// JSON serialization of results.

#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "hsar/bench.hpp"
#include "hsar/estimator.hpp"
#include "hsar/simulate.hpp"

namespace hsar {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  /// Physical line on which each row starts (1-based).
  std::vector<int> lines;
};

/// Header row required; every record must have as many fields as the header.
CsvTable read_csv(std::istream& in);
void write_csv_row(std::ostream& out, const std::vector<std::string>& fields);

/// Empty field, "NA" or "NaN".
bool is_missing_marker(std::string_view field);

/// Shortest text that parses back to the same double.
std::string format_double(double value);

struct CsvDatasetOptions {
  std::string response = "y";
  /// Prepend a column of ones to the covariates.
  bool intercept = true;
};

/// Response column by name; every other column is a covariate.
Dataset dataset_from_csv(const CsvTable& table, const CsvDatasetOptions& options = {});
Dataset read_dataset_csv(const std::string& path, const CsvDatasetOptions& options = {});

/// y (missing written as NA) followed by the non-intercept covariates x1...
void write_dataset_csv(std::ostream& out, const Dataset& data, bool has_intercept = true);

using Config = std::map<std::string, std::string>;

/// key = value lines; '#' starts a comment.  Duplicate keys are an error.
Config read_config(std::istream& in);
Config read_config_file(const std::string& path);
/// Throws InvalidArgument listing every key not in `allowed`.
void check_config_keys(const Config& config, const std::vector<std::string>& allowed);

nlohmann::json to_json(const Params& params);
nlohmann::json to_json(const StdErrors& se);
nlohmann::json to_json(const FitResult& fit);
nlohmann::json to_json(const SimConfig& config);
nlohmann::json to_json(const StudyReport& report);
nlohmann::json to_json(const BenchResult& result);

/// n, mean_time, sd, reps
void write_bench_csv(std::ostream& out, const BenchResult& result);

}  // namespace hsar
