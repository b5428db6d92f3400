#include "hsar/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>

#include "hsar/errors.hpp"
#include "hsar/version.hpp"

namespace hsar {

using nlohmann::json;

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double parse_number(const std::string& text, int line, const std::string& column) {
  const std::string t = trim(text);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
    throw ParseError("CSV line " + std::to_string(line) + ", column '" + column + "': '" + text +
                     "' is not a number");
  return v;
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json vector_json(const Vector& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(number_or_null(v[i]));
  return a;
}

json matrix_json(const DenseMatrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(vector_json(m.row(i).transpose()));
  return rows;
}

}  // namespace

CsvTable read_csv(std::istream& in) {
  CsvTable table;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false, field_quoted = false, any = false;
  int line = 1, record_line = 1;
  auto end_field = [&] {
    record.push_back(field);
    field.clear();
    field_quoted = false;
  };
  auto end_record = [&] {
    end_field();
    const bool blank = record.size() == 1 && record[0].empty();
    if (!blank) {
      if (table.header.empty() && table.rows.empty()) {
        table.header = record;
        for (auto& h : table.header) h = trim(h);
      } else {
        if (record.size() != table.header.size())
          throw ParseError("CSV line " + std::to_string(record_line) + ": expected " +
                           std::to_string(table.header.size()) + " fields, found " +
                           std::to_string(record.size()));
        table.rows.push_back(record);
        table.lines.push_back(record_line);
      }
    }
    record.clear();
  };
  char c;
  while (in.get(c)) {
    any = true;
    if (in_quotes) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field.push_back('"');
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    if (c == '"') {
      if (!field.empty() && trim(field).size() > 0)
        throw ParseError("CSV line " + std::to_string(line) + ": quote inside an unquoted field");
      field.clear();
      in_quotes = true;
      field_quoted = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\n') {
      end_record();
      record_line = ++line;
    } else if (c == '\r') {
      if (in.peek() != '\n') field.push_back(c);
    } else {
      if (field_quoted && c != ' ' && c != '\t')
        throw ParseError("CSV line " + std::to_string(line) + ": text after closing quote");
      if (!field_quoted) field.push_back(c);
    }
  }
  if (in_quotes) throw ParseError("CSV line " + std::to_string(record_line) + ": unterminated quoted field");
  if (!field.empty() || !record.empty()) end_record();
  if (!any || table.header.empty()) throw ParseError("CSV: missing header row");
  return table;
}

void write_csv_row(std::ostream& out, const std::vector<std::string>& fields) {
  for (std::size_t k = 0; k < fields.size(); ++k) {
    if (k) out << ',';
    const auto& f = fields[k];
    if (f.find_first_of(",\"\r\n") != std::string::npos) {
      out << '"';
      for (const char c : f) out << (c == '"' ? "\"\"" : std::string(1, c));
      out << '"';
    } else {
      out << f;
    }
  }
  out << '\n';
}

bool is_missing_marker(std::string_view field) {
  const std::string t = trim(field);
  return t.empty() || t == "NA" || t == "NaN";
}

std::string format_double(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  if (ec != std::errc()) throw InvalidArgument("cannot format number");
  return std::string(buf, ptr);
}

Dataset dataset_from_csv(const CsvTable& table, const CsvDatasetOptions& options) {
  int ycol = -1;
  for (std::size_t k = 0; k < table.header.size(); ++k)
    if (table.header[k] == options.response) ycol = static_cast<int>(k);
  if (ycol < 0) throw ParseError("CSV: no column named '" + options.response + "'");
  const auto n = static_cast<Eigen::Index>(table.rows.size());
  const auto ncov = static_cast<Eigen::Index>(table.header.size()) - 1 + (options.intercept ? 1 : 0);
  Vector y(n);
  std::vector<bool> mask(static_cast<std::size_t>(n));
  DenseMatrix X(n, ncov);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = table.rows[i];
    const int line = table.lines[i];
    Eigen::Index c = 0;
    if (options.intercept) X(i, c++) = 1.0;
    for (std::size_t k = 0; k < row.size(); ++k) {
      if (static_cast<int>(k) == ycol) {
        mask[i] = !is_missing_marker(row[k]);
        y[i] = mask[i] ? parse_number(row[k], line, table.header[k]) : std::nan("");
        if (mask[i] && !std::isfinite(y[i]))
          throw ParseError("CSV line " + std::to_string(line) + ": response is not finite");
      } else {
        if (is_missing_marker(row[k]))
          throw ParseError("CSV line " + std::to_string(line) + ", column '" + table.header[k] +
                           "': covariates may not be missing");
        X(i, c++) = parse_number(row[k], line, table.header[k]);
      }
    }
  }
  return Dataset(std::move(y), std::move(mask), std::move(X));
}

Dataset read_dataset_csv(const std::string& path, const CsvDatasetOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open data file '" + path + "'");
  return dataset_from_csv(read_csv(in), options);
}

void write_dataset_csv(std::ostream& out, const Dataset& data, bool has_intercept) {
  const int first = has_intercept ? 1 : 0;
  std::vector<std::string> fields{"y"};
  for (int c = first; c < data.n_cov(); ++c) fields.push_back("x" + std::to_string(c - first + 1));
  write_csv_row(out, fields);
  for (int i = 0; i < data.n(); ++i) {
    fields.assign(1, data.mask()[i] ? format_double(data.y()[i]) : "NA");
    for (int c = first; c < data.n_cov(); ++c) fields.push_back(format_double(data.X()(i, c)));
    write_csv_row(out, fields);
  }
}

Config read_config(std::istream& in) {
  Config cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ParseError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(std::string_view(t).substr(0, eq));
    const std::string value = trim(std::string_view(t).substr(eq + 1));
    if (key.empty()) throw ParseError("config line " + std::to_string(lineno) + ": empty key");
    if (!cfg.emplace(key, value).second)
      throw ParseError("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
  }
  return cfg;
}

Config read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config file '" + path + "'");
  return read_config(in);
}

void check_config_keys(const Config& config, const std::vector<std::string>& allowed) {
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  std::string bad;
  for (const auto& [k, v] : config)
    if (!ok.count(k)) bad += (bad.empty() ? "" : ", ") + k;
  if (bad.empty()) return;
  std::string valid;
  for (const auto& k : ok) valid += (valid.empty() ? "" : ", ") + k;
  throw InvalidArgument("unknown config keys: " + bad + " (valid keys: " + valid + ")");
}

json to_json(const Params& p) {
  return {{"beta", vector_json(p.beta)},
          {"rho", p.rho},
          {"omega", p.omega},
          {"theta", p.theta},
          {"sigma2_eps", p.sigma2_eps()},
          {"sigma2_e", p.sigma2_e()}};
}

json to_json(const StdErrors& se) {
  json j{{"se_beta", vector_json(se.se_beta)},
         {"se_rho", number_or_null(se.se_rho)},
         {"se_sigma2_eps", number_or_null(se.se_sigma2_eps)},
         {"se_sigma2_e", number_or_null(se.se_sigma2_e)},
         {"cov_beta", matrix_json(se.cov_beta)},
         {"info_zeta", matrix_json(se.info_zeta)},
         {"fd_step", se.fd_step},
         {"mode", se.mode == SeMode::joint ? "joint" : "block"},
         {"info_positive_definite", se.info_positive_definite},
         {"warnings", se.warnings}};
  j["cross_beta_rho"] = se.cross_beta_rho ? vector_json(*se.cross_beta_rho) : json(nullptr);
  return j;
}

json to_json(const FitResult& f) {
  json j{{"schema_version", kSchemaVersion},
         {"model", to_string(f.kind)},
         {"method", to_string(f.method)},
         {"params", to_json(f.params)},
         {"sigma2_eps", f.sigma2_eps},
         {"sigma2_e", f.sigma2_e},
         {"loglik", number_or_null(f.loglik)},
         {"n_evals", f.n_evals},
         {"n_obs", f.n_obs},
         {"converged", f.converged},
         {"theta_at_boundary", f.theta_at_boundary},
         {"theta_at_upper_bound", f.theta_at_upper_bound},
         {"timing", {{"estimation_seconds", f.timing.estimation_seconds},
                     {"se_seconds", f.timing.se_seconds}}}};
  j["se"] = f.se ? to_json(*f.se) : json(nullptr);
  if (!f.se_error.empty()) j["se_error"] = f.se_error;
  return j;
}

json to_json(const SimConfig& c) {
  return {{"model", to_string(c.kind)},
          {"grid", {c.grid.rows, c.grid.cols}},
          {"normalize", c.normalize},
          {"beta", vector_json(c.beta)},
          {"rho", c.rho},
          {"sigma2_eps", c.sigma2_eps},
          {"sigma2_e", c.sigma2_e},
          {"missing_frac", c.missing_frac},
          {"n_replicates", c.n_replicates},
          {"seed", c.seed},
          {"rng", kRngName}};
}

json to_json(const StudyReport& r) {
  json methods = json::array();
  for (const auto& m : r.methods) {
    json params = json::array();
    for (const auto& p : m.params)
      params.push_back({{"name", p.name},
                        {"truth", p.truth},
                        {"mean", number_or_null(p.mean)},
                        {"mse", number_or_null(p.mse)},
                        {"mean_se", p.n_se ? number_or_null(p.mean_se) : json(nullptr)},
                        {"coverage", p.n_se ? number_or_null(p.coverage) : json(nullptr)},
                        {"n", p.n},
                        {"n_se", p.n_se}});
    json failures = json::array();
    for (const auto& rec : m.replicates)
      if (!rec.error.empty()) failures.push_back({{"replicate", rec.replicate}, {"error", rec.error}});
    methods.push_back({{"method", to_string(m.method)},
                       {"n_success", m.n_success},
                       {"n_failed", m.n_failed},
                       {"n_not_converged", m.n_not_converged},
                       {"n_info_positive_definite", m.n_info_pd},
                       {"n_with_se", m.n_with_se},
                       {"mean_fit_seconds", m.mean_fit_seconds},
                       {"mean_se_seconds", m.mean_se_seconds},
                       {"params", params},
                       {"failures", failures}});
  }
  return {{"schema_version", kSchemaVersion},
          {"config", to_json(r.config)},
          {"rng", r.rng},
          {"wall_seconds", r.wall_seconds},
          {"methods", methods}};
}

json to_json(const BenchResult& b) {
  return {{"schema_version", kSchemaVersion},
          {"kernel", b.kernel},
          {"sizes", b.sizes},
          {"times", b.times},
          {"sd", b.sd},
          {"reps", b.reps},
          {"missing_frac", b.missing_frac},
          {"alpha", b.alpha},
          {"b", b.b},
          {"r_squared", b.r_squared},
          {"notes", b.notes}};
}

void write_bench_csv(std::ostream& out, const BenchResult& b) {
  write_csv_row(out, {"n", "mean_time", "sd", "reps"});
  for (std::size_t k = 0; k < b.sizes.size(); ++k)
    write_csv_row(out, {std::to_string(b.sizes[k]), format_double(b.times[k]), format_double(b.sd[k]),
                        std::to_string(b.reps[k])});
}

}  // namespace hsar
