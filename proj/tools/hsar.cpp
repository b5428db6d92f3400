#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hsar/bench.hpp"
#include "hsar/errors.hpp"
#include "hsar/estimator.hpp"
#include "hsar/io.hpp"
#include "hsar/simulate.hpp"
#include "hsar/version.hpp"
#include "hsar/weights.hpp"

using namespace hsar;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInputError = 1;
constexpr int kExitNotConverged = 2;

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Path without a trailing ".json".
std::string stem_of(const std::string& path) {
  const std::string ext = ".json";
  if (path.size() > ext.size() && path.compare(path.size() - ext.size(), ext.size(), ext) == 0)
    return path.substr(0, path.size() - ext.size());
  return path;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot write '" + path + "'");
  out << text;
  if (!out) throw InvalidArgument("write failed for '" + path + "'");
}

void write_json(const std::string& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

GridShape parse_grid(const std::string& text) {
  const auto x = text.find_first_of("xX");
  try {
    if (x == std::string::npos) throw std::invalid_argument(text);
    std::size_t a = 0, b = 0;
    const int rows = std::stoi(text.substr(0, x), &a);
    const int cols = std::stoi(text.substr(x + 1), &b);
    if (a != x || b != text.size() - x - 1 || rows < 1 || cols < 1) throw std::invalid_argument(text);
    return {rows, cols};
  } catch (const std::logic_error&) {
    throw InvalidArgument("grid must be ROWSxCOLS with positive sizes, got '" + text + "'");
  }
}

Normalization parse_normalization(const std::string& text) {
  if (text == "row") return Normalization::row;
  if (text == "none") return Normalization::none;
  throw InvalidArgument("normalize must be 'row' or 'none', got '" + text + "'");
}

bool parse_on_off(const std::string& text, const std::string& what) {
  if (text == "on") return true;
  if (text == "off") return false;
  throw InvalidArgument(what + " must be 'on' or 'off', got '" + text + "'");
}

/// State shared by every subcommand: config file, manifest and outputs.
struct Run {
  std::vector<std::string> argv;
  std::string config_path;
  std::string manifest_path;
  std::string started = utc_now();
  std::optional<std::uint64_t> seed;
  std::vector<std::string> outputs;
  json echo = json::object();

  /// Applies config-file values to options not given on the command line.
  void apply_config(CLI::App& cmd) {
    if (config_path.empty()) return;
    const Config cfg = read_config_file(config_path);
    std::vector<std::string> allowed;
    for (const CLI::Option* opt : cmd.get_options()) {
      const std::string name = opt->get_single_name();
      if (!opt->get_lnames().empty() && name != "help" && name != "config" && name != "manifest")
        allowed.push_back(name);
    }
    check_config_keys(cfg, allowed);
    for (const auto& [key, value] : cfg) {
      CLI::Option* opt = cmd.get_option("--" + key);
      if (opt->count() > 0) continue;
      opt->add_result(value);
      opt->run_callback();
    }
  }

  void record_options(const CLI::App& cmd) {
    for (const CLI::Option* opt : cmd.get_options()) {
      if (opt->get_lnames().empty() || opt->get_single_name() == "help") continue;
      const auto& r = opt->results();
      if (!r.empty()) {
        echo[opt->get_single_name()] = r.size() == 1 ? json(r[0]) : json(r);
      } else if (!opt->get_default_str().empty()) {
        echo[opt->get_single_name()] = opt->get_default_str();
      }
    }
  }

  void write_manifest(int exit_code, const std::string& error) const {
    if (manifest_path.empty()) return;
    json m{{"schema_version", kSchemaVersion},
           {"tool", "hsar"},
           {"version", kVersion},
           {"command_line", argv},
           {"config_file", config_path.empty() ? json(nullptr) : json(config_path)},
           {"config", echo},
           {"seed", seed ? json(*seed) : json(nullptr)},
           {"started", started},
           {"finished", utc_now()},
           {"outputs", outputs},
           {"exit_code", exit_code}};
    if (!error.empty()) m["error"] = error;
    try {
      write_json(manifest_path, m);
    } catch (const Error& e) {
      std::cerr << "hsar: " << e.what() << "\n";
    }
  }
};

void add_common(CLI::App& cmd, Run& run) {
  cmd.add_option("--config", run.config_path, "key = value file; keys are long option names")
      ->check(CLI::ExistingFile);
  cmd.add_option("--manifest", run.manifest_path, "Run manifest path (default <out>.manifest.json)");
}

struct FitArgs {
  std::string model = "hsem";
  std::string method = "mml-p";
  std::string data;
  std::string weights;
  std::string grid;
  std::string normalize = "row";
  std::string response = "y";
  bool intercept = true;
  double tol = 1e-8;
  int max_evals = 500;
  std::string se = "on";
  std::string se_mode = "joint";
  int direct_cap = kDefaultDirectCap;
  std::string out = "fit.json";
};

struct SimArgs {
  std::string model = "hsem";
  std::string grid = "71x71";
  std::string normalize = "row";
  std::vector<double> beta{1.0, 5.0};
  double rho = 0.8;
  double sigma2_eps = 2.0;
  double sigma2_e = 1.0;
  double missing = 0.5;
  std::uint64_t seed = 20240101;
  int replicate = 0;
  int reps = 250;
  std::string out = "sim";
};

struct StudyArgs {
  SimArgs sim;
  std::vector<std::string> methods{"oml", "mml-p"};
  int threads = 0;
  std::string se = "on";
  double tol = 1e-8;
  std::string out = "study.json";
};

struct BenchArgs {
  std::string kernel = "lc_param_eval";
  std::vector<int> sizes{2500, 4900, 10000, 22500, 40000};
  int reps = 0;
  double missing = 0.5;
  std::uint64_t seed = 1;
  std::string out = "bench";
};

void add_sim_options(CLI::App& cmd, SimArgs& a) {
  cmd.add_option("--model", a.model, "hsem or hsam")->capture_default_str();
  cmd.add_option("--grid", a.grid, "Rook lattice ROWSxCOLS")->capture_default_str();
  cmd.add_option("--normalize", a.normalize, "row or none")->capture_default_str();
  cmd.add_option("--beta", a.beta, "Regression coefficients, intercept first")
      ->delimiter(',')
      ->capture_default_str();
  cmd.add_option("--rho", a.rho)->capture_default_str();
  cmd.add_option("--sigma2-eps", a.sigma2_eps, "Measurement-error variance")->capture_default_str();
  cmd.add_option("--sigma2-e", a.sigma2_e, "Spatial innovation variance")->capture_default_str();
  cmd.add_option("--missing", a.missing, "Missing fraction")->capture_default_str();
  cmd.add_option("--seed", a.seed)->capture_default_str();
}

SimConfig sim_config(const SimArgs& a) {
  SimConfig c;
  c.kind = parse_model_kind(a.model);
  c.grid = parse_grid(a.grid);
  c.normalize = parse_normalization(a.normalize) == Normalization::row;
  c.beta = Eigen::Map<const Vector>(a.beta.data(), static_cast<Eigen::Index>(a.beta.size()));
  c.rho = a.rho;
  c.sigma2_eps = a.sigma2_eps;
  c.sigma2_e = a.sigma2_e;
  c.missing_frac = a.missing;
  c.seed = a.seed;
  c.n_replicates = a.reps;
  return c;
}

void print_fit(const FitResult& f) {
  std::printf("model %s, method %s, n_obs %d\n", to_string(f.kind).c_str(), to_string(f.method).c_str(), f.n_obs);
  std::printf("%-12s %14s %14s\n", "parameter", "estimate", "std.error");
  const auto names = parameter_names(static_cast<int>(f.params.beta.size()));
  const int nb = static_cast<int>(f.params.beta.size());
  for (int k = 0; k < nb + 3; ++k) {
    double est = 0.0, se = std::nan("");
    if (k < nb) {
      est = f.params.beta[k];
      if (f.se) se = f.se->se_beta[k];
    } else if (k == nb) {
      est = f.params.rho;
      if (f.se) se = f.se->se_rho;
    } else if (k == nb + 1) {
      est = f.sigma2_eps;
      if (f.se) se = f.se->se_sigma2_eps;
    } else {
      est = f.sigma2_e;
      if (f.se) se = f.se->se_sigma2_e;
    }
    std::printf("%-12s %14.6g %14.6g\n", names[k].c_str(), est, se);
  }
  std::printf("log-likelihood %.10g, %d evaluations, %s\n", f.loglik, f.n_evals,
              f.converged ? "converged" : "NOT converged");
  if (f.theta_at_boundary) std::printf("note: variance ratio at its lower boundary\n");
  if (f.theta_at_upper_bound) std::printf("note: variance ratio at its upper bound (measurement error ~ 0)\n");
  if (!f.se_error.empty()) std::printf("standard errors unavailable: %s\n", f.se_error.c_str());
}

int cmd_fit(const FitArgs& a, Run& run) {
  if (a.data.empty()) throw InvalidArgument("--data is required");
  if (a.weights.empty() == a.grid.empty()) throw InvalidArgument("give exactly one of --weights or --grid");
  run.manifest_path = run.manifest_path.empty() ? stem_of(a.out) + ".manifest.json" : run.manifest_path;
  const ModelKind kind = parse_model_kind(a.model);
  FitOptions opt;
  opt.method = parse_method(a.method);
  opt.tol = a.tol;
  opt.max_evals = a.max_evals;
  opt.direct_cap = a.direct_cap;
  opt.standard_errors = parse_on_off(a.se, "se");
  if (a.se_mode == "joint") opt.se.mode = SeMode::joint;
  else if (a.se_mode == "block") opt.se.mode = SeMode::block;
  else throw InvalidArgument("se-mode must be 'joint' or 'block', got '" + a.se_mode + "'");
  opt.validate();
  const Normalization norm = parse_normalization(a.normalize);

  CsvDatasetOptions csv;
  csv.response = a.response;
  csv.intercept = a.intercept;
  const Dataset data = read_dataset_csv(a.data, csv);
  SpatialWeights sw;
  if (!a.weights.empty()) {
    sw = load_weights(a.weights, norm);
  } else {
    const GridShape g = parse_grid(a.grid);
    sw = rook_grid(g.rows, g.cols, norm == Normalization::row);
  }
  if (sw.size() != data.n())
    throw DimensionMismatch("data has " + std::to_string(data.n()) + " rows but W is " +
                            std::to_string(sw.size()) + " x " + std::to_string(sw.size()));

  const FitResult f = fit(kind, data, sw, opt);
  json j = to_json(f);
  j["inputs"] = {{"data", a.data}, {"weights", a.weights.empty() ? json(nullptr) : json(a.weights)},
                 {"grid", a.grid.empty() ? json(nullptr) : json(a.grid)}, {"normalize", a.normalize}};
  write_json(a.out, j);
  run.outputs.push_back(a.out);
  print_fit(f);
  return f.converged ? kExitOk : kExitNotConverged;
}

int cmd_simulate(const SimArgs& a, Run& run) {
  run.manifest_path = run.manifest_path.empty() ? a.out + ".manifest.json" : run.manifest_path;
  run.seed = a.seed;
  SimConfig c = sim_config(a);
  c.n_replicates = std::max(c.n_replicates, a.replicate + 1);
  c.validate();
  if (a.replicate < 0) throw InvalidArgument("replicate must be nonnegative");
  const SpatialWeights sw = c.weights();
  const SimulatedData s = simulate_one(c, sw, a.replicate);

  const std::string csv = a.out + ".csv", mtx = a.out + ".mtx", truth = a.out + ".truth.json";
  std::ostringstream data_text;
  write_dataset_csv(data_text, s.dataset, true);
  write_text(csv, data_text.str());
  // Binary adjacency; fit with the same --normalize recovers the simulation weights.
  write_matrix_market_file(mtx, rook_grid(c.grid.rows, c.grid.cols, false).W, true);
  json t{{"schema_version", kSchemaVersion},
         {"config", to_json(c)},
         {"replicate", a.replicate},
         {"truth", to_json(s.truth)},
         {"n", c.n()},
         {"n_obs", s.dataset.n_obs()},
         {"data", csv},
         {"weights", mtx}};
  write_json(truth, t);
  run.outputs = {csv, mtx, truth};
  std::printf("simulated %s on a %dx%d grid, replicate %d: %d observed of %d\n", to_string(c.kind).c_str(),
              c.grid.rows, c.grid.cols, a.replicate, s.dataset.n_obs(), c.n());
  std::printf("wrote %s, %s, %s\n", csv.c_str(), mtx.c_str(), truth.c_str());
  return kExitOk;
}

int cmd_study(const StudyArgs& a, Run& run) {
  run.manifest_path = run.manifest_path.empty() ? stem_of(a.out) + ".manifest.json" : run.manifest_path;
  run.seed = a.sim.seed;
  const SimConfig c = sim_config(a.sim);
  c.validate();
  std::vector<Method> methods;
  for (const auto& m : a.methods) methods.push_back(parse_method(m));
  if (a.threads < 0) throw InvalidArgument("threads must be nonnegative");
  StudyOptions so;
  so.threads = a.threads;
  so.fit.tol = a.tol;
  so.fit.standard_errors = parse_on_off(a.se, "se");
  const StudyReport r = run_study(c, methods, so);
  const std::string table = format_table(r);
  const std::string table_path = stem_of(a.out) + ".table.txt";
  write_json(a.out, to_json(r));
  write_text(table_path, table);
  run.outputs = {a.out, table_path};
  std::cout << table;
  std::printf("%.1f s wall\n", r.wall_seconds);
  return kExitOk;
}

int cmd_bench(const BenchArgs& a, Run& run) {
  run.manifest_path = run.manifest_path.empty() ? a.out + ".manifest.json" : run.manifest_path;
  run.seed = a.seed;
  const BenchResult b = bench_kernel(parse_kernel(a.kernel), a.sizes, a.reps, a.missing, a.seed);
  const std::string csv = a.out + ".csv", js = a.out + ".json";
  std::ostringstream text;
  write_bench_csv(text, b);
  write_text(csv, text.str());
  write_json(js, to_json(b));
  run.outputs = {csv, js};
  std::printf("%-8s %14s %12s %5s\n", "n", "mean_time_s", "sd_s", "reps");
  for (std::size_t k = 0; k < b.sizes.size(); ++k)
    std::printf("%-8d %14.6g %12.4g %5d\n", b.sizes[k], b.times[k], b.sd[k], b.reps[k]);
  for (const auto& note : b.notes) std::printf("note: %s\n", note.c_str());
  if (b.sizes.size() >= 2)
    std::printf("kernel %s: time ~ %.4g * n^%.3f (r^2 %.4f)\n", b.kernel.c_str(), b.b, b.alpha, b.r_squared);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  Run run;
  run.argv.assign(argv, argv + argc);

  CLI::App app{"Hierarchical spatial autoregressive models with missing responses"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  FitArgs fa;
  CLI::App* fit_cmd = app.add_subcommand("fit", "Fit a model to a data CSV");
  add_common(*fit_cmd, run);
  fit_cmd->add_option("--model", fa.model, "hsem or hsam")->capture_default_str();
  fit_cmd->add_option("--method", fa.method, "mml-p, mml-d, oml or fml")->capture_default_str();
  fit_cmd->add_option("--data", fa.data, "CSV with a header row; missing y as empty, NA or NaN");
  fit_cmd->add_option("--weights", fa.weights, "W as Matrix Market or neighbour list");
  fit_cmd->add_option("--grid", fa.grid, "Rook lattice ROWSxCOLS instead of --weights");
  fit_cmd->add_option("--normalize", fa.normalize, "row or none")->capture_default_str();
  fit_cmd->add_option("--response", fa.response, "Response column name")->capture_default_str();
  fit_cmd->add_option("--intercept", fa.intercept, "Prepend a column of ones")->capture_default_str();
  fit_cmd->add_option("--tol", fa.tol, "Optimizer relative tolerance")->capture_default_str();
  fit_cmd->add_option("--max-evals", fa.max_evals)->capture_default_str();
  fit_cmd->add_option("--se", fa.se, "on or off")->capture_default_str();
  fit_cmd->add_option("--se-mode", fa.se_mode, "joint or block")->capture_default_str();
  fit_cmd->add_option("--direct-cap", fa.direct_cap, "Largest n_obs accepted by mml-d")->capture_default_str();
  fit_cmd->add_option("--out", fa.out, "Result JSON")->capture_default_str();

  SimArgs sa;
  CLI::App* sim_cmd = app.add_subcommand("simulate", "Draw one synthetic dataset");
  add_common(*sim_cmd, run);
  add_sim_options(*sim_cmd, sa);
  sim_cmd->add_option("--replicate", sa.replicate, "Replicate index (random stream)")->capture_default_str();
  sim_cmd->add_option("--out", sa.out, "Output prefix: .csv, .mtx, .truth.json")->capture_default_str();

  StudyArgs ta;
  CLI::App* study_cmd = app.add_subcommand("study", "Replicate study comparing estimators");
  add_common(*study_cmd, run);
  add_sim_options(*study_cmd, ta.sim);
  study_cmd->add_option("--reps", ta.sim.reps, "Number of replicates")->capture_default_str();
  study_cmd->add_option("--methods", ta.methods, "Comma-separated estimators")
      ->delimiter(',')
      ->capture_default_str();
  study_cmd->add_option("--threads", ta.threads, "Worker threads (0: machine parallelism)")
      ->envname("HSAR_THREADS")
      ->capture_default_str();
  study_cmd->add_option("--se", ta.se, "on or off")->capture_default_str();
  study_cmd->add_option("--tol", ta.tol)->capture_default_str();
  study_cmd->add_option("--out", ta.out, "Report JSON; the table goes next to it")->capture_default_str();

  BenchArgs ba;
  CLI::App* bench_cmd = app.add_subcommand("bench", "Time a kernel over grid sizes");
  add_common(*bench_cmd, run);
  bench_cmd->add_option("--kernel", ba.kernel,
                        "chol_AtA, solve_fb, direct_inverse, lc_param_eval, lc_direct_eval, full_fit_P, full_fit_D")
      ->capture_default_str();
  bench_cmd->add_option("--sizes", ba.sizes, "Comma-separated perfect squares")->delimiter(',')->capture_default_str();
  bench_cmd->add_option("--reps", ba.reps, "Repetitions per size (0: 20 decaying to 5)")->capture_default_str();
  bench_cmd->add_option("--missing", ba.missing)->capture_default_str();
  bench_cmd->add_option("--seed", ba.seed)->capture_default_str();
  bench_cmd->add_option("--out", ba.out, "Output prefix: .csv, .json")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInputError;
  }

  CLI::App* cmd = app.get_subcommands().front();
  int code = kExitInputError;
  std::string error;
  try {
    run.apply_config(*cmd);
    run.record_options(*cmd);
    if (cmd == fit_cmd) code = cmd_fit(fa, run);
    else if (cmd == sim_cmd) code = cmd_simulate(sa, run);
    else if (cmd == study_cmd) code = cmd_study(ta, run);
    else code = cmd_bench(ba, run);
  } catch (const CLI::Error& e) {
    error = e.what();
  } catch (const Error& e) {
    error = e.what();
  } catch (const std::exception& e) {
    error = std::string("unexpected failure: ") + e.what();
  }
  if (!error.empty()) {
    std::cerr << "hsar " << cmd->get_name() << ": " << error << "\n";
    code = kExitInputError;
    if (run.manifest_path.empty()) {
      if (cmd == fit_cmd || cmd == study_cmd)
        run.manifest_path = stem_of(cmd == fit_cmd ? fa.out : ta.out) + ".manifest.json";
      else
        run.manifest_path = (cmd == sim_cmd ? sa.out : ba.out) + ".manifest.json";
    }
  }
  run.write_manifest(code, error);
  return code;
}
