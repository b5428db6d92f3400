#include "hsar/simulate.hpp"

#include <chrono>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

#include <omp.h>

#include "hsar/errors.hpp"
#include "hsar/random.hpp"

namespace hsar {

int SimConfig::n_missing() const noexcept {
  return static_cast<int>(std::lround(missing_frac * n()));
}

void SimConfig::validate() const {
  if (grid.rows < 1 || grid.cols < 1) throw InvalidArgument("grid dimensions must be >= 1");
  if (beta.size() < 1) throw InvalidArgument("beta must have at least the intercept");
  if (!(missing_frac >= 0.0 && missing_frac < 1.0)) throw InvalidArgument("missing_frac must lie in [0, 1)");
  if (n_replicates < 1) throw InvalidArgument("n_replicates must be >= 1");
  if (!(sigma2_eps >= 0.0) || !(sigma2_e >= 0.0)) throw InvalidArgument("variances must be >= 0");
  if (!beta.allFinite() || !std::isfinite(rho)) throw InvalidArgument("parameters must be finite");
  const auto sw = weights();
  if (!sw.contains(rho))
    throw InvalidArgument("rho = " + std::to_string(rho) + " outside admissible interval (" +
                          std::to_string(sw.rho_lo) + ", " + std::to_string(sw.rho_hi) + ")");
}

SpatialWeights SimConfig::weights() const { return rook_grid(grid.rows, grid.cols, normalize); }

SimulatedData simulate_one(const SimConfig& config, const SpatialWeights& sw, int replicate) {
  config.validate();
  const int n = config.n();
  if (sw.size() != n) throw DimensionMismatch("weights do not match the configured grid");
  if (replicate < 0) throw InvalidArgument("replicate index must be >= 0");
  Philox4x32 rng(config.seed, static_cast<std::uint64_t>(replicate));

  // The mask comes first so it cannot depend on any later draw.
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  const int k = config.n_missing();
  for (int i = 0; i < k; ++i) {
    std::uniform_int_distribution<int> pick(i, n - 1);
    std::swap(order[i], order[pick(rng)]);
  }
  std::vector<bool> observed(static_cast<std::size_t>(n), true);
  for (int i = 0; i < k; ++i) observed[order[i]] = false;

  std::normal_distribution<double> normal(0.0, 1.0);
  const auto p = config.beta.size();
  DenseMatrix X(n, p);
  X.col(0).setOnes();
  for (Eigen::Index c = 1; c < p; ++c)
    for (int i = 0; i < n; ++i) X(i, c) = normal(rng);
  Vector e(n), eps(n);
  for (int i = 0; i < n; ++i) e[i] = normal(rng);
  for (int i = 0; i < n; ++i) eps[i] = normal(rng);
  e *= std::sqrt(config.sigma2_e);
  eps *= std::sqrt(config.sigma2_eps);

  const AtAStructure structure(sw);
  const SparseMatrix A = build_A(sw, config.rho);
  const CholeskyFactor F = structure.factor(structure.build(config.rho));
  const Vector xb = X * config.beta;

  Vector z;
  std::optional<Vector> u;
  if (config.kind == ModelKind::HSEM) {
    u = apply_A_inverse(A, F, DenseMatrix(e)).col(0);
    z = xb + *u;
  } else {
    z = apply_A_inverse(A, F, DenseMatrix(xb + e)).col(0);
  }
  Vector y_full = z + eps;
  const double theta = config.sigma2_eps > 0.0 ? config.sigma2_e / config.sigma2_eps : 0.0;
  Params truth{config.beta, config.rho, config.sigma2_eps, theta};
  Dataset data(y_full, std::move(observed), std::move(X));
  return SimulatedData{std::move(data), std::move(y_full), std::move(z), std::move(u),
                       std::move(eps), std::move(e), std::move(truth)};
}

SimulatedData simulate_one(const SimConfig& config, int replicate) {
  return simulate_one(config, config.weights(), replicate);
}

std::vector<std::string> parameter_names(int n_beta) {
  std::vector<std::string> names;
  for (int k = 0; k < n_beta; ++k) names.push_back("beta" + std::to_string(k));
  names.insert(names.end(), {"rho", "sigma2_eps", "sigma2_e"});
  return names;
}

MethodSummary summarize(Method method, const std::vector<double>& truth,
                        std::vector<ReplicateRecord> records) {
  MethodSummary s;
  s.method = method;
  const auto names = parameter_names(static_cast<int>(truth.size()) - 3);
  s.params.resize(truth.size());
  for (std::size_t k = 0; k < truth.size(); ++k) {
    s.params[k].name = names[k];
    s.params[k].truth = truth[k];
  }
  double fit_time = 0.0, se_time = 0.0;
  for (const auto& r : records) {
    if (!r.ok) {
      ++s.n_failed;
      continue;
    }
    ++s.n_success;
    if (!r.converged) ++s.n_not_converged;
    if (r.info_positive_definite) ++s.n_info_pd;
    if (!r.std_errors.empty()) ++s.n_with_se;
    fit_time += r.fit_seconds;
    se_time += r.se_seconds;
    for (std::size_t k = 0; k < truth.size(); ++k) {
      auto& ps = s.params[k];
      const double est = r.estimates[k];
      ps.mean += est;
      ps.mse += (est - truth[k]) * (est - truth[k]);
      ++ps.n;
      if (k < r.std_errors.size() && std::isfinite(r.std_errors[k])) {
        const double se = r.std_errors[k];
        ps.mean_se += se;
        if (std::abs(est - truth[k]) <= 1.959963984540054 * se) ps.coverage += 1.0;
        ++ps.n_se;
      }
    }
  }
  for (auto& ps : s.params) {
    if (ps.n > 0) {
      ps.mean /= ps.n;
      ps.mse /= ps.n;
    }
    if (ps.n_se > 0) {
      ps.mean_se /= ps.n_se;
      ps.coverage /= ps.n_se;
    }
  }
  if (s.n_success > 0) {
    s.mean_fit_seconds = fit_time / s.n_success;
    s.mean_se_seconds = se_time / s.n_success;
  }
  s.replicates = std::move(records);
  return s;
}

StudyReport run_study(const SimConfig& config, const std::vector<Method>& methods,
                      const StudyOptions& options) {
  if (methods.empty()) throw InvalidArgument("run_study needs at least one method");
  config.validate();
  options.fit.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const SpatialWeights sw = config.weights();
  const int R = config.n_replicates;
  std::vector<std::vector<ReplicateRecord>> records(methods.size(),
                                                    std::vector<ReplicateRecord>(static_cast<std::size_t>(R)));
  const int threads = options.threads > 0 ? options.threads : omp_get_max_threads();

#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
  for (int r = 0; r < R; ++r) {
    std::optional<SimulatedData> sim;
    std::string sim_error;
    try {
      sim = simulate_one(config, sw, r);
    } catch (const std::exception& e) {
      sim_error = e.what();
    }
    for (std::size_t m = 0; m < methods.size(); ++m) {
      ReplicateRecord& rec = records[m][static_cast<std::size_t>(r)];
      rec.replicate = r;
      if (!sim) {
        rec.error = "simulation failed: " + sim_error;
        continue;
      }
      try {
        FitOptions fo = options.fit;
        fo.method = methods[m];
        const FitResult fr = fit(config.kind, sim->dataset, sw, fo);
        rec.ok = true;
        rec.converged = fr.converged;
        rec.fit_seconds = fr.timing.estimation_seconds;
        rec.se_seconds = fr.timing.se_seconds;
        rec.estimates.assign(fr.params.beta.data(), fr.params.beta.data() + fr.params.beta.size());
        rec.estimates.insert(rec.estimates.end(), {fr.params.rho, fr.sigma2_eps, fr.sigma2_e});
        if (fr.se) {
          rec.info_positive_definite = fr.se->info_positive_definite;
          rec.std_errors.assign(fr.se->se_beta.data(), fr.se->se_beta.data() + fr.se->se_beta.size());
          rec.std_errors.insert(rec.std_errors.end(),
                                {fr.se->se_rho, fr.se->se_sigma2_eps, fr.se->se_sigma2_e});
        } else if (!fr.se_error.empty()) {
          rec.error = "standard errors: " + fr.se_error;
        }
      } catch (const std::exception& e) {
        rec.ok = false;
        rec.error = e.what();
      }
    }
  }

  std::vector<double> truth(config.beta.data(), config.beta.data() + config.beta.size());
  truth.insert(truth.end(), {config.rho, config.sigma2_eps, config.sigma2_e});
  StudyReport report;
  report.config = config;
  for (std::size_t m = 0; m < methods.size(); ++m)
    report.methods.push_back(summarize(methods[m], truth, std::move(records[m])));
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

std::string format_table(const StudyReport& report) {
  std::ostringstream out;
  const auto& c = report.config;
  out << to_string(c.kind) << " study: grid " << c.grid.rows << "x" << c.grid.cols << " (n = " << c.n()
      << "), " << std::lround(100.0 * c.missing_frac) << "% missing, " << c.n_replicates
      << " replicates, seed " << c.seed << "\n\n";
  out << std::left << std::setw(12) << "parameter" << std::right << std::setw(8) << "truth";
  for (const auto& m : report.methods)
    out << " | " << std::setw(19) << (to_string(m.method) + " est (mse)") << std::setw(9) << "se"
        << std::setw(7) << "cover";
  out << '\n';
  if (report.methods.empty()) return out.str();
  out << std::fixed;
  for (std::size_t k = 0; k < report.methods.front().params.size(); ++k) {
    const auto& first = report.methods.front().params[k];
    out << std::left << std::setw(12) << first.name << std::right << std::setw(8) << std::setprecision(3)
        << first.truth;
    for (const auto& m : report.methods) {
      const auto& ps = m.params[k];
      std::ostringstream cell;
      cell << std::fixed << std::setprecision(4) << ps.mean << " (" << ps.mse << ")";
      out << " | " << std::setw(19) << cell.str() << std::setw(9) << std::setprecision(4);
      if (ps.n_se > 0)
        out << ps.mean_se << std::setw(7) << std::setprecision(3) << ps.coverage;
      else
        out << "-" << std::setw(7) << "-";
    }
    out << '\n';
  }
  out << '\n';
  for (const auto& m : report.methods) {
    out << to_string(m.method) << ": " << m.n_success << " fitted, " << m.n_failed << " failed, "
        << m.n_not_converged << " not converged, mean fit " << std::setprecision(4) << m.mean_fit_seconds
        << " s, mean se " << m.mean_se_seconds << " s\n";
    for (const auto& r : m.replicates)
      if (!r.error.empty()) out << "  replicate " << r.replicate << ": " << r.error << '\n';
  }
  return out.str();
}

}  // namespace hsar
