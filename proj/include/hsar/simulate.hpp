#pragma once

// Synthetic data from H-SEM/H-SAM on Rook lattices and the replicate-study
// driver that summarizes estimator behaviour across many datasets.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hsar/estimator.hpp"
#include "hsar/grid.hpp"
#include "hsar/model.hpp"
#include "hsar/weights.hpp"

namespace hsar {

inline constexpr const char* kRngName = "philox4x32-10";

struct SimConfig {
  ModelKind kind = ModelKind::HSEM;
  GridShape grid{71, 71};
  bool normalize = true;
  Vector beta = (Vector(2) << 1.0, 5.0).finished();
  double rho = 0.8;
  double sigma2_eps = 2.0;
  double sigma2_e = 1.0;
  double missing_frac = 0.5;
  int n_replicates = 250;
  std::uint64_t seed = 20240101;

  int n() const noexcept { return grid.size(); }
  /// round(missing_frac * n).
  int n_missing() const noexcept;
  void validate() const;
  SpatialWeights weights() const;
};

struct SimulatedData {
  Dataset dataset;
  /// Complete response before masking.
  Vector y_full;
  Vector z;
  /// Spatial error term (H-SEM only).
  std::optional<Vector> u;
  Vector eps;
  Vector e;
  Params truth;
};

/// Replicate `replicate` of the configured design.  Deterministic in
/// (seed, replicate).  X has an intercept column followed by standard-normal
/// covariates, one per extra entry of beta.
SimulatedData simulate_one(const SimConfig& config, const SpatialWeights& sw, int replicate);
SimulatedData simulate_one(const SimConfig& config, int replicate);

struct ParamSummary {
  std::string name;
  double truth = 0.0;
  double mean = 0.0;
  double mse = 0.0;
  double mean_se = 0.0;
  /// Share of 95% Wald intervals covering the truth, over replicates with a
  /// finite standard error.
  double coverage = 0.0;
  int n = 0;
  int n_se = 0;
};

struct ReplicateRecord {
  int replicate = 0;
  bool ok = false;
  std::string error;
  bool converged = false;
  bool info_positive_definite = false;
  /// beta..., rho, sigma2_eps, sigma2_e
  std::vector<double> estimates;
  std::vector<double> std_errors;
  double fit_seconds = 0.0;
  double se_seconds = 0.0;
};

struct MethodSummary {
  Method method = Method::MML_P;
  int n_success = 0;
  int n_failed = 0;
  int n_not_converged = 0;
  int n_info_pd = 0;
  int n_with_se = 0;
  double mean_fit_seconds = 0.0;
  double mean_se_seconds = 0.0;
  std::vector<ParamSummary> params;
  std::vector<ReplicateRecord> replicates;
};

struct StudyOptions {
  /// 0 uses the OpenMP default.
  int threads = 0;
  FitOptions fit;
};

struct StudyReport {
  SimConfig config;
  std::vector<MethodSummary> methods;
  std::string rng = kRngName;
  double wall_seconds = 0.0;
};

/// Parameter names in report order: beta0.., rho, sigma2_eps, sigma2_e.
std::vector<std::string> parameter_names(int n_beta);

StudyReport run_study(const SimConfig& config, const std::vector<Method>& methods,
                      const StudyOptions& options = {});

/// Aggregates per-replicate records into a summary (exposed for testing).
MethodSummary summarize(Method method, const std::vector<double>& truth,
                        std::vector<ReplicateRecord> records);

/// Fixed-width table with one row per parameter and one column group per
/// method: mean (MSE), mean se, coverage.
std::string format_table(const StudyReport& report);

}  // namespace hsar
