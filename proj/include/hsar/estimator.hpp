#pragma once

// Marginal maximum likelihood for H-SEM/H-SAM with missing responses.
//
// beta and omega are profiled out in closed form, leaving a concentrated
// log-likelihood in (rho, theta) that is maximized numerically.  Two
// evaluation paths are provided: a sparse one that never forms V_oo, and a
// direct one that builds V_oo densely and is kept as a cross-check and a
// timing baseline.

#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hsar/model.hpp"
#include "hsar/std_errors.hpp"

namespace hsar {

enum class Method { MML_P, MML_D, OML, FML };
enum class OptimizerKind { nelder_mead, golden_section_nested };

std::string to_string(Method method);
/// Accepts "mml-p", "mml_p", "mml-d", "oml", "fml" in any case.
Method parse_method(std::string_view text);

inline constexpr int kDefaultDirectCap = 4000;
/// theta estimates below this are flagged as sitting on the boundary.
inline constexpr double kThetaBoundary = 1e-8;
/// Default upper end of the theta search range (sigma2_eps >= 1e-6 sigma2_e).
inline constexpr double kThetaMax = 1e6;
/// Estimates within this many log units of the upper bound, or below
/// kThetaEdgeLow, are polished on the bound.
inline constexpr double kThetaEdgeWidth = 7.0;
inline constexpr double kThetaEdgeLow = 1e-3;

struct FitOptions {
  Method method = Method::MML_P;
  double tol = 1e-8;
  int max_evals = 500;
  OptimizerKind optimizer = OptimizerKind::nelder_mead;
  std::optional<std::pair<double, double>> rho_box;
  std::optional<std::pair<double, double>> theta_box;
  Ordering ordering = Ordering::amd;
  double update_cutoff = kDefaultUpdateCutoff;
  int direct_cap = kDefaultDirectCap;
  bool standard_errors = true;
  SeOptions se;

  void validate() const;
};

/// Value of the concentrated log-likelihood and the profiled estimates.
struct Concentrated {
  double lc = 0.0;
  Vector beta;
  double omega = 0.0;
  double logdet_Voo = 0.0;
  /// Xtilde_o^T V_oo^{-1} Xtilde_o.
  DenseMatrix xtvx;
};

struct FitTiming {
  double estimation_seconds = 0.0;
  double se_seconds = 0.0;
};

struct FitResult {
  ModelKind kind = ModelKind::HSEM;
  Method method = Method::MML_P;
  Params params;
  double sigma2_eps = 0.0;
  double sigma2_e = 0.0;
  double loglik = 0.0;
  int n_evals = 0;
  bool converged = false;
  bool theta_at_boundary = false;
  /// theta reached the top of its search range: sigma2_eps is effectively zero.
  bool theta_at_upper_bound = false;
  std::optional<StdErrors> se;
  /// Set when standard errors were requested but could not be computed.
  std::string se_error;
  FitTiming timing;
  /// Best concentrated log-likelihood after each evaluation.
  std::vector<double> trace;
  int n_obs = 0;
};

/// Per-dataset evaluator.  Holds the rho-independent structure of A^T A so
/// repeated evaluations only refactor numerically.
class MarginalLikelihood {
 public:
  MarginalLikelihood(ModelKind kind, const Dataset& data, const SpatialWeights& sw,
                     Ordering ordering = Ordering::amd,
                     double update_cutoff = kDefaultUpdateCutoff,
                     int direct_cap = kDefaultDirectCap);

  ModelKind kind() const noexcept { return kind_; }
  const Dataset& data() const noexcept { return data_; }
  const SpatialWeights& weights() const noexcept { return structure_.weights(); }
  const AtAStructure& structure() const noexcept { return structure_; }

  WorkingState state(double rho, double theta) const;

  Concentrated param(double rho, double theta) const;
  Concentrated direct(double rho, double theta) const;
  /// Complete data only, through A A^T instead of A^T A:
  /// V^{-1} = A^T (A A^T + theta I)^{-1} A.
  Concentrated complete(double rho, double theta) const;
  Concentrated evaluate(Method path, double rho, double theta) const;

  /// Marginal log-likelihood of y_o with beta held fixed.
  double loglik(double rho, double sigma2_eps, double sigma2_e, const Vector& beta) const;

  /// V_oo^{-1} Z for columns of observed length, by the Woodbury form
  /// on `state` (never forms V_oo).
  DenseMatrix apply_Voo_inverse(const WorkingState& state, const DenseMatrix& Z) const;

 private:
  ModelKind kind_;
  Dataset data_;
  AtAStructure structure_;
  double update_cutoff_;
  int direct_cap_;
  Vector y_o_;
};

Concentrated lc_param(ModelKind kind, double rho, double theta, const Dataset& data,
                      const SpatialWeights& sw);
Concentrated lc_direct(ModelKind kind, double rho, double theta, const Dataset& data,
                       const SpatialWeights& sw, int direct_cap = kDefaultDirectCap);

/// Dispatches on options.method.
FitResult fit(ModelKind kind, const Dataset& data, const SpatialWeights& sw,
              const FitOptions& options = {});
/// Fits the observed units alone, as if complete, on observed_weights().
FitResult fit_oml(ModelKind kind, const Dataset& data, const SpatialWeights& sw,
                  const FitOptions& options = {});
/// Complete-data maximum likelihood.  Throws MissingDataPresent.
FitResult fit_fml(ModelKind kind, const Dataset& data, const SpatialWeights& sw,
                  const FitOptions& options = {});

/// W restricted to the observed units; rows are re-normalized when `sw`
/// was row-normalized.
SpatialWeights observed_weights(const SpatialWeights& sw, std::span<const int> obs_idx);

/// Maps between (rho, theta) and the unconstrained search coordinates.
struct InternalCoordinates {
  double rho_lo, rho_hi;
  double log_theta_lo = -30.0, log_theta_hi = std::log(kThetaMax);

  std::pair<double, double> to_params(double a, double b) const;
  std::pair<double, double> to_internal(double rho, double theta) const;
};

}  // namespace hsar
