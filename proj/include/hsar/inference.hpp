#pragma once

// Standard errors at a fitted optimum.  beta gets its closed-form
// covariance; (rho, sigma2_eps, sigma2_e) get a finite-difference observed
// information.  For H-SAM the beta-rho information is nonzero and the two
// blocks are combined before inversion unless block mode is requested.

#include <functional>

#include <Eigen/Dense>

#include "hsar/estimator.hpp"
#include "hsar/std_errors.hpp"

namespace hsar {

/// omega * (Xtilde_o^T V_oo^{-1} Xtilde_o)^{-1} at the fitted (rho, theta).
DenseMatrix cov_beta(ModelKind kind, const FitResult& fit, const Dataset& data, const SpatialWeights& sw);
DenseMatrix cov_beta(const MarginalLikelihood& engine, const FitResult& fit);

struct HessianResult {
  Eigen::Matrix3d hessian;
  /// Relative step actually used.
  double step = 0.0;
};

/// Central-difference Hessian of f at x, symmetrized.  Steps are
/// rel_step * max(|x_i|, 1e-3); if any stencil point is rejected by
/// `valid` or evaluates to a non-finite value, all steps are halved, up to
/// eight times, before NonFiniteLikelihood is thrown.
HessianResult fd_hessian(const std::function<double(const Eigen::Vector3d&)>& f,
                         const Eigen::Vector3d& x, double rel_step,
                         const std::function<bool(const Eigen::Vector3d&)>& valid = {});

/// Hessian of the negative marginal log-likelihood in
/// (rho, sigma2_eps, sigma2_e), beta held at its estimate.
HessianResult observed_info_zeta(const MarginalLikelihood& engine, const FitResult& fit,
                                 double fd_step = 1e-4);
DenseMatrix observed_info_zeta(ModelKind kind, const FitResult& fit, const Dataset& data,
                               const SpatialWeights& sw, double fd_step = 1e-4);

/// H-SAM information between beta and rho:
/// (1/sigma2_eps) Xtilde_o^T V_oo^{-1} (A^{-1} W A^{-1} X)_o beta.
Vector cross_beta_rho(const MarginalLikelihood& engine, const FitResult& fit);

StdErrors standard_errors(const MarginalLikelihood& engine, const FitResult& fit,
                          const SeOptions& options = {});
StdErrors standard_errors(ModelKind kind, const FitResult& fit, const Dataset& data,
                          const SpatialWeights& sw, const SeOptions& options = {});

}  // namespace hsar
