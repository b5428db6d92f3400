#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hsar/sparse.hpp"

namespace hsar {

/// How the beta and (rho, sigma2_eps, sigma2_e) blocks are combined for
/// H-SAM.  H-SEM always uses the block-diagonal form.
enum class SeMode { joint, block };

struct SeOptions {
  SeMode mode = SeMode::joint;
  /// Relative finite-difference step for the variance-parameter Hessian.
  double fd_step = 1e-4;
};

struct StdErrors {
  Vector se_beta;
  double se_rho = 0.0;
  double se_sigma2_eps = 0.0;
  double se_sigma2_e = 0.0;
  DenseMatrix cov_beta;
  /// Observed information for (rho, sigma2_eps, sigma2_e).
  DenseMatrix info_zeta;
  /// H-SAM only: information between beta and rho.
  std::optional<Vector> cross_beta_rho;
  /// Step actually used after any shrinking.
  double fd_step = 0.0;
  SeMode mode = SeMode::joint;
  bool info_positive_definite = false;
  std::vector<std::string> warnings;
};

}  // namespace hsar
