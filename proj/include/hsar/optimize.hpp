#pragma once

// Derivative-free minimizers used for the (rho, theta) search.

#include <functional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace hsar {

struct OptimResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int n_evals = 0;
  bool converged = false;
  /// Best value after each evaluation; nonincreasing.
  std::vector<double> trace;
};

struct NelderMeadOptions {
  /// Stop when |f_worst - f_best| <= reltol * (|f_best| + reltol) ...
  double reltol = 1e-8;
  /// ... and every vertex lies within xtol of the best one (max norm).
  double xtol = 1e-7;
  int max_evals = 500;
  double initial_step = 0.5;
  /// Fresh simplexes built around the optimum after convergence.
  int polish_restarts = 2;
};

using Objective = std::function<double(const Eigen::VectorXd&)>;

/// Minimizes f.  Non-finite values are treated as +infinity.
OptimResult nelder_mead(const Objective& f, const Eigen::VectorXd& x0,
                        const NelderMeadOptions& options = {});

struct GoldenSectionOptions {
  double xtol = 1e-6;
  int max_evals = 20000;
};

/// Golden-section search over the first coordinate in [lo1, hi1], each
/// point minimized over the second coordinate in [lo2, hi2] by an inner
/// golden-section search.
OptimResult golden_section_nested(const Objective& f, std::pair<double, double> outer,
                                  std::pair<double, double> inner,
                                  const GoldenSectionOptions& options = {});

}  // namespace hsar
