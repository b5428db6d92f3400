#pragma once

// Empirical complexity: time a kernel over square Rook grids and fit
// log t = log b + alpha log n by least squares.

#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace hsar {

enum class Kernel { chol_AtA, solve_fb, direct_inverse, lc_param_eval, lc_direct_eval, full_fit_P, full_fit_D };

std::string to_string(Kernel kernel);
Kernel parse_kernel(std::string_view text);

/// direct_inverse materializes an n x n dense matrix; larger n is skipped.
inline constexpr int kDirectInverseLimit = 6400;

struct PowerLaw {
  double alpha = 0.0;
  double b = 0.0;
  double r_squared = 0.0;
};

/// Least squares on (log n, log t).
PowerLaw fit_power_law(const std::vector<int>& sizes, const std::vector<double>& times);

struct BenchResult {
  std::string kernel;
  std::vector<int> sizes;
  std::vector<double> times;  // mean seconds
  std::vector<double> sd;
  std::vector<int> reps;
  double missing_frac = 0.0;
  double alpha = 0.0;
  double b = 0.0;
  double r_squared = 0.0;
  /// Sizes that were skipped, with the reason.
  std::vector<std::string> notes;
};

/// 20 repetitions at small n, decaying to 5 at large n.
int default_reps(int n);

/// Builds the timed closure for a size; called once per size before timing.
using KernelSetup = std::function<std::function<void()>(int n)>;

/// Times `setup(n)()` reps times per size after one untimed warm-up run.
/// reps <= 0 selects default_reps.  A setup that throws SizeGuard skips the
/// size with a note.
BenchResult bench_callable(const std::string& name, const std::vector<int>& sizes, int reps,
                           const KernelSetup& setup);

/// Rook weights on a sqrt(n) x sqrt(n) grid, rho = 0.8, theta = 0.5.
BenchResult bench_kernel(Kernel kernel, const std::vector<int>& sizes, int reps, double missing_frac,
                         unsigned long long seed = 1);

}  // namespace hsar
