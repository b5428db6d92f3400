// Serial reference kernels against their OpenMP counterparts: the multi-RHS
// triangular solve and the replicate-parallel study driver.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <vector>

#include <omp.h>

#include <CLI11.hpp>

#include "hsar/cholesky.hpp"
#include "hsar/model.hpp"
#include "hsar/simulate.hpp"

using namespace hsar;

namespace {

double best_of(int reps, const std::function<void()>& f) {
  double best = INFINITY;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

}  // namespace

int main(int argc, char** argv) {
  int side = 100;
  int rhs = 64;
  int reps = 3;
  int threads = omp_get_max_threads();
  int study_side = 20;
  int study_reps = 8;
  CLI::App app{"Serial versus OpenMP kernels"};
  app.add_option("--side", side, "Grid side for the solve benchmark")->capture_default_str();
  app.add_option("--rhs", rhs, "Right-hand sides")->capture_default_str();
  app.add_option("--reps", reps, "Timing repetitions (best is reported)")->capture_default_str();
  app.add_option("--threads", threads, "OpenMP threads for the parallel runs")->capture_default_str();
  app.add_option("--study-side", study_side)->capture_default_str();
  app.add_option("--study-reps", study_reps)->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  const auto sw = rook_grid(side, side, true);
  const AtAStructure s(sw);
  const CholeskyFactor F = s.factor(s.build(0.8));
  std::mt19937_64 rng(1);
  std::normal_distribution<double> z;
  DenseMatrix B(sw.size(), rhs);
  for (Eigen::Index j = 0; j < B.cols(); ++j)
    for (Eigen::Index i = 0; i < B.rows(); ++i) B(i, j) = z(rng);

  DenseMatrix Xs, Xp;
  const double t_serial = best_of(reps, [&] { Xs = solve_spd(F, B); });
  omp_set_num_threads(threads);
  const double t_parallel = best_of(reps, [&] { Xp = solve_spd_parallel(F, B); });
  std::printf("solve n=%d rhs=%d: serial %.4f s, parallel(%d) %.4f s, speedup %.2f, max diff %.3g\n", sw.size(),
              rhs, t_serial, threads, t_parallel, t_serial / t_parallel, (Xs - Xp).cwiseAbs().maxCoeff());

  SimConfig c;
  c.grid = GridShape{study_side, study_side};
  c.n_replicates = study_reps;
  StudyOptions one, many;
  one.threads = 1;
  many.threads = threads;
  one.fit.standard_errors = many.fit.standard_errors = false;
  StudyReport a, b;
  const double t1 = best_of(1, [&] { a = run_study(c, {Method::MML_P}, one); });
  const double tn = best_of(1, [&] { b = run_study(c, {Method::MML_P}, many); });
  bool identical = true;
  for (std::size_t r = 0; r < a.methods[0].replicates.size(); ++r)
    identical = identical && a.methods[0].replicates[r].estimates == b.methods[0].replicates[r].estimates;
  std::printf("study n=%d reps=%d: 1 thread %.3f s, %d threads %.3f s, speedup %.2f, estimates %s\n", c.n(),
              study_reps, t1, threads, tn, t1 / tn, identical ? "identical" : "DIFFER");
  return identical && (Xs - Xp).cwiseAbs().maxCoeff() == 0.0 ? 0 : 1;
}
