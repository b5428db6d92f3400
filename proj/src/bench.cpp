#include "hsar/bench.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <memory>
#include <numeric>
#include <random>

#include <Eigen/Core>

#include "hsar/errors.hpp"
#include "hsar/estimator.hpp"
#include "hsar/random.hpp"
#include "hsar/simulate.hpp"

namespace hsar {

namespace {

constexpr const char* kKernelNames[] = {"chol_AtA",       "solve_fb",   "direct_inverse", "lc_param_eval",
                                        "lc_direct_eval", "full_fit_P", "full_fit_D"};
constexpr double kBenchRho = 0.8;
constexpr double kBenchTheta = 0.5;

int grid_side(int n) {
  const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(n))));
  if (n < 4 || side * side != n)
    throw InvalidArgument("benchmark size " + std::to_string(n) + " is not a square grid size >= 4");
  return side;
}

// Keeps Eigen single-threaded for the lifetime of a timing run.
class SingleThreadScope {
 public:
  SingleThreadScope() : saved_(Eigen::nbThreads()) { Eigen::setNbThreads(1); }
  ~SingleThreadScope() { Eigen::setNbThreads(saved_); }
  SingleThreadScope(const SingleThreadScope&) = delete;
  SingleThreadScope& operator=(const SingleThreadScope&) = delete;

 private:
  int saved_;
};

}  // namespace

std::string to_string(Kernel kernel) { return kKernelNames[static_cast<int>(kernel)]; }

Kernel parse_kernel(std::string_view text) {
  for (int k = 0; k < 7; ++k) {
    const std::string_view name = kKernelNames[k];
    if (name.size() == text.size() &&
        std::equal(name.begin(), name.end(), text.begin(), [](char a, char b) {
          return std::tolower(static_cast<unsigned char>(a)) == std::tolower(static_cast<unsigned char>(b));
        }))
      return static_cast<Kernel>(k);
  }
  throw InvalidArgument("unknown kernel '" + std::string(text) + "'");
}

PowerLaw fit_power_law(const std::vector<int>& sizes, const std::vector<double>& times) {
  if (sizes.size() != times.size()) throw DimensionMismatch("sizes and times differ in length");
  if (sizes.size() < 2) throw InvalidArgument("need at least two sizes to fit a power law");
  const auto m = static_cast<Eigen::Index>(sizes.size());
  Eigen::MatrixXd D(m, 2);
  Eigen::VectorXd t(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    if (sizes[i] <= 0 || !(times[i] > 0.0)) throw InvalidArgument("sizes and times must be positive");
    D(i, 0) = 1.0;
    D(i, 1) = std::log(static_cast<double>(sizes[i]));
    t[i] = std::log(times[i]);
  }
  const Eigen::Vector2d coef = D.colPivHouseholderQr().solve(t);
  const Eigen::VectorXd resid = t - D * coef;
  const double ss_tot = (t.array() - t.mean()).square().sum();
  PowerLaw pl;
  pl.alpha = coef[1];
  pl.b = std::exp(coef[0]);
  pl.r_squared = ss_tot > 0.0 ? 1.0 - resid.squaredNorm() / ss_tot : 1.0;
  return pl;
}

int default_reps(int n) {
  const double r = 20.0 * std::sqrt(2500.0 / std::max(n, 1));
  return std::clamp(static_cast<int>(std::lround(r)), 5, 20);
}

BenchResult bench_callable(const std::string& name, const std::vector<int>& sizes, int reps,
                           const KernelSetup& setup) {
  if (sizes.empty()) throw InvalidArgument("no benchmark sizes given");
  for (std::size_t i = 1; i < sizes.size(); ++i)
    if (sizes[i] <= sizes[i - 1]) throw InvalidArgument("benchmark sizes must be strictly increasing");
  BenchResult out;
  out.kernel = name;
  const SingleThreadScope single;
  for (const int n : sizes) {
    std::function<void()> run;
    try {
      run = setup(n);
      run();  // warm-up
    } catch (const SizeGuard& e) {
      out.notes.push_back("n = " + std::to_string(n) + " skipped: " + e.what());
      continue;
    }
    const int r = reps > 0 ? std::max(reps, 5) : default_reps(n);
    std::vector<double> t(static_cast<std::size_t>(r));
    for (auto& ti : t) {
      const auto t0 = std::chrono::steady_clock::now();
      run();
      ti = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
    const double mean = std::accumulate(t.begin(), t.end(), 0.0) / r;
    double var = 0.0;
    for (const double ti : t) var += (ti - mean) * (ti - mean);
    out.sizes.push_back(n);
    out.times.push_back(mean);
    out.sd.push_back(r > 1 ? std::sqrt(var / (r - 1)) : 0.0);
    out.reps.push_back(r);
  }
  if (out.sizes.size() >= 2) {
    const PowerLaw pl = fit_power_law(out.sizes, out.times);
    out.alpha = pl.alpha;
    out.b = pl.b;
    out.r_squared = pl.r_squared;
  } else {
    out.notes.push_back("fewer than two sizes timed; no power law fitted");
  }
  return out;
}

BenchResult bench_kernel(Kernel kernel, const std::vector<int>& sizes, int reps, double missing_frac,
                         unsigned long long seed) {
  if (!(missing_frac >= 0.0 && missing_frac < 1.0)) throw InvalidArgument("missing_frac must lie in [0, 1)");
  const KernelSetup setup = [=](int n) -> std::function<void()> {
    const int side = grid_side(n);
    SimConfig cfg;
    cfg.grid = GridShape{side, side};
    cfg.missing_frac = missing_frac;
    cfg.rho = kBenchRho;
    cfg.seed = seed;
    const auto sw = std::make_shared<const SpatialWeights>(cfg.weights());
    switch (kernel) {
      case Kernel::chol_AtA: {
        auto structure = std::make_shared<const AtAStructure>(*sw);
        auto AtA = std::make_shared<const SparseMatrix>(structure->build(kBenchRho));
        return [structure, AtA] { (void)structure->factor(*AtA); };
      }
      case Kernel::solve_fb:
      case Kernel::direct_inverse: {
        if (kernel == Kernel::direct_inverse && n > kDirectInverseLimit)
          throw SizeGuard("dense inverse needs n^2 doubles; limit is n = " + std::to_string(kDirectInverseLimit));
        const AtAStructure structure(*sw);
        auto F = std::make_shared<const CholeskyFactor>(structure.factor(structure.build(kBenchRho)));
        if (kernel == Kernel::solve_fb) {
          Philox4x32 rng(seed, 7);
          std::normal_distribution<double> normal;
          auto b = std::make_shared<Vector>(n);
          for (int i = 0; i < n; ++i) (*b)[i] = normal(rng);
          return [F, b] { (void)solve_spd(*F, *b); };
        }
        return [F, n] { (void)solve_spd(*F, DenseMatrix(DenseMatrix::Identity(n, n))); };
      }
      case Kernel::lc_param_eval:
      case Kernel::lc_direct_eval: {
        const auto sim = simulate_one(cfg, *sw, 0);
        auto engine = std::make_shared<const MarginalLikelihood>(cfg.kind, sim.dataset, *sw, Ordering::amd,
                                                                 kDefaultUpdateCutoff, n);
        if (kernel == Kernel::lc_param_eval) return [engine] { (void)engine->param(kBenchRho, kBenchTheta); };
        return [engine] { (void)engine->direct(kBenchRho, kBenchTheta); };
      }
      case Kernel::full_fit_P:
      case Kernel::full_fit_D: {
        auto sim = std::make_shared<const SimulatedData>(simulate_one(cfg, *sw, 0));
        FitOptions fo;
        fo.method = kernel == Kernel::full_fit_P ? Method::MML_P : Method::MML_D;
        fo.standard_errors = false;
        fo.direct_cap = n;
        return [sim, sw, fo, kind = cfg.kind] { (void)fit(kind, sim->dataset, *sw, fo); };
      }
    }
    throw InvalidArgument("unknown kernel");
  };
  BenchResult out = bench_callable(to_string(kernel), sizes, reps, setup);
  out.missing_frac = missing_frac;
  return out;
}

}  // namespace hsar
