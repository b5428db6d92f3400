#include <doctest.h>

#include <cmath>
#include <numeric>
#include <numbers>

#include "hsar/errors.hpp"
#include "hsar/estimator.hpp"
#include "hsar/simulate.hpp"
#include "oracle.hpp"

using namespace hsar;

namespace {

SimConfig small_config(ModelKind kind, int side, double missing, std::uint64_t seed, double rho = 0.6) {
  SimConfig c;
  c.kind = kind;
  c.grid = GridShape{side, side};
  c.missing_frac = missing;
  c.rho = rho;
  c.seed = seed;
  c.n_replicates = 1;
  return c;
}

double rel(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

FitOptions no_se(Method m) {
  FitOptions o;
  o.method = m;
  o.standard_errors = false;
  return o;
}

}  // namespace

TEST_CASE("lc_param and lc_direct agree") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 12; ++rep) {
    const auto kind = rep % 2 ? ModelKind::HSAM : ModelKind::HSEM;
    const double missing = std::array{0.0, 0.3, 0.5, 0.9}[rep % 4];
    const auto cfg = small_config(kind, 8 + rep % 5, missing, 1000 + rep);
    const auto sw = cfg.weights();
    const auto sim = simulate_one(cfg, sw, 0);
    const double rho = -0.9 + 1.8 * u(rng);
    const double theta = std::exp(-3.0 + 6.0 * u(rng));
    const auto p = lc_param(kind, rho, theta, sim.dataset, sw);
    const auto d = lc_direct(kind, rho, theta, sim.dataset, sw);
    CHECK(std::abs(p.lc - d.lc) <= 1e-8 * std::max(1.0, std::abs(d.lc)));
    CHECK(rel(p.omega, d.omega) < 1e-8);
    CHECK(oracle::max_abs(p.beta - d.beta) <= 1e-8 * std::max(1.0, d.beta.cwiseAbs().maxCoeff()));
    CHECK(rel(p.logdet_Voo, d.logdet_Voo) < 1e-8);
  }
}

TEST_CASE("lc_param matches the dense multivariate-normal oracle") {
  for (const auto kind : {ModelKind::HSEM, ModelKind::HSAM}) {
    const auto cfg = small_config(kind, 10, 0.3, 7);
    const auto sw = cfg.weights();
    const auto sim = simulate_one(cfg, sw, 0);
    const auto p = lc_param(kind, 0.5, 0.7, sim.dataset, sw);
    const auto o = oracle::dense_lc(kind == ModelKind::HSAM, sw.W.to_dense(), 0.5, 0.7, sim.y_full,
                                    sim.dataset.X(), sim.dataset.obs_idx());
    CHECK(rel(p.lc, o.lc) < 1e-8);
    CHECK(rel(p.omega, o.omega) < 1e-8);
    CHECK(oracle::max_abs(p.beta - o.beta) < 1e-8);
  }
}

TEST_CASE("log|V_oo| from the two factors matches the dense determinant") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 8; ++rep) {
    const auto cfg = small_config(ModelKind::HSEM, 6 + rep % 3, rep % 2 ? 0.5 : 0.0, 40 + rep);
    const auto sw = cfg.weights();
    const auto sim = simulate_one(cfg, sw, 0);
    const double rho = -0.8 + 1.6 * u(rng), theta = 0.1 + 3.0 * u(rng);
    const auto p = lc_param(ModelKind::HSEM, rho, theta, sim.dataset, sw);
    const DenseMatrix Voo = oracle::principal(oracle::dense_V(sw.W.to_dense(), rho, theta), sim.dataset.obs_idx());
    CHECK(std::abs(p.logdet_Voo - oracle::logdet_spd(Voo)) < 1e-8);
  }
}

TEST_CASE("V_oo inverse by the Woodbury path") {
  const auto cfg = small_config(ModelKind::HSEM, 9, 0.2, 12);
  const auto sw = cfg.weights();
  const auto sim = simulate_one(cfg, sw, 0);
  const MarginalLikelihood engine(ModelKind::HSEM, sim.dataset, sw);
  for (const double cutoff : {0.0, 1.0}) {
    const MarginalLikelihood e2(ModelKind::HSEM, sim.dataset, sw, Ordering::amd, cutoff);
    const auto st = e2.state(0.7, 1.3);
    const int no = sim.dataset.n_obs();
    const DenseMatrix inv = e2.apply_Voo_inverse(st, DenseMatrix::Identity(no, no));
    const DenseMatrix Voo = oracle::principal(oracle::dense_V(sw.W.to_dense(), 0.7, 1.3), sim.dataset.obs_idx());
    CHECK(oracle::max_abs(Voo * inv - DenseMatrix::Identity(no, no)) < 1e-8);
  }
}

TEST_CASE("V_oo inverse stays accurate for large theta") {
  const auto cfg = small_config(ModelKind::HSEM, 8, 0.4, 14);
  const auto sw = cfg.weights();
  const auto sim = simulate_one(cfg, sw, 0);
  const MarginalLikelihood engine(ModelKind::HSEM, sim.dataset, sw);
  const int no = sim.dataset.n_obs();
  const DenseMatrix I = DenseMatrix::Identity(no, no);
  for (const double theta : {0.5, 1.0, 1.0 + 1e-9, 3.0, 1e3, 1e5, 1e7}) {
    const DenseMatrix Voo = oracle::principal(oracle::dense_V(sw.W.to_dense(), 0.6, theta), sim.dataset.obs_idx());
    const DenseMatrix ref = Voo.ldlt().solve(I);
    const DenseMatrix inv = engine.apply_Voo_inverse(engine.state(0.6, theta), I);
    CHECK((inv - ref).norm() <= 1e-8 * ref.norm());
  }
}

TEST_CASE("HSEM and HSAM share V_oo") {
  const auto cfg = small_config(ModelKind::HSAM, 7, 0.4, 3);
  const auto sw = cfg.weights();
  const auto sim = simulate_one(cfg, sw, 0);
  const MarginalLikelihood sem(ModelKind::HSEM, sim.dataset, sw), sam(ModelKind::HSAM, sim.dataset, sw);
  const auto a = sem.state(0.55, 0.8), b = sam.state(0.55, 0.8);
  CHECK(a.F_obs.logdet() == b.F_obs.logdet());
  const DenseMatrix Z = DenseMatrix::Identity(sim.dataset.n_obs(), sim.dataset.n_obs());
  CHECK(sem.apply_Voo_inverse(a, Z) == sam.apply_Voo_inverse(b, Z));
  CHECK(sem.param(0.55, 0.8).logdet_Voo == sam.param(0.55, 0.8).logdet_Voo);
}

TEST_CASE("theta = 0 reduces to ordinary least squares") {
  for (const auto kind : {ModelKind::HSEM, ModelKind::HSAM}) {
    const auto cfg = small_config(kind, 9, 0.4, 77);
    const auto sw = cfg.weights();
    const auto sim = simulate_one(cfg, sw, 0);
    const double rho = 0.35;
    const auto p = lc_param(kind, rho, 0.0, sim.dataset, sw);
    const auto d = lc_direct(kind, rho, 0.0, sim.dataset, sw);
    const int n = sw.size();
    const DenseMatrix A = DenseMatrix::Identity(n, n) - rho * sw.W.to_dense();
    const DenseMatrix Xt =
        oracle::select(kind == ModelKind::HSAM ? DenseMatrix(A.inverse() * sim.dataset.X()) : sim.dataset.X(),
                       sim.dataset.obs_idx());
    const Vector yo = sim.dataset.y_obs();
    const Vector ols = Xt.colPivHouseholderQr().solve(yo);
    const double no = sim.dataset.n_obs();
    const double s2 = (yo - Xt * ols).squaredNorm() / no;
    const double lc = -0.5 * no * std::log(2.0 * std::numbers::pi * s2) - 0.5 * no;
    CHECK(oracle::max_abs(p.beta - ols) < 1e-10);
    CHECK(oracle::max_abs(d.beta - ols) < 1e-10);
    CHECK(rel(p.omega, s2) < 1e-10);
    CHECK(rel(p.lc, lc) < 1e-10);
  }
}

TEST_CASE("lc_direct: full observation and size guard") {
  const auto cfg = small_config(ModelKind::HSEM, 6, 0.0, 5);
  const auto sw = cfg.weights();
  const auto sim = simulate_one(cfg, sw, 0);
  const auto d = lc_direct(ModelKind::HSEM, 0.4, 2.0, sim.dataset, sw);
  const auto AtA = [&] {
    const DenseMatrix A = DenseMatrix::Identity(36, 36) - 0.4 * sw.W.to_dense();
    return DenseMatrix(A.transpose() * A);
  }();
  const double lemma = oracle::logdet_spd(AtA + 2.0 * DenseMatrix::Identity(36, 36)) - oracle::logdet_spd(AtA);
  CHECK(std::abs(d.logdet_Voo - lemma) < 1e-9);
  CHECK_THROWS_AS(lc_direct(ModelKind::HSEM, 0.4, 2.0, sim.dataset, sw, 20), SizeGuard);
  FitOptions o = no_se(Method::MML_D);
  o.direct_cap = 20;
  CHECK_THROWS_AS(fit(ModelKind::HSEM, sim.dataset, sw, o), SizeGuard);
}

TEST_CASE("rank-deficient design is reported") {
  const auto cfg = small_config(ModelKind::HSEM, 6, 0.2, 9);
  const auto sw = cfg.weights();
  const auto sim = simulate_one(cfg, sw, 0);
  DenseMatrix X(36, 2);
  X.col(0).setOnes();
  X.col(1).setConstant(2.0);
  const Dataset bad(sim.y_full, sim.dataset.mask(), X);
  CHECK_THROWS_AS(lc_param(ModelKind::HSEM, 0.3, 1.0, bad, sw), RankDeficientDesign);
}

TEST_CASE("fit: zero missing gives identical MML-P, FML and OML") {
  for (const auto kind : {ModelKind::HSEM, ModelKind::HSAM}) {
    const auto cfg = small_config(kind, 9, 0.0, 31, 0.7);
    const auto sw = cfg.weights();
    const auto sim = simulate_one(cfg, sw, 0);
    const auto p = fit(kind, sim.dataset, sw, no_se(Method::MML_P));
    const auto f = fit(kind, sim.dataset, sw, no_se(Method::FML));
    const auto o = fit(kind, sim.dataset, sw, no_se(Method::OML));
    for (const auto* r : {&f, &o}) {
      CHECK(std::abs(p.params.rho - r->params.rho) < 1e-6);
      CHECK(std::abs(p.sigma2_eps - r->sigma2_eps) < 1e-6);
      CHECK(std::abs(p.sigma2_e - r->sigma2_e) < 1e-6);
      CHECK(oracle::max_abs(p.params.beta - r->params.beta) < 1e-6);
    }
    CHECK(f.method == Method::FML);
    CHECK(o.method == Method::OML);
  }
}

TEST_CASE("complete-data route matches the Woodbury path and the dense oracle") {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 8; ++rep) {
    const auto kind = rep % 2 == 0 ? ModelKind::HSEM : ModelKind::HSAM;
    const auto cfg = small_config(kind, 5 + rep, 0.0, 40 + rep);
    const auto sw = cfg.weights();
    const auto sim = simulate_one(cfg, sw, 0);
    const MarginalLikelihood engine(kind, sim.dataset, sw);
    const double rho = sw.rho_lo + (0.05 + 0.9 * u(rng)) * (sw.rho_hi - sw.rho_lo);
    const double theta = rep == 0 ? 0.0 : std::exp(6.0 * u(rng) - 3.0);
    const auto c = engine.complete(rho, theta);
    const auto p = engine.param(rho, theta);
    CHECK(rel(c.lc, p.lc) < 1e-10);
    CHECK(rel(c.omega, p.omega) < 1e-10);
    CHECK(oracle::max_abs(c.beta - p.beta) < 1e-9);
    std::vector<int> all(static_cast<std::size_t>(sw.size()));
    std::iota(all.begin(), all.end(), 0);
    const auto ref = oracle::dense_lc(kind == ModelKind::HSAM, sw.W.to_dense(), rho, theta, sim.y_full,
                                      sim.dataset.X(), all);
    CHECK(rel(c.lc, ref.lc) < 1e-9);
  }
  const auto cfg = small_config(ModelKind::HSEM, 6, 0.3, 2);
  const auto sim = simulate_one(cfg, 0);
  CHECK_THROWS_AS(MarginalLikelihood(ModelKind::HSEM, sim.dataset, cfg.weights()).complete(0.3, 1.0),
                  MissingDataPresent);
}

TEST_CASE("fit_fml refuses missing data") {
  const auto cfg = small_config(ModelKind::HSEM, 6, 0.3, 2);
  const auto sim = simulate_one(cfg, 0);
  CHECK_THROWS_AS(fit(ModelKind::HSEM, sim.dataset, cfg.weights(), no_se(Method::FML)), MissingDataPresent);
}

TEST_CASE("fit: result contract, ascent and determinism") {
  const auto cfg = small_config(ModelKind::HSAM, 12, 0.5, 8, 0.7);
  const auto sw = cfg.weights();
  const auto sim = simulate_one(cfg, sw, 0);
  const auto r = fit(ModelKind::HSAM, sim.dataset, sw, no_se(Method::MML_P));
  CHECK(r.converged);
  CHECK(std::isfinite(r.loglik));
  CHECK(r.sigma2_eps == r.params.omega);
  CHECK(r.sigma2_e == r.params.theta * r.params.omega);
  CHECK(r.n_obs == sim.dataset.n_obs());
  REQUIRE(!r.trace.empty());
  for (std::size_t k = 1; k < r.trace.size(); ++k) CHECK(r.trace[k] >= r.trace[k - 1]);
  CHECK(r.trace.back() == doctest::Approx(r.loglik).epsilon(1e-12));
  const auto again = fit(ModelKind::HSAM, sim.dataset, sw, no_se(Method::MML_P));
  CHECK(again.params.rho == r.params.rho);
  CHECK(again.loglik == r.loglik);
  const auto d = fit(ModelKind::HSAM, sim.dataset, sw, no_se(Method::MML_D));
  CHECK(std::abs(d.params.rho - r.params.rho) < 1e-5);
  CHECK(rel(d.loglik, r.loglik) < 1e-8);
}

TEST_CASE("fit: optimum passes the concavity probe") {
  for (const auto kind : {ModelKind::HSEM, ModelKind::HSAM}) {
    auto cfg = small_config(kind, 12, 0.4, 17, 0.6);
    cfg.sigma2_e = 2.0;
    cfg.sigma2_eps = 0.5;
    const auto sw = cfg.weights();
    const auto sim = simulate_one(cfg, sw, 0);
    const auto r = fit(kind, sim.dataset, sw, no_se(Method::MML_P));
    REQUIRE(!r.theta_at_boundary);
    const InternalCoordinates ic{sw.rho_lo, sw.rho_hi};
    const auto [a, b] = ic.to_internal(r.params.rho, r.params.theta);
    const double best = lc_param(kind, r.params.rho, r.params.theta, sim.dataset, sw).lc;
    for (const auto [da, db] : {std::pair{1e-3, 0.0}, std::pair{-1e-3, 0.0}, std::pair{0.0, 1e-3}, std::pair{0.0, -1e-3}}) {
      const auto [rho, theta] = ic.to_params(a + da, b + db);
      CHECK(lc_param(kind, rho, theta, sim.dataset, sw).lc < best);
    }
  }
}

TEST_CASE("fit: location and scale equivariance") {
  for (const auto kind : {ModelKind::HSEM, ModelKind::HSAM}) {
    const auto cfg = small_config(kind, 10, 0.3, 61, 0.5);
    const auto sw = cfg.weights();
    const auto sim = simulate_one(cfg, sw, 0);
    const auto base = fit(kind, sim.dataset, sw, no_se(Method::MML_P));
    const Dataset scaled(Vector(3.0 * sim.y_full), sim.dataset.mask(), sim.dataset.X());
    const auto s = fit(kind, scaled, sw, no_se(Method::MML_P));
    CHECK(std::abs(s.params.rho - base.params.rho) < 1e-5);
    CHECK(std::abs(std::log(s.params.theta) - std::log(base.params.theta)) < 1e-5);
    CHECK(rel(s.sigma2_eps, 9.0 * base.sigma2_eps) < 1e-5);
    const Dataset shifted(Vector(sim.y_full.array() + 4.0), sim.dataset.mask(), sim.dataset.X());
    const auto t = fit(kind, shifted, sw, no_se(Method::MML_P));
    CHECK(std::abs(t.params.rho - base.params.rho) < 1e-5);
    const double expect = kind == ModelKind::HSEM ? 4.0 : 4.0 * (1.0 - t.params.rho);
    CHECK(std::abs(t.params.beta[0] - base.params.beta[0] - expect) < 1e-5);
    CHECK(std::abs(t.params.beta[1] - base.params.beta[1]) < 1e-5);
  }
}

TEST_CASE("fit: golden-section optimizer finds the same optimum") {
  const auto cfg = small_config(ModelKind::HSEM, 10, 0.3, 19, 0.6);
  const auto sw = cfg.weights();
  const auto sim = simulate_one(cfg, sw, 0);
  const auto nm = fit(ModelKind::HSEM, sim.dataset, sw, no_se(Method::MML_P));
  FitOptions o = no_se(Method::MML_P);
  o.optimizer = OptimizerKind::golden_section_nested;
  const auto gs = fit(ModelKind::HSEM, sim.dataset, sw, o);
  CHECK(gs.converged);
  CHECK(std::abs(gs.params.rho - nm.params.rho) < 1e-4);
  CHECK(std::abs(gs.loglik - nm.loglik) < 1e-7 * std::abs(nm.loglik));
}

TEST_CASE("fit_fml agrees with a brute-force dense grid search") {
  const auto cfg = small_config(ModelKind::HSEM, 7, 0.0, 123, 0.5);
  const auto sw = cfg.weights();
  const auto sim = simulate_one(cfg, sw, 0);
  const DenseMatrix W = sw.W.to_dense();
  const auto& obs = sim.dataset.obs_idx();
  // Profile over log theta by golden section on the dense likelihood.
  auto profile = [&](double rho) {
    auto f = [&](double lt) {
      return oracle::dense_lc(false, W, rho, std::exp(lt), sim.y_full, sim.dataset.X(), obs).lc;
    };
    double lo = -12.0, hi = 6.0;
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = hi - g * (hi - lo), d = lo + g * (hi - lo), fc = f(c), fd = f(d);
    while (hi - lo > 1e-4) {
      if (fc > fd) {
        hi = d, d = c, fd = fc, c = hi - g * (hi - lo), fc = f(c);
      } else {
        lo = c, c = d, fc = fd, d = lo + g * (hi - lo), fd = f(d);
      }
    }
    return std::max(fc, fd);
  };
  double best_rho = 0.0, best = -1e300;
  for (double rho = -0.98; rho <= 0.98; rho += 0.02) {
    const double v = profile(rho);
    if (v > best) best = v, best_rho = rho;
  }
  const double centre = best_rho;
  for (double rho = centre - 0.02; rho <= centre + 0.02 + 1e-12; rho += 1e-3) {
    if (rho <= sw.rho_lo || rho >= sw.rho_hi) continue;
    const double v = profile(rho);
    if (v > best) best = v, best_rho = rho;
  }
  const auto f = fit(ModelKind::HSEM, sim.dataset, sw, no_se(Method::FML));
  CHECK(std::abs(f.params.rho - best_rho) <= 1e-3);
  CHECK(f.loglik >= best - 1e-6);
}

TEST_CASE("fit: iid data end on the theta -> infinity ridge or inside") {
  // With no latent innovation, theta -> infinity at rho = 0 reproduces the
  // theta = 0 likelihood, and a free rho can only improve on it.
  int ridge = 0;
  for (std::uint64_t seed = 50; seed < 70; ++seed) {
    auto cfg = small_config(ModelKind::HSEM, 10, 0.0, seed, 0.5);
    cfg.sigma2_e = 0.0;
    const auto sw = cfg.weights();
    const auto sim = simulate_one(cfg, sw, 0);
    const auto r = fit(ModelKind::HSEM, sim.dataset, sw, no_se(Method::FML));
    CHECK(std::isfinite(r.loglik));
    CHECK(r.loglik >= lc_param(ModelKind::HSEM, 0.0, 0.0, sim.dataset, sw).lc - 1e-9);
    CHECK(r.theta_at_boundary == (r.params.theta < kThetaBoundary));
    CHECK(r.theta_at_upper_bound == (r.params.theta >= kThetaMax * (1.0 - 1e-12)));
    if (r.theta_at_upper_bound) {
      ++ridge;
      CHECK(r.loglik >= lc_param(ModelKind::HSEM, r.params.rho, 1e4, sim.dataset, sw).lc);
    }
  }
  CHECK(ridge >= 1);
}

TEST_CASE("fit: lower theta boundary is reached exactly") {
  // Negatively autocorrelated data with rho confined to positive values:
  // any spatial variance lowers the likelihood.
  for (std::uint64_t seed = 1; seed < 5; ++seed) {
    auto cfg = small_config(ModelKind::HSEM, 10, 0.3, seed, -0.9);
    cfg.sigma2_e = 4.0;
    cfg.sigma2_eps = 0.5;
    const auto sw = cfg.weights();
    const auto sim = simulate_one(cfg, sw, 0);
    auto o = no_se(Method::MML_P);
    o.rho_box = std::pair{0.3, 0.9};
    const auto r = fit(ModelKind::HSEM, sim.dataset, sw, o);
    CHECK(r.converged);
    CHECK(r.params.theta <= 1e-6);
    CHECK(r.theta_at_boundary);
    CHECK(!r.theta_at_upper_bound);
    CHECK(r.loglik >= lc_param(ModelKind::HSEM, r.params.rho, 1e-3, sim.dataset, sw).lc);
  }
}

TEST_CASE("fit: theta box upper edge is reached exactly") {
  const auto cfg = small_config(ModelKind::HSEM, 10, 0.3, 3, 0.8);
  const auto sw = cfg.weights();
  const auto sim = simulate_one(cfg, sw, 0);
  auto o = no_se(Method::MML_P);
  o.theta_box = std::pair{1e-6, 1e-2};
  const auto r = fit(ModelKind::HSEM, sim.dataset, sw, o);
  CHECK(r.params.theta == doctest::Approx(1e-2).epsilon(1e-12));
  CHECK(r.theta_at_upper_bound);
}

TEST_CASE("fit_oml uses re-normalized observed weights") {
  const auto sw = rook_grid(4, 4, true);
  const std::vector<int> obs{0, 1, 2, 5, 6, 9, 10, 15};
  const auto swo = observed_weights(sw, obs);
  CHECK(swo.size() == 8);
  const DenseMatrix Wo = swo.W.to_dense();
  for (int i = 0; i < 8; ++i) {
    const double s = Wo.row(i).sum();
    CHECK((s == doctest::Approx(1.0).epsilon(1e-12) || s == 0.0));
  }
  CHECK(swo.islands == 1);  // unit 15 loses both neighbours
  const auto raw = observed_weights(rook_grid(4, 4, false), obs);
  CHECK(raw.normalization == Normalization::none);
  CHECK(raw.W.to_dense() == oracle::principal(rook_grid(4, 4, false).W.to_dense(), obs));
}

TEST_CASE("fit: input validation") {
  const auto cfg = small_config(ModelKind::HSEM, 6, 0.3, 2);
  const auto sw = cfg.weights();
  const auto sim = simulate_one(cfg, sw, 0);
  FitOptions o;
  o.tol = 0.0;
  CHECK_THROWS_AS(fit(ModelKind::HSEM, sim.dataset, sw, o), InvalidArgument);
  CHECK_THROWS_AS(fit(ModelKind::HSEM, sim.dataset, rook_grid(5, 5, true)), DimensionMismatch);
  const Vector y = (Vector(36) << Vector::Constant(4, 1.0), Vector::Constant(32, std::nan(""))).finished();
  CHECK_THROWS_AS(fit(ModelKind::HSEM, Dataset::from_nan(y, sim.dataset.X()), sw), InvalidArgument);
  CHECK(parse_method("MML-P") == Method::MML_P);
  CHECK(parse_method("mml_d") == Method::MML_D);
  CHECK(parse_method("oml") == Method::OML);
  CHECK_THROWS_AS(parse_method("em"), InvalidArgument);
}
