#include "hsar/estimator.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Eigenvalues>

#include "hsar/errors.hpp"
#include "hsar/inference.hpp"
#include "hsar/optimize.hpp"

namespace hsar {

std::string to_string(Method method) {
  switch (method) {
    case Method::MML_P: return "mml-p";
    case Method::MML_D: return "mml-d";
    case Method::OML: return "oml";
    case Method::FML: return "fml";
  }
  return "unknown";
}

Method parse_method(std::string_view text) {
  std::string s(text);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) {
    return c == '_' ? '-' : static_cast<char>(std::tolower(c));
  });
  if (s == "mml-p") return Method::MML_P;
  if (s == "mml-d") return Method::MML_D;
  if (s == "oml") return Method::OML;
  if (s == "fml") return Method::FML;
  throw InvalidArgument("unknown method '" + std::string(text) +
                        "' (expected mml-p, mml-d, oml or fml)");
}

void FitOptions::validate() const {
  if (!(tol > 0.0)) throw InvalidArgument("tol must be > 0");
  if (max_evals < 1) throw InvalidArgument("max_evals must be >= 1");
  if (rho_box && !(rho_box->first < rho_box->second)) throw InvalidArgument("empty rho box");
  if (theta_box && !(theta_box->first > 0.0 && theta_box->first < theta_box->second))
    throw InvalidArgument("theta box must satisfy 0 < lo < hi");
  if (!(se.fd_step > 0.0)) throw InvalidArgument("fd_step must be > 0");
}

std::pair<double, double> InternalCoordinates::to_params(double a, double b) const {
  const double rho = rho_lo + (rho_hi - rho_lo) / (1.0 + std::exp(-a));
  const double theta = std::exp(std::clamp(b, log_theta_lo, log_theta_hi));
  return {std::clamp(rho, rho_lo, rho_hi), theta};
}

std::pair<double, double> InternalCoordinates::to_internal(double rho, double theta) const {
  return {std::log((rho - rho_lo) / (rho_hi - rho)), std::log(theta)};
}

MarginalLikelihood::MarginalLikelihood(ModelKind kind, const Dataset& data, const SpatialWeights& sw,
                                       Ordering ordering, double update_cutoff, int direct_cap)
    : kind_(kind),
      data_(data),
      structure_(sw, ordering),
      update_cutoff_(update_cutoff),
      direct_cap_(direct_cap),
      y_o_(data.y_obs()) {
  if (data.n() != sw.size())
    throw DimensionMismatch("dataset has " + std::to_string(data.n()) + " units but W is " +
                            std::to_string(sw.size()) + " x " + std::to_string(sw.size()));
  if (data.n_obs() == 0) throw InvalidArgument("no observed responses");
}

WorkingState MarginalLikelihood::state(double rho, double theta) const {
  return make_working_state(kind_, structure_, data_, rho, theta, update_cutoff_);
}

DenseMatrix MarginalLikelihood::apply_Voo_inverse(const WorkingState& st, const DenseMatrix& Z) const {
  const auto& obs = data_.obs_idx();
  if (Z.rows() != static_cast<Eigen::Index>(obs.size()))
    throw DimensionMismatch("apply_Voo_inverse: wrong number of rows");
  if (st.theta == 0.0) return Z;
  DenseMatrix full = DenseMatrix::Zero(data_.n(), Z.cols());
  for (std::size_t k = 0; k < obs.size(); ++k) full.row(obs[k]) = Z.row(static_cast<Eigen::Index>(k));
  if (st.theta <= 1.0) return Z - st.theta * select_rows(solve_spd(st.F_obs, full), obs);
  // Same inverse as B_o M^{-1} (M - theta B_o^T B_o) B_o^T, which avoids the
  // cancellation in Z - theta (...) when theta is large.
  return select_rows(solve_spd(st.F_obs, spmm(st.AtA, full)), obs);
}

namespace {

Concentrated profile(const DenseMatrix& Xt, const Vector& y_o, const DenseMatrix& VinvZ,
                     double logdet_Voo) {
  const auto p = Xt.cols();
  const double no = static_cast<double>(y_o.size());
  DenseMatrix xtvx = Xt.transpose() * VinvZ.leftCols(p);
  xtvx = 0.5 * (xtvx + xtvx.transpose()).eval();
  const Vector xtvy = Xt.transpose() * VinvZ.col(p);

  Eigen::SelfAdjointEigenSolver<DenseMatrix> es(xtvx, Eigen::EigenvaluesOnly);
  const auto& ev = es.eigenvalues();
  if (p > 0 && !(ev.minCoeff() > 1e-12 * std::max(1.0, ev.maxCoeff())))
    throw RankDeficientDesign("X~' V^-1 X~ is singular (smallest eigenvalue " +
                              std::to_string(p > 0 ? ev.minCoeff() : 0.0) + ")");
  Concentrated out;
  out.beta = xtvx.llt().solve(xtvy);
  const Vector r = y_o - Xt * out.beta;
  const Vector vinv_r = VinvZ.col(p) - VinvZ.leftCols(p) * out.beta;
  const double quad = r.dot(vinv_r);
  out.omega = quad / no;
  out.logdet_Voo = logdet_Voo;
  out.xtvx = std::move(xtvx);
  if (!(out.omega > 0.0) || !std::isfinite(out.omega) || !std::isfinite(logdet_Voo))
    throw NonFiniteLikelihood("concentrated likelihood undefined (omega = " +
                              std::to_string(out.omega) + ")");
  out.lc = -0.5 * no * std::log(2.0 * std::numbers::pi) - 0.5 * no - 0.5 * no * std::log(out.omega) -
           0.5 * logdet_Voo;
  return out;
}

DenseMatrix stack(const DenseMatrix& Xt, const Vector& y) {
  DenseMatrix Z(Xt.rows(), Xt.cols() + 1);
  Z.leftCols(Xt.cols()) = Xt;
  Z.col(Xt.cols()) = y;
  return Z;
}

}  // namespace

Concentrated MarginalLikelihood::param(double rho, double theta) const {
  const WorkingState st = state(rho, theta);
  const DenseMatrix Z = stack(st.Xtilde_o, y_o_);
  return profile(st.Xtilde_o, y_o_, apply_Voo_inverse(st, Z), st.F_obs.logdet() - st.F_AtA.logdet());
}

Concentrated MarginalLikelihood::direct(double rho, double theta) const {
  if (!(theta >= 0.0)) throw InvalidArgument("theta must be >= 0");
  const int no = data_.n_obs();
  if (no > direct_cap_)
    throw SizeGuard("direct path refused: " + std::to_string(no) +
                    " observed units exceed the cap of " + std::to_string(direct_cap_) +
                    "; use mml-p or raise the cap");
  const SparseMatrix A = build_A(structure_.weights(), rho);
  const SparseMatrix AtA = structure_.build(rho);
  const CholeskyFactor F = structure_.factor(AtA);
  const auto& obs = data_.obs_idx();
  const DenseMatrix Xt = xtilde_o(kind_, A, F, data_.X(), obs);

  DenseMatrix Voo = DenseMatrix::Identity(no, no);
  if (theta != 0.0) {
    Vector e = Vector::Zero(data_.n());
    for (int k = 0; k < no; ++k) {
      e[obs[k]] = 1.0;
      const Vector m = solve_spd(F, e);
      e[obs[k]] = 0.0;
      for (int l = 0; l < no; ++l) Voo(l, k) += theta * m[obs[l]];
    }
  }
  const Eigen::LLT<DenseMatrix> llt(Voo);
  if (llt.info() != Eigen::Success) throw NotPositiveDefinite(-1, 0.0);
  const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  const DenseMatrix Z = stack(Xt, y_o_);
  return profile(Xt, y_o_, llt.solve(Z), logdet);
}

Concentrated MarginalLikelihood::complete(double rho, double theta) const {
  if (!data_.is_complete()) throw MissingDataPresent("complete-data likelihood needs every response");
  if (!(theta >= 0.0)) throw InvalidArgument("theta must be >= 0");
  const SparseMatrix A = build_A(structure_.weights(), rho);
  const SparseMatrix At = transpose(A);
  const SparseMatrix AAt = spgemm(A, At);
  const CholeskyFactor G = factor(AAt, symbolic_order(AAt));
  const DenseMatrix& X = data_.X();
  // A^{-1} = A^T (A A^T)^{-1}
  const DenseMatrix Xt = kind_ == ModelKind::HSAM ? spmm(At, solve_spd(G, X)) : X;
  const DenseMatrix Z = stack(Xt, y_o_);
  if (theta == 0.0) return profile(Xt, y_o_, Z, 0.0);
  // V^{-1} = A^T (A A^T + theta I)^{-1} A and |V| = |A A^T + theta I| / |A A^T|.
  const SparseMatrix N = add(AAt, SparseMatrix::identity(data_.n()), 1.0, theta);
  const CholeskyFactor GN = factor(N, G.perm());
  return profile(Xt, y_o_, spmm(At, solve_spd(GN, spmm(A, Z))), GN.logdet() - G.logdet());
}

Concentrated MarginalLikelihood::evaluate(Method path, double rho, double theta) const {
  switch (path) {
    case Method::MML_D: return direct(rho, theta);
    case Method::FML: return complete(rho, theta);
    default: return param(rho, theta);
  }
}

double MarginalLikelihood::loglik(double rho, double sigma2_eps, double sigma2_e,
                                  const Vector& beta) const {
  if (!(sigma2_eps > 0.0) || !(sigma2_e >= 0.0))
    throw NonFiniteLikelihood("variances outside their domain");
  const WorkingState st = state(rho, sigma2_e / sigma2_eps);
  const Vector r = y_o_ - mean_o(kind_, beta, st);
  const Vector vinv_r = apply_Voo_inverse(st, DenseMatrix(r)).col(0);
  const double no = static_cast<double>(data_.n_obs());
  const double logdet = st.F_obs.logdet() - st.F_AtA.logdet();
  return -0.5 * no * std::log(2.0 * std::numbers::pi) - 0.5 * no * std::log(sigma2_eps) -
         0.5 * logdet - 0.5 * r.dot(vinv_r) / sigma2_eps;
}

Concentrated lc_param(ModelKind kind, double rho, double theta, const Dataset& data,
                      const SpatialWeights& sw) {
  return MarginalLikelihood(kind, data, sw).param(rho, theta);
}

Concentrated lc_direct(ModelKind kind, double rho, double theta, const Dataset& data,
                       const SpatialWeights& sw, int direct_cap) {
  return MarginalLikelihood(kind, data, sw, Ordering::amd, kDefaultUpdateCutoff, direct_cap)
      .direct(rho, theta);
}

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

FitResult maximize(const MarginalLikelihood& engine, Method path, Method tag, const FitOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto& sw = engine.weights();
  InternalCoordinates coords{sw.rho_lo, sw.rho_hi};
  if (opt.rho_box) {
    coords.rho_lo = std::max(coords.rho_lo, opt.rho_box->first);
    coords.rho_hi = std::min(coords.rho_hi, opt.rho_box->second);
    if (!(coords.rho_lo < coords.rho_hi)) throw InvalidArgument("rho box outside admissible interval");
  }
  if (opt.theta_box) {
    coords.log_theta_lo = std::log(opt.theta_box->first);
    coords.log_theta_hi = std::log(opt.theta_box->second);
  }

  const Objective objective = [&](const Eigen::VectorXd& x) {
    const auto [rho, theta] = coords.to_params(x[0], x[1]);
    return -engine.evaluate(path, rho, theta).lc;
  };

  auto start = [&](double rho, double theta) {
    rho = std::clamp(rho, coords.rho_lo + 0.01 * (coords.rho_hi - coords.rho_lo),
                     coords.rho_hi - 0.01 * (coords.rho_hi - coords.rho_lo));
    theta = std::clamp(theta, std::exp(coords.log_theta_lo), std::exp(coords.log_theta_hi));
    const auto [a, b] = coords.to_internal(rho, theta);
    return Eigen::Vector2d(a, b);
  };

  OptimResult best;
  int evals = 0;
  std::vector<double> trace;
  double running = -std::numeric_limits<double>::infinity();
  std::vector<double> converged_values;
  auto absorb = [&](const OptimResult& r) {
    evals += r.n_evals;
    for (const double v : r.trace) trace.push_back(running = std::max(running, -v));
    if (r.converged) converged_values.push_back(r.value);
    if (best.x.size() == 0 || r.value < best.value) best = r;
  };

  if (opt.optimizer == OptimizerKind::nelder_mead) {
    NelderMeadOptions nm;
    nm.reltol = opt.tol;
    nm.max_evals = opt.max_evals;
    absorb(nelder_mead(objective, start(0.0, 1.0), nm));
    if (!best.converged) absorb(nelder_mead(objective, start(0.5 * coords.rho_hi, 0.1), nm));
  } else {
    GoldenSectionOptions gs;
    gs.xtol = std::max(opt.tol, 1e-10) * 100.0;
    const auto a_lo = start(coords.rho_lo, 1.0)[0], a_hi = start(coords.rho_hi, 1.0)[0];
    absorb(golden_section_nested(objective, {a_lo, a_hi},
                                 {std::max(coords.log_theta_lo, -20.0), std::min(coords.log_theta_hi, 20.0)},
                                 gs));
  }
  for (const double v : converged_values)
    if (v <= best.value + opt.tol * (std::abs(best.value) + opt.tol)) best.converged = true;
  if (!std::isfinite(best.value))
    throw NonFiniteLikelihood("likelihood could not be evaluated at any trial point");

  // The surface flattens towards either end of the theta range and the
  // simplex stalls short of the bound; try the bound itself.
  const double b_hat = std::clamp(best.x[1], coords.log_theta_lo, coords.log_theta_hi);
  if (b_hat > coords.log_theta_hi - kThetaEdgeWidth) {
    const double b_hi = coords.log_theta_hi;
    const Objective along = [&](const Eigen::VectorXd& a) { return objective(Eigen::Vector2d(a[0], b_hi)); };
    NelderMeadOptions nm;
    nm.reltol = opt.tol;
    nm.max_evals = opt.max_evals;
    nm.initial_step = 0.1;
    const OptimResult edge = nelder_mead(along, Eigen::VectorXd::Constant(1, best.x[0]), nm);
    evals += edge.n_evals;
    if (edge.value <= best.value) {
      best.x = Eigen::Vector2d(edge.x[0], b_hi);
      best.value = edge.value;
      trace.push_back(running = std::max(running, -edge.value));
    }
  } else if (b_hat < std::log(kThetaEdgeLow)) {
    const Eigen::Vector2d x(best.x[0], coords.log_theta_lo);
    const double v = objective(x);
    ++evals;
    if (v <= best.value) {
      best.x = x;
      best.value = v;
      trace.push_back(running = std::max(running, -v));
    }
  }

  const auto [rho, theta] = coords.to_params(best.x[0], best.x[1]);
  const Concentrated c = engine.evaluate(path, rho, theta);
  FitResult fr;
  fr.kind = engine.kind();
  fr.method = tag;
  fr.params = Params{c.beta, rho, c.omega, theta};
  fr.sigma2_eps = c.omega;
  fr.sigma2_e = theta * c.omega;
  fr.loglik = c.lc;
  fr.n_evals = evals;
  fr.converged = best.converged;
  fr.theta_at_boundary = theta < kThetaBoundary;
  fr.theta_at_upper_bound = std::log(theta) >= coords.log_theta_hi - 1e-12;
  fr.trace = std::move(trace);
  fr.n_obs = engine.data().n_obs();
  fr.timing.estimation_seconds = seconds_since(t0);

  if (opt.standard_errors) {
    const auto t1 = std::chrono::steady_clock::now();
    try {
      fr.se = standard_errors(engine, fr, opt.se);
    } catch (const Error& e) {
      fr.se_error = e.what();
    }
    fr.timing.se_seconds = seconds_since(t1);
  }
  return fr;
}

}  // namespace

FitResult fit(ModelKind kind, const Dataset& data, const SpatialWeights& sw, const FitOptions& options) {
  options.validate();
  switch (options.method) {
    case Method::OML: return fit_oml(kind, data, sw, options);
    case Method::FML: return fit_fml(kind, data, sw, options);
    case Method::MML_P:
    case Method::MML_D: break;
  }
  data.check_identifiable();
  if (options.method == Method::MML_D && data.n_obs() > options.direct_cap)
    throw SizeGuard("mml-d refused: " + std::to_string(data.n_obs()) +
                    " observed units exceed the direct cap of " + std::to_string(options.direct_cap) +
                    "; use mml-p or raise the cap");
  const MarginalLikelihood engine(kind, data, sw, options.ordering, options.update_cutoff,
                                  options.direct_cap);
  return maximize(engine, options.method, options.method, options);
}

FitResult fit_fml(ModelKind kind, const Dataset& data, const SpatialWeights& sw, const FitOptions& options) {
  options.validate();
  if (!data.is_complete())
    throw MissingDataPresent("full maximum likelihood needs a complete response; " +
                             std::to_string(data.n_mis()) + " values are missing");
  data.check_identifiable();
  const MarginalLikelihood engine(kind, data, sw, options.ordering, options.update_cutoff,
                                  options.direct_cap);
  return maximize(engine, Method::FML, Method::FML, options);
}

SpatialWeights observed_weights(const SpatialWeights& sw, std::span<const int> obs_idx) {
  SparseMatrix Woo = select_principal(sw.W, obs_idx);
  if (sw.normalization == Normalization::row) return row_normalize(Woo);
  return make_weights(std::move(Woo), Normalization::none);
}

FitResult fit_oml(ModelKind kind, const Dataset& data, const SpatialWeights& sw, const FitOptions& options) {
  options.validate();
  if (data.n() != sw.size()) throw DimensionMismatch("dataset and W sizes differ");
  data.check_identifiable();
  const SpatialWeights sw_o = data.is_complete() ? sw : observed_weights(sw, data.obs_idx());
  const Dataset reduced = Dataset::complete(data.y_obs(), data.X_obs());
  FitOptions o = options;
  if (!data.is_complete()) o.ordering = Ordering::amd;
  const MarginalLikelihood engine(kind, reduced, sw_o, o.ordering, o.update_cutoff, o.direct_cap);
  return maximize(engine, Method::MML_P, Method::OML, o);
}

}  // namespace hsar
