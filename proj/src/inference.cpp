#include "hsar/inference.hpp"

#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "hsar/errors.hpp"

namespace hsar {

namespace {

void require_fit_for(const MarginalLikelihood& engine, const FitResult& fit) {
  if (fit.kind != engine.kind()) throw InvalidArgument("fit and evaluator disagree on the model");
  if (fit.params.beta.size() != engine.data().n_cov())
    throw DimensionMismatch("fit has the wrong number of coefficients for this dataset");
}

}  // namespace

DenseMatrix cov_beta(const MarginalLikelihood& engine, const FitResult& fit) {
  require_fit_for(engine, fit);
  const Concentrated c = engine.param(fit.params.rho, fit.params.theta);
  return fit.params.omega * c.xtvx.inverse();
}

DenseMatrix cov_beta(ModelKind kind, const FitResult& fit, const Dataset& data, const SpatialWeights& sw) {
  return cov_beta(MarginalLikelihood(kind, data, sw), fit);
}

HessianResult fd_hessian(const std::function<double(const Eigen::Vector3d&)>& f,
                         const Eigen::Vector3d& x, double rel_step,
                         const std::function<bool(const Eigen::Vector3d&)>& valid) {
  if (!(rel_step > 0.0)) throw InvalidArgument("finite-difference step must be > 0");
  double step = rel_step;
  for (int attempt = 0; attempt <= 8; ++attempt, step *= 0.5) {
    Eigen::Vector3d h;
    for (int i = 0; i < 3; ++i) h[i] = step * std::max(std::abs(x[i]), 1e-3);
    auto eval = [&](const Eigen::Vector3d& p, bool& ok) {
      if (!ok) return 0.0;
      if (valid && !valid(p)) {
        ok = false;
        return 0.0;
      }
      double v = 0.0;
      try {
        v = f(p);
      } catch (const Error&) {
        ok = false;
      }
      if (!std::isfinite(v)) ok = false;
      return v;
    };
    bool ok = true;
    const double f0 = eval(x, ok);
    Eigen::Matrix3d H;
    for (int i = 0; i < 3 && ok; ++i) {
      Eigen::Vector3d e = Eigen::Vector3d::Zero();
      e[i] = h[i];
      const double fp = eval(x + e, ok), fm = eval(x - e, ok);
      H(i, i) = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
      for (int j = 0; j < i && ok; ++j) {
        Eigen::Vector3d g = Eigen::Vector3d::Zero();
        g[j] = h[j];
        const double fpp = eval(x + e + g, ok), fpm = eval(x + e - g, ok);
        const double fmp = eval(x - e + g, ok), fmm = eval(x - e - g, ok);
        H(i, j) = H(j, i) = (fpp - fpm - fmp + fmm) / (4.0 * h[i] * h[j]);
      }
    }
    if (ok) return {0.5 * (H + H.transpose()), step};
  }
  throw NonFiniteLikelihood("finite-difference stencil leaves the valid domain even after shrinking");
}

HessianResult observed_info_zeta(const MarginalLikelihood& engine, const FitResult& fit, double fd_step) {
  require_fit_for(engine, fit);
  const auto& sw = engine.weights();
  const Vector beta = fit.params.beta;
  auto neg = [&](const Eigen::Vector3d& z) { return -engine.loglik(z[0], z[1], z[2], beta); };
  auto valid = [&](const Eigen::Vector3d& z) { return sw.contains(z[0]) && z[1] > 0.0 && z[2] >= 0.0; };
  const Eigen::Vector3d zeta(fit.params.rho, fit.params.sigma2_eps(), fit.params.sigma2_e());
  return fd_hessian(neg, zeta, fd_step, valid);
}

DenseMatrix observed_info_zeta(ModelKind kind, const FitResult& fit, const Dataset& data,
                               const SpatialWeights& sw, double fd_step) {
  return observed_info_zeta(MarginalLikelihood(kind, data, sw), fit, fd_step).hessian;
}

Vector cross_beta_rho(const MarginalLikelihood& engine, const FitResult& fit) {
  require_fit_for(engine, fit);
  if (engine.kind() != ModelKind::HSAM) return Vector::Zero(fit.params.beta.size());
  const WorkingState st = engine.state(fit.params.rho, fit.params.theta);
  const auto& data = engine.data();
  const DenseMatrix AinvX = apply_A_inverse(st.A, st.F_AtA, data.X());
  const Vector d = apply_A_inverse(st.A, st.F_AtA, DenseMatrix(spmv(engine.weights().W, AinvX * fit.params.beta))).col(0);
  const DenseMatrix d_o = select_rows(DenseMatrix(d), data.obs_idx());
  return st.Xtilde_o.transpose() * engine.apply_Voo_inverse(st, d_o).col(0) / fit.params.omega;
}

StdErrors standard_errors(const MarginalLikelihood& engine, const FitResult& fit, const SeOptions& options) {
  require_fit_for(engine, fit);
  StdErrors out;
  out.mode = engine.kind() == ModelKind::HSAM ? options.mode : SeMode::block;
  const Concentrated c = engine.param(fit.params.rho, fit.params.theta);
  const auto p = c.xtvx.rows();
  const DenseMatrix info_beta = c.xtvx / fit.params.omega;
  out.cov_beta = info_beta.inverse();

  const HessianResult h = observed_info_zeta(engine, fit, options.fd_step);
  out.info_zeta = h.hessian;
  out.fd_step = h.step;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(h.hessian);
  out.info_positive_definite = es.eigenvalues().minCoeff() > 0.0;
  if (!out.info_positive_definite) {
    std::ostringstream msg;
    msg << "observed information for (rho, sigma2_eps, sigma2_e) is not positive definite; eigenvalues "
        << es.eigenvalues().transpose();
    out.warnings.push_back(msg.str());
  }

  DenseMatrix cov_zeta;
  if (engine.kind() == ModelKind::HSAM) {
    out.cross_beta_rho = cross_beta_rho(engine, fit);
  }
  if (engine.kind() == ModelKind::HSAM && out.mode == SeMode::joint) {
    DenseMatrix J = DenseMatrix::Zero(p + 3, p + 3);
    J.topLeftCorner(p, p) = info_beta;
    J.bottomRightCorner(3, 3) = h.hessian;
    J.block(0, p, p, 1) = *out.cross_beta_rho;
    J.block(p, 0, 1, p) = out.cross_beta_rho->transpose();
    Eigen::FullPivLU<DenseMatrix> lu(J);
    if (!lu.isInvertible()) throw SingularInformation("joint information matrix is singular");
    const DenseMatrix cov = lu.inverse();
    out.cov_beta = cov.topLeftCorner(p, p);
    cov_zeta = cov.bottomRightCorner(3, 3);
  } else {
    Eigen::FullPivLU<Eigen::Matrix3d> lu(h.hessian);
    if (!lu.isInvertible()) {
      std::ostringstream msg;
      msg << "information for (rho, sigma2_eps, sigma2_e) is singular; eigenvalues "
          << es.eigenvalues().transpose();
      throw SingularInformation(msg.str());
    }
    cov_zeta = lu.inverse();
  }

  auto root = [&](double v, const char* name) {
    if (v > 0.0 && std::isfinite(v)) return std::sqrt(v);
    out.warnings.push_back(std::string("non-positive variance for ") + name);
    return std::numeric_limits<double>::quiet_NaN();
  };
  out.se_beta.resize(p);
  for (Eigen::Index k = 0; k < p; ++k) out.se_beta[k] = root(out.cov_beta(k, k), "beta");
  out.se_rho = root(cov_zeta(0, 0), "rho");
  out.se_sigma2_eps = root(cov_zeta(1, 1), "sigma2_eps");
  out.se_sigma2_e = root(cov_zeta(2, 2), "sigma2_e");
  return out;
}

StdErrors standard_errors(ModelKind kind, const FitResult& fit, const Dataset& data,
                          const SpatialWeights& sw, const SeOptions& options) {
  return standard_errors(MarginalLikelihood(kind, data, sw), fit, options);
}

}  // namespace hsar
