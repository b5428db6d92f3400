#include "hsar/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "hsar/errors.hpp"

namespace hsar {

std::string to_string(ModelKind kind) { return kind == ModelKind::HSEM ? "hsem" : "hsam"; }

ModelKind parse_model_kind(std::string_view text) {
  std::string s(text);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "hsem" || s == "h-sem") return ModelKind::HSEM;
  if (s == "hsam" || s == "h-sam") return ModelKind::HSAM;
  throw InvalidArgument("unknown model '" + std::string(text) + "' (expected hsem or hsam)");
}

Dataset::Dataset(Vector y, std::vector<bool> observed, DenseMatrix X)
    : y_(std::move(y)), mask_(std::move(observed)), X_(std::move(X)) {
  if (static_cast<Eigen::Index>(mask_.size()) != y_.size())
    throw DimensionMismatch("mask length does not match y");
  if (X_.rows() != y_.size())
    throw DimensionMismatch("X has " + std::to_string(X_.rows()) + " rows but y has " +
                            std::to_string(y_.size()) + " entries");
  if (!X_.allFinite()) throw InvalidArgument("X contains non-finite values");
  for (int i = 0; i < n(); ++i) {
    if (mask_[i]) {
      if (!std::isfinite(y_[i]))
        throw InvalidArgument("observed response " + std::to_string(i) + " is not finite");
      obs_.push_back(i);
    } else {
      y_[i] = std::numeric_limits<double>::quiet_NaN();
      mis_.push_back(i);
    }
  }
}

Dataset Dataset::from_nan(Vector y, DenseMatrix X) {
  std::vector<bool> mask(static_cast<std::size_t>(y.size()));
  for (Eigen::Index i = 0; i < y.size(); ++i) mask[i] = !std::isnan(y[i]);
  return Dataset(std::move(y), std::move(mask), std::move(X));
}

Dataset Dataset::complete(Vector y, DenseMatrix X) {
  std::vector<bool> mask(static_cast<std::size_t>(y.size()), true);
  return Dataset(std::move(y), std::move(mask), std::move(X));
}

Vector Dataset::y_obs() const { return select_rows(y_, obs_); }

DenseMatrix Dataset::X_obs() const { return select_rows(X_, obs_); }

void Dataset::check_identifiable() const {
  if (n_obs() < n_cov() + 3)
    throw InvalidArgument("need at least " + std::to_string(n_cov() + 3) +
                          " observed responses for " + std::to_string(n_cov()) +
                          " covariates, have " + std::to_string(n_obs()));
}

Params Params::from_variances(Vector beta, double rho, double sigma2_eps, double sigma2_e) {
  if (!(sigma2_eps > 0.0) || !(sigma2_e >= 0.0))
    throw InvalidArgument("variances must satisfy sigma2_eps > 0 and sigma2_e >= 0");
  return Params{std::move(beta), rho, sigma2_eps, sigma2_e / sigma2_eps};
}

SparseMatrix build_A(const SpatialWeights& sw, double rho) {
  if (!sw.contains(rho))
    throw InvalidArgument("rho = " + std::to_string(rho) + " outside admissible interval (" +
                          std::to_string(sw.rho_lo) + ", " + std::to_string(sw.rho_hi) + ")");
  return add(SparseMatrix::identity(sw.size()), sw.W, 1.0, -rho);
}

AtAStructure::AtAStructure(const SpatialWeights& sw, Ordering ordering)
    : sw_(std::make_shared<const SpatialWeights>(sw)) {
  const auto& W = sw_->W;
  const auto Wt = transpose(W);
  sym_part_ = add(W, Wt);
  gram_ = spgemm(Wt, W);

  // Pattern with strictly positive values so no entry cancels.
  std::vector<int> cp, ri;
  std::vector<double> v;
  SparseMatrix absW = W;
  std::move(absW).release(cp, ri, v);
  for (auto& x : v) x = std::abs(x) + 1.0;
  const SparseMatrix P(W.rows(), W.cols(), std::move(cp), std::move(ri), std::move(v));
  const auto Pt = transpose(P);
  const SparseMatrix pattern =
      add(add(SparseMatrix::identity(W.rows()), add(P, Pt)), spgemm(Pt, P));
  auto perm = symbolic_order(pattern, ordering, sw_->grid_hint);
  symbolic_ = analyze(pattern, std::move(perm));
}

SparseMatrix AtAStructure::build(double rho) const {
  if (!sw_->contains(rho))
    throw InvalidArgument("rho = " + std::to_string(rho) + " outside admissible interval");
  return add(add(SparseMatrix::identity(sw_->size()), sym_part_, 1.0, -rho), gram_, 1.0, rho * rho);
}

CholeskyFactor AtAStructure::factor(const SparseMatrix& AtA) const {
  return CholeskyFactor::numeric(AtA, symbolic_);
}

DenseMatrix apply_A_inverse(const SparseMatrix& A, const CholeskyFactor& F_AtA, const DenseMatrix& M) {
  return solve_spd(F_AtA, DenseMatrix(spmm(transpose(A), M)));
}

DenseMatrix xtilde_o(ModelKind kind, const SparseMatrix& A, const CholeskyFactor& F_AtA,
                     const DenseMatrix& X, std::span<const int> obs_idx) {
  if (kind == ModelKind::HSEM) return select_rows(X, obs_idx);
  return select_rows(apply_A_inverse(A, F_AtA, X), obs_idx);
}

WorkingState make_working_state(ModelKind kind, const AtAStructure& structure, const Dataset& data,
                                double rho, double theta, double update_cutoff) {
  if (!(theta >= 0.0)) throw InvalidArgument("theta must be >= 0");
  if (data.n() != structure.weights().size())
    throw DimensionMismatch("dataset has " + std::to_string(data.n()) + " units but W has " +
                            std::to_string(structure.weights().size()));
  SparseMatrix A = build_A(structure.weights(), rho);
  SparseMatrix AtA = structure.build(rho);
  CholeskyFactor F_AtA = structure.factor(AtA);
  CholeskyFactor F_obs = factor_observed_system(F_AtA, AtA, data.obs_idx(), theta, update_cutoff);
  DenseMatrix Xt = xtilde_o(kind, A, F_AtA, data.X(), data.obs_idx());
  return WorkingState{rho, theta, std::move(A), std::move(AtA), std::move(F_AtA), std::move(F_obs),
                      std::move(Xt)};
}

Vector mean_o(ModelKind, const Vector& beta, const WorkingState& state) {
  if (beta.size() != state.Xtilde_o.cols()) throw DimensionMismatch("beta has wrong length");
  return state.Xtilde_o * beta;
}

double complete_loglik(ModelKind kind, const Params& params, const SpatialWeights& sw,
                       const Vector& y_full, const DenseMatrix& X) {
  if (!(params.omega > 0.0) || !(params.theta >= 0.0))
    throw InvalidArgument("invalid parameters: need omega > 0 and theta >= 0");
  const int n = sw.size();
  if (y_full.size() != n || X.rows() != n) throw DimensionMismatch("y/X size does not match W");
  if (!y_full.allFinite()) throw MissingDataPresent("complete_loglik requires a complete response");
  if (params.beta.size() != X.cols()) throw DimensionMismatch("beta has wrong length");

  const AtAStructure structure(sw);
  const SparseMatrix A = build_A(sw, params.rho);
  const SparseMatrix AtA = structure.build(params.rho);
  const CholeskyFactor F_AtA = structure.factor(AtA);
  std::vector<int> all(static_cast<std::size_t>(n));
  std::iota(all.begin(), all.end(), 0);
  const CholeskyFactor F_full = factor_observed_system(F_AtA, AtA, all, params.theta);

  Vector mu = X * params.beta;
  if (kind == ModelKind::HSAM) mu = apply_A_inverse(A, F_AtA, DenseMatrix(mu)).col(0);
  const Vector r = y_full - mu;
  const double logdet_V = F_full.logdet() - F_AtA.logdet();
  double quad = r.squaredNorm();
  if (params.theta > 0.0) quad -= params.theta * r.dot(solve_spd(F_full, r));
  return -0.5 * n * std::log(2.0 * std::numbers::pi) - 0.5 * n * std::log(params.omega) -
         0.5 * logdet_V - 0.5 * quad / params.omega;
}

}  // namespace hsar
