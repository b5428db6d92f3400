#pragma once

// H-SEM and H-SAM: the dataset with its observed/missing partition, model
// parameters, and the per-(rho, theta) working state shared by both models.
//
// Both models have Sigma = omega * V with V = I + theta (A^T A)^{-1} and
// A = I - rho W.  They differ only in the mean: X beta for H-SEM and
// A^{-1} X beta for H-SAM.

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hsar/cholesky.hpp"
#include "hsar/sparse.hpp"
#include "hsar/weights.hpp"

namespace hsar {

enum class ModelKind { HSEM, HSAM };

std::string to_string(ModelKind kind);
/// Accepts "hsem"/"hsam" in any case.
ModelKind parse_model_kind(std::string_view text);

/// Response with missing slots, covariates (intercept included by the
/// caller) and the observed/missing index partition.
class Dataset {
 public:
  Dataset(Vector y, std::vector<bool> observed, DenseMatrix X);
  /// NaN entries of y mark missing responses.
  static Dataset from_nan(Vector y, DenseMatrix X);
  static Dataset complete(Vector y, DenseMatrix X);

  int n() const noexcept { return static_cast<int>(y_.size()); }
  int n_obs() const noexcept { return static_cast<int>(obs_.size()); }
  int n_mis() const noexcept { return static_cast<int>(mis_.size()); }
  int n_cov() const noexcept { return static_cast<int>(X_.cols()); }
  bool is_complete() const noexcept { return mis_.empty(); }

  /// Missing entries hold NaN.
  const Vector& y() const noexcept { return y_; }
  const std::vector<bool>& mask() const noexcept { return mask_; }
  const DenseMatrix& X() const noexcept { return X_; }
  const std::vector<int>& obs_idx() const noexcept { return obs_; }
  const std::vector<int>& mis_idx() const noexcept { return mis_; }
  Vector y_obs() const;
  DenseMatrix X_obs() const;

  /// Throws InvalidArgument unless n_o >= (number of covariates) + 3.
  void check_identifiable() const;

 private:
  Vector y_;
  std::vector<bool> mask_;
  DenseMatrix X_;
  std::vector<int> obs_, mis_;
};

/// omega is the measurement-error variance and theta the ratio of the
/// innovation variance to it.
struct Params {
  Vector beta;
  double rho = 0.0;
  double omega = 1.0;
  double theta = 0.0;

  double sigma2_eps() const noexcept { return omega; }
  double sigma2_e() const noexcept { return theta * omega; }

  static Params from_variances(Vector beta, double rho, double sigma2_eps, double sigma2_e);
};

/// I - rho W.  Throws InvalidArgument outside the admissible interval.
SparseMatrix build_A(const SpatialWeights& sw, double rho);

/// Everything about A^T A that does not depend on rho: the products of W
/// it is assembled from and one symbolic analysis of its generic pattern.
class AtAStructure {
 public:
  AtAStructure(const SpatialWeights& sw, Ordering ordering = Ordering::amd);

  const SpatialWeights& weights() const noexcept { return *sw_; }
  const std::shared_ptr<const SymbolicCholesky>& symbolic() const noexcept { return symbolic_; }

  /// A^T A = I - rho (W + W^T) + rho^2 W^T W.
  SparseMatrix build(double rho) const;
  CholeskyFactor factor(const SparseMatrix& AtA) const;

 private:
  std::shared_ptr<const SpatialWeights> sw_;
  SparseMatrix sym_part_;  // W + W^T
  SparseMatrix gram_;      // W^T W
  std::shared_ptr<const SymbolicCholesky> symbolic_;
};

/// Scratch for one (rho, theta) evaluation.
struct WorkingState {
  double rho;
  double theta;
  SparseMatrix A;
  SparseMatrix AtA;
  CholeskyFactor F_AtA;
  CholeskyFactor F_obs;  // A^T A + theta B_o^T B_o
  DenseMatrix Xtilde_o;
};

WorkingState make_working_state(ModelKind kind, const AtAStructure& structure, const Dataset& data,
                                double rho, double theta,
                                double update_cutoff = kDefaultUpdateCutoff);

/// Rows of X (H-SEM) or of A^{-1} X (H-SAM) at the observed indices.
DenseMatrix xtilde_o(ModelKind kind, const SparseMatrix& A, const CholeskyFactor& F_AtA,
                     const DenseMatrix& X, std::span<const int> obs_idx);

/// A^{-1} M through the normal equations (A^T A)^{-1} A^T M.
DenseMatrix apply_A_inverse(const SparseMatrix& A, const CholeskyFactor& F_AtA, const DenseMatrix& M);

Vector mean_o(ModelKind kind, const Vector& beta, const WorkingState& state);

/// Complete-data log-likelihood of y at the given parameters.
double complete_loglik(ModelKind kind, const Params& params, const SpatialWeights& sw,
                       const Vector& y_full, const DenseMatrix& X);

}  // namespace hsar
