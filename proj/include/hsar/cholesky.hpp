#pragma once

// Sparse SPD Cholesky: fill-reducing ordering, cached symbolic analysis,
// up-looking numeric factorization, triangular solves, log-determinant and
// rank-1 updates.

#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "hsar/grid.hpp"
#include "hsar/sparse.hpp"

namespace hsar {

enum class Ordering { natural, amd, nested_dissection };

/// Fill-reducing permutation.  perm[k] is the original index placed at
/// position k, so the factored matrix is C = P S P^T with C(k, l) =
/// S(perm[k], perm[l]).  Nested dissection needs a grid hint and falls back
/// to AMD without one.
std::vector<int> symbolic_order(const SparseMatrix& S, Ordering method = Ordering::amd,
                                std::optional<GridShape> grid = std::nullopt);

/// Nested dissection of a rows x cols lattice with separators `sep_width`
/// lines wide.  A^T A for Rook weights couples units two steps apart, so
/// the default width is 2.
std::vector<int> grid_nested_dissection(GridShape grid, int sep_width = 2);

/// Structure of L for a given (pattern, permutation) pair.  Any matrix whose
/// pattern is a subset of the analyzed one can be factored numerically
/// against it, which is what lets the likelihood reuse one analysis across
/// all (rho, theta) evaluations.
class SymbolicCholesky {
 public:
  SymbolicCholesky(const SparseMatrix& pattern, std::vector<int> perm);

  int size() const noexcept { return n_; }
  const std::vector<int>& perm() const noexcept { return perm_; }
  const std::vector<int>& pinv() const noexcept { return pinv_; }
  const std::vector<int>& parent() const noexcept { return parent_; }
  int nnz_L() const noexcept { return static_cast<int>(li_.size()); }

  /// True if every stored entry of S lies inside the analyzed pattern.
  bool covers(const SparseMatrix& S) const;

 private:
  friend class CholeskyFactor;

  int n_ = 0;
  std::vector<int> perm_, pinv_, parent_;
  // Column structure of L: diagonal first, rows ascending.
  std::vector<int> lp_, li_;
  // Row structure of strict lower L (CSR), columns ascending.
  std::vector<int> rp_, rj_;
  // Sorted pattern of the analyzed matrix, for covers().
  SparseMatrix pattern_;
};

/// Lower-triangular factor L with L L^T = P S P^T.
class CholeskyFactor {
 public:
  /// Pivot rejection threshold relative to the largest diagonal entry.
  static constexpr double kPivotTolerance = 1e-13;

  const std::vector<int>& perm() const noexcept { return perm_; }
  const std::vector<int>& pinv() const noexcept { return pinv_; }
  /// Copy of the factor as a CSC matrix (may hold explicit zeros).
  SparseMatrix L() const;
  int nnz() const noexcept { return static_cast<int>(li_.size()); }
  double logdet() const noexcept { return logdet_; }
  int size() const noexcept { return static_cast<int>(perm_.size()); }
  const std::shared_ptr<const SymbolicCholesky>& symbolic() const noexcept { return symbolic_; }

  /// Numeric factorization of S against a cached analysis.
  static CholeskyFactor numeric(const SparseMatrix& S,
                                std::shared_ptr<const SymbolicCholesky> symbolic);

  /// In-place rank-1 update with S + v v^T; v is given in the permuted
  /// domain as (index, value) pairs.  Fill outside the current pattern is
  /// inserted.  Throws NotPositiveDefinite if a pivot degenerates.
  void update_in_place(std::span<const int> idx, std::span<const double> val);

  /// Solves L y = b then L^T x = y on a permuted vector, in place.
  void lsolve(std::span<double> x) const;
  void ltsolve(std::span<double> x) const;

 private:
  CholeskyFactor() = default;
  void recompute_logdet();

  std::vector<int> perm_, pinv_;
  std::vector<int> lp_, li_;
  std::vector<double> lx_;
  double logdet_ = 0.0;
  std::shared_ptr<const SymbolicCholesky> symbolic_;
};

std::shared_ptr<const SymbolicCholesky> analyze(const SparseMatrix& S, std::vector<int> perm);

CholeskyFactor factor(const SparseMatrix& S, std::vector<int> perm);
CholeskyFactor factor(const SparseMatrix& S, std::shared_ptr<const SymbolicCholesky> symbolic);

/// X with S X = B.
DenseMatrix solve_spd(const CholeskyFactor& F, const DenseMatrix& B);
Vector solve_spd(const CholeskyFactor& F, const Vector& b);
/// Same result as solve_spd; right-hand sides are distributed over OpenMP
/// threads.  The serial routine is the reference it is tested against.
DenseMatrix solve_spd_parallel(const CholeskyFactor& F, const DenseMatrix& B);

struct SparseVector {
  std::vector<int> idx;
  std::vector<double> val;
};

/// Factor of S + v v^T (v in the permuted domain).
CholeskyFactor rank1_update(const CholeskyFactor& F, const SparseVector& v);

/// Fraction of updated diagonal entries above which factor_observed_system
/// refactors instead of applying rank-1 updates.
inline constexpr double kDefaultUpdateCutoff = 0.25;

enum class ObservedSystemRoute { automatic, rank1_updates, refactor };

/// Factor of A^T A + theta * B_o^T B_o given the factor of A^T A.
CholeskyFactor factor_observed_system(const CholeskyFactor& F_AtA, const SparseMatrix& AtA,
                                      std::span<const int> obs_idx, double theta,
                                      double update_cutoff = kDefaultUpdateCutoff,
                                      ObservedSystemRoute route = ObservedSystemRoute::automatic);

}  // namespace hsar
