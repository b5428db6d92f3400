#pragma once

// Compressed sparse column storage and the handful of kernels the likelihood
// code needs: construction, transpose, products and row selection.

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace hsar {

using DenseMatrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct Triplet {
  int row;
  int col;
  double value;
};

/// Immutable CSC matrix.  Structure is validated on construction (sorted,
/// unique, in-range row indices per column); explicit zeros are allowed in
/// general but never produced by the canonicalizing constructors.
class SparseMatrix {
 public:
  SparseMatrix() = default;
  SparseMatrix(int nrows, int ncols);  // all-zero
  SparseMatrix(int nrows, int ncols, std::vector<int> col_ptr, std::vector<int> row_idx,
               std::vector<double> values);

  static SparseMatrix identity(int n);
  static SparseMatrix diagonal(std::span<const double> d);

  int rows() const noexcept { return nrows_; }
  int cols() const noexcept { return ncols_; }
  int nnz() const noexcept { return static_cast<int>(row_idx_.size()); }

  std::span<const int> col_ptr() const noexcept { return col_ptr_; }
  std::span<const int> row_idx() const noexcept { return row_idx_; }
  std::span<const double> values() const noexcept { return values_; }

  /// Entry (i, j) by binary search; zero if not stored.
  double coeff(int i, int j) const;

  /// True when no explicit zeros are stored.
  bool is_canonical() const noexcept;

  DenseMatrix to_dense() const;

  /// Moves the storage out; used by kernels that edit values in place and
  /// rebuild a matrix from the parts.
  void release(std::vector<int>& col_ptr, std::vector<int>& row_idx,
               std::vector<double>& values) &&;

  friend bool operator==(const SparseMatrix&, const SparseMatrix&) = default;

 private:
  int nrows_ = 0;
  int ncols_ = 0;
  std::vector<int> col_ptr_{0};
  std::vector<int> row_idx_;
  std::vector<double> values_;
};

/// Builds a canonical matrix: duplicates summed, exact zeros pruned.
SparseMatrix from_triplets(int nrows, int ncols, std::span<const Triplet> entries);
SparseMatrix from_dense(const DenseMatrix& M);

/// Drops exact zeros.  canonicalize(canonicalize(M)) == M.
SparseMatrix canonicalize(const SparseMatrix& M);

SparseMatrix transpose(const SparseMatrix& M);

/// C = A * B by Gustavson's column scatter/gather.
SparseMatrix spgemm(const SparseMatrix& A, const SparseMatrix& B);

/// C = alpha * A + beta * B.
SparseMatrix add(const SparseMatrix& A, const SparseMatrix& B, double alpha = 1.0,
                 double beta = 1.0);

SparseMatrix scale(const SparseMatrix& A, double alpha);

Vector spmv(const SparseMatrix& M, const Vector& x);
/// y = M^T x without forming the transpose.
Vector spmv_transpose(const SparseMatrix& M, const Vector& x);
DenseMatrix spmm(const SparseMatrix& M, const DenseMatrix& X);

/// Rows of M at `idx` (strictly increasing), i.e. B_o * M.
SparseMatrix select_rows(const SparseMatrix& M, std::span<const int> idx);
DenseMatrix select_rows(const DenseMatrix& M, std::span<const int> idx);
Vector select_rows(const Vector& v, std::span<const int> idx);
/// Principal submatrix M[idx, idx].
SparseMatrix select_principal(const SparseMatrix& M, std::span<const int> idx);

bool is_structurally_symmetric(const SparseMatrix& M);
double max_abs(const SparseMatrix& M);

// Matrix Market coordinate format.  Symmetric files are expanded to full
// storage on read; `symmetric` on write emits the lower triangle only.
SparseMatrix read_matrix_market(std::istream& in);
SparseMatrix read_matrix_market_file(const std::string& path);
void write_matrix_market(std::ostream& out, const SparseMatrix& M, bool symmetric = false);
void write_matrix_market_file(const std::string& path, const SparseMatrix& M,
                              bool symmetric = false);

}  // namespace hsar
