#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <utility>

#include "hsar/grid.hpp"
#include "hsar/sparse.hpp"

namespace hsar {

enum class Normalization { none, row };

enum class RhoMethod { exact_dense, extremal_iterative, conservative };

/// Margin kept between the admissible interval and its singular endpoints.
inline constexpr double kRhoMargin = 1e-6;

/// Size above which exact_dense refuses to run.
inline constexpr int kExactDenseLimit = 2000;

struct SpatialWeights {
  SparseMatrix W;
  Normalization normalization = Normalization::none;
  double rho_lo = -1.0 + kRhoMargin;
  double rho_hi = 1.0 - kRhoMargin;
  std::optional<GridShape> grid_hint;
  /// Number of units without neighbours (zero rows).
  int islands = 0;

  int size() const noexcept { return W.rows(); }
  bool contains(double rho) const noexcept { return rho >= rho_lo && rho <= rho_hi; }
};

/// Rook adjacency on a rows x cols lattice, index i * cols + j.
SpatialWeights rook_grid(int rows, int cols, bool normalize);

/// Divides each nonzero row by its sum.  Zero rows stay zero and are counted
/// in `islands`.  The interval is set to the conservative (-1, 1) box.
SpatialWeights row_normalize(const SparseMatrix& W);

/// Wraps an arbitrary square W with a zero diagonal, computing the admissible
/// interval with `default_rho_method`.
SpatialWeights make_weights(SparseMatrix W, Normalization normalization);

RhoMethod default_rho_method(const SpatialWeights& sw);

/// Admissible (rho_lo, rho_hi), shrunk by kRhoMargin.
std::pair<double, double> rho_interval(const SpatialWeights& sw, RhoMethod method);

/// Extreme real eigenvalues (min, max) of W by shifted power iteration.
std::pair<double, double> extremal_eigenvalues(const SparseMatrix& W, double tol = 1e-6,
                                               int max_iter = 100000);

// Neighbour-list text format: one line per unit, "id: id id ...", ids 0-based.
// Reading yields a binary adjacency matrix; writing emits the pattern only.
SparseMatrix read_neighbor_list(std::istream& in);
void write_neighbor_list(std::ostream& out, const SparseMatrix& W);

/// Loads W from a Matrix Market file (detected by its banner) or a
/// neighbour list, then applies the requested normalization.
SpatialWeights load_weights(const std::string& path, Normalization normalization);

}  // namespace hsar
