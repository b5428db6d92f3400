#include "hsar/weights.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <vector>

#include <Eigen/Eigenvalues>

#include "hsar/errors.hpp"

namespace hsar {

namespace {

void check_weights_matrix(const SparseMatrix& W) {
  if (W.rows() != W.cols()) throw InvalidArgument("weights matrix must be square");
  const auto cp = W.col_ptr();
  const auto ri = W.row_idx();
  const auto v = W.values();
  for (int j = 0; j < W.cols(); ++j)
    for (int p = cp[j]; p < cp[j + 1]; ++p)
      if (ri[p] == j && v[p] != 0.0) throw InvalidArgument("weights matrix must have a zero diagonal");
}

int count_islands(const SparseMatrix& W) {
  std::vector<char> has(static_cast<std::size_t>(W.rows()), 0);
  const auto ri = W.row_idx();
  const auto v = W.values();
  for (std::size_t p = 0; p < ri.size(); ++p)
    if (v[p] != 0.0) has[ri[p]] = 1;
  return static_cast<int>(std::count(has.begin(), has.end(), 0));
}

std::pair<double, double> interval_from_eigenvalues(double lmin, double lmax) {
  const double lo = lmin < 0.0 ? 1.0 / lmin + kRhoMargin : -1.0 + kRhoMargin;
  const double hi = lmax > 0.0 ? 1.0 / lmax - kRhoMargin : 1.0 - kRhoMargin;
  return {lo, hi};
}

double power_iteration(const SparseMatrix& W, double shift, double sign, double tol, int max_iter) {
  // Dominant eigenvalue of shift*I + sign*W; all real eigenvalues of W are
  // mapped into [0, 2*shift] so the iteration picks the wanted extreme.
  const int n = W.rows();
  // Irregular start so that no eigenvector is missed by symmetry.
  Vector x(n);
  for (int i = 0; i < n; ++i) x[i] = 1.0 + std::fmod(0.6180339887498949 * (i + 1), 1.0);
  x /= x.norm();
  double lambda = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    const Vector y = shift * x + sign * spmv(W, x);
    lambda = x.dot(y);
    const double norm = y.norm();
    if (norm == 0.0) return 0.0;
    // Stop on the eigen-residual; the quotient alone stalls long before the
    // vector has converged when the spectral gap is small.
    if ((y - lambda * x).norm() <= tol * std::max(1.0, std::abs(lambda))) break;
    x = y / norm;
  }
  return lambda;
}

}  // namespace

SpatialWeights rook_grid(int rows, int cols, bool normalize) {
  if (rows < 1 || cols < 1) throw InvalidArgument("rook_grid: rows and cols must be >= 1");
  std::vector<Triplet> t;
  t.reserve(static_cast<std::size_t>(4) * rows * cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) {
      const int u = i * cols + j;
      if (i > 0) t.push_back({u, u - cols, 1.0});
      if (j > 0) t.push_back({u, u - 1, 1.0});
      if (j + 1 < cols) t.push_back({u, u + 1, 1.0});
      if (i + 1 < rows) t.push_back({u, u + cols, 1.0});
    }
  const int n = rows * cols;
  SparseMatrix adj = from_triplets(n, n, t);
  SpatialWeights sw;
  if (normalize) {
    sw = row_normalize(adj);
  } else {
    sw.W = std::move(adj);
    sw.normalization = Normalization::none;
    sw.islands = count_islands(sw.W);
    // Path-graph spectra are known in closed form; the lattice adjacency is
    // their Kronecker sum and bipartite, so the spectrum is symmetric.
    const double lmax = (rows > 1 ? 2.0 * std::cos(std::numbers::pi / (rows + 1)) : 0.0) +
                        (cols > 1 ? 2.0 * std::cos(std::numbers::pi / (cols + 1)) : 0.0);
    std::tie(sw.rho_lo, sw.rho_hi) = interval_from_eigenvalues(-lmax, lmax);
  }
  sw.grid_hint = GridShape{rows, cols};
  return sw;
}

SpatialWeights row_normalize(const SparseMatrix& W) {
  check_weights_matrix(W);
  for (const double v : W.values())
    if (v < 0.0) throw InvalidArgument("row_normalize: negative weight");
  const int n = W.rows();
  std::vector<double> rowsum(static_cast<std::size_t>(n), 0.0);
  const auto ri = W.row_idx();
  const auto vals = W.values();
  for (std::size_t p = 0; p < ri.size(); ++p) rowsum[ri[p]] += vals[p];
  std::vector<int> cp(W.col_ptr().begin(), W.col_ptr().end());
  std::vector<int> idx(ri.begin(), ri.end());
  std::vector<double> v(vals.begin(), vals.end());
  for (std::size_t p = 0; p < idx.size(); ++p)
    if (rowsum[idx[p]] > 0.0) v[p] /= rowsum[idx[p]];
  SpatialWeights sw;
  sw.W = canonicalize(SparseMatrix(n, n, std::move(cp), std::move(idx), std::move(v)));
  sw.normalization = Normalization::row;
  sw.islands = static_cast<int>(std::count(rowsum.begin(), rowsum.end(), 0.0));
  std::tie(sw.rho_lo, sw.rho_hi) = rho_interval(sw, RhoMethod::conservative);
  return sw;
}

SpatialWeights make_weights(SparseMatrix W, Normalization normalization) {
  check_weights_matrix(W);
  if (normalization == Normalization::row) return row_normalize(W);
  SpatialWeights sw;
  sw.W = canonicalize(W);
  sw.normalization = Normalization::none;
  sw.islands = count_islands(sw.W);
  std::tie(sw.rho_lo, sw.rho_hi) = rho_interval(sw, default_rho_method(sw));
  return sw;
}

RhoMethod default_rho_method(const SpatialWeights& sw) {
  return sw.normalization == Normalization::row ? RhoMethod::conservative
                                                : RhoMethod::extremal_iterative;
}

std::pair<double, double> rho_interval(const SpatialWeights& sw, RhoMethod method) {
  const int n = sw.size();
  switch (method) {
    case RhoMethod::conservative:
      if (sw.normalization != Normalization::row)
        throw InvalidArgument("conservative rho interval requires a row-normalized W");
      return {-1.0 + kRhoMargin, 1.0 - kRhoMargin};
    case RhoMethod::exact_dense: {
      if (n > kExactDenseLimit)
        throw SizeGuard("exact_dense rho interval refused for n = " + std::to_string(n) +
                        " > " + std::to_string(kExactDenseLimit));
      if (n == 0) return {-1.0 + kRhoMargin, 1.0 - kRhoMargin};
      Eigen::EigenSolver<DenseMatrix> es(sw.W.to_dense(), false);
      const Vector re = es.eigenvalues().real();
      return interval_from_eigenvalues(re.minCoeff(), re.maxCoeff());
    }
    case RhoMethod::extremal_iterative: {
      if (n == 0) return {-1.0 + kRhoMargin, 1.0 - kRhoMargin};
      const auto [lmin, lmax] = extremal_eigenvalues(sw.W);
      return interval_from_eigenvalues(lmin, lmax);
    }
  }
  throw InvalidArgument("unknown rho interval method");
}

std::pair<double, double> extremal_eigenvalues(const SparseMatrix& W, double tol, int max_iter) {
  if (W.rows() != W.cols()) throw InvalidArgument("extremal_eigenvalues: matrix is not square");
  if (W.rows() == 0) return {0.0, 0.0};
  // Any induced norm bounds the spectral radius; the row-sum norm is cheap.
  Vector rowsum = Vector::Zero(W.rows());
  const auto ri = W.row_idx();
  const auto v = W.values();
  for (std::size_t p = 0; p < ri.size(); ++p) rowsum[ri[p]] += std::abs(v[p]);
  const double shift = std::max(rowsum.maxCoeff(), 1e-300);
  const double top = power_iteration(W, shift, 1.0, tol, max_iter) - shift;
  const double bottom = shift - power_iteration(W, shift, -1.0, tol, max_iter);
  return {bottom, top};
}

SparseMatrix read_neighbor_list(std::istream& in) {
  std::vector<std::pair<int, std::vector<int>>> rows;
  std::string line;
  int lineno = 0;
  int max_id = -1;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto colon = line.find(':');
    if (colon == std::string::npos)
      throw ParseError("neighbour list: line " + std::to_string(lineno) + ": missing ':'");
    std::istringstream head(line.substr(0, colon));
    int id = -1;
    if (!(head >> id) || id < 0)
      throw ParseError("neighbour list: line " + std::to_string(lineno) + ": bad unit id");
    std::istringstream rest(line.substr(colon + 1));
    std::vector<int> nb;
    std::string tok;
    while (rest >> tok) {
      std::size_t used = 0;
      int j = -1;
      try {
        j = std::stoi(tok, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != tok.size() || j < 0)
        throw ParseError("neighbour list: line " + std::to_string(lineno) + ": bad neighbour '" +
                         tok + "'");
      if (j == id)
        throw ParseError("neighbour list: line " + std::to_string(lineno) + ": unit lists itself");
      nb.push_back(j);
      max_id = std::max(max_id, j);
    }
    max_id = std::max(max_id, id);
    rows.emplace_back(id, std::move(nb));
  }
  const int n = max_id + 1;
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  std::vector<Triplet> t;
  for (const auto& [id, nb] : rows) {
    if (seen[id]) throw ParseError("neighbour list: unit " + std::to_string(id) + " listed twice");
    seen[id] = 1;
    for (const int j : nb) t.push_back({id, j, 1.0});
  }
  auto W = from_triplets(n, n, t);
  // Repeated neighbours sum; the format is binary so clamp back to one.
  std::vector<int> cp, ri;
  std::vector<double> v;
  std::move(W).release(cp, ri, v);
  std::fill(v.begin(), v.end(), 1.0);
  return SparseMatrix(n, n, std::move(cp), std::move(ri), std::move(v));
}

void write_neighbor_list(std::ostream& out, const SparseMatrix& W) {
  if (W.rows() != W.cols()) throw InvalidArgument("write_neighbor_list: matrix is not square");
  const auto T = transpose(W);
  const auto cp = T.col_ptr();
  const auto ri = T.row_idx();
  for (int i = 0; i < T.cols(); ++i) {
    out << i << ':';
    for (int p = cp[i]; p < cp[i + 1]; ++p) out << ' ' << ri[p];
    out << '\n';
  }
}

SpatialWeights load_weights(const std::string& path, Normalization normalization) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open weights file '" + path + "'");
  std::string first;
  std::getline(in, first);
  in.clear();
  in.seekg(0);
  SparseMatrix W = first.rfind("%%MatrixMarket", 0) == 0 ? read_matrix_market(in)
                                                         : read_neighbor_list(in);
  return make_weights(std::move(W), normalization);
}

}  // namespace hsar
