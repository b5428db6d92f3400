#include "hsar/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "hsar/errors.hpp"

namespace hsar {

namespace {

void check_index_list(std::span<const int> idx, int bound, const char* what) {
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (idx[k] < 0 || idx[k] >= bound)
      throw IndexOutOfRange(std::string(what) + ": index " + std::to_string(idx[k]) +
                            " outside [0, " + std::to_string(bound) + ")");
    if (k > 0 && idx[k] <= idx[k - 1])
      throw InvalidArgument(std::string(what) + ": indices must be strictly increasing");
  }
}

}  // namespace

SparseMatrix::SparseMatrix(int nrows, int ncols)
    : nrows_(nrows), ncols_(ncols), col_ptr_(static_cast<std::size_t>(ncols) + 1, 0) {
  if (nrows < 0 || ncols < 0) throw InvalidArgument("negative matrix dimension");
}

SparseMatrix::SparseMatrix(int nrows, int ncols, std::vector<int> col_ptr,
                           std::vector<int> row_idx, std::vector<double> values)
    : nrows_(nrows),
      ncols_(ncols),
      col_ptr_(std::move(col_ptr)),
      row_idx_(std::move(row_idx)),
      values_(std::move(values)) {
  if (nrows < 0 || ncols < 0) throw InvalidArgument("negative matrix dimension");
  if (col_ptr_.size() != static_cast<std::size_t>(ncols) + 1)
    throw DimensionMismatch("col_ptr must have ncols+1 entries");
  if (col_ptr_.front() != 0) throw InvalidArgument("col_ptr[0] must be 0");
  if (row_idx_.size() != values_.size() ||
      static_cast<std::size_t>(col_ptr_.back()) != row_idx_.size())
    throw DimensionMismatch("col_ptr[ncols] must equal nnz");
  for (int j = 0; j < ncols_; ++j) {
    if (col_ptr_[j + 1] < col_ptr_[j]) throw InvalidArgument("col_ptr must be nondecreasing");
    for (int p = col_ptr_[j]; p < col_ptr_[j + 1]; ++p) {
      const int i = row_idx_[p];
      if (i < 0 || i >= nrows_) throw IndexOutOfRange("row index out of range");
      if (p > col_ptr_[j] && i <= row_idx_[p - 1])
        throw InvalidArgument("row indices must be strictly increasing within a column");
    }
  }
}

SparseMatrix SparseMatrix::identity(int n) {
  std::vector<int> cp(n + 1), ri(n);
  std::iota(cp.begin(), cp.end(), 0);
  std::iota(ri.begin(), ri.end(), 0);
  return SparseMatrix(n, n, std::move(cp), std::move(ri), std::vector<double>(n, 1.0));
}

SparseMatrix SparseMatrix::diagonal(std::span<const double> d) {
  const int n = static_cast<int>(d.size());
  std::vector<int> cp(n + 1, 0), ri;
  std::vector<double> v;
  for (int j = 0; j < n; ++j) {
    if (d[j] != 0.0) {
      ri.push_back(j);
      v.push_back(d[j]);
    }
    cp[j + 1] = static_cast<int>(ri.size());
  }
  return SparseMatrix(n, n, std::move(cp), std::move(ri), std::move(v));
}

double SparseMatrix::coeff(int i, int j) const {
  if (i < 0 || i >= nrows_ || j < 0 || j >= ncols_) throw IndexOutOfRange("coeff out of range");
  const auto first = row_idx_.begin() + col_ptr_[j];
  const auto last = row_idx_.begin() + col_ptr_[j + 1];
  const auto it = std::lower_bound(first, last, i);
  if (it == last || *it != i) return 0.0;
  return values_[static_cast<std::size_t>(it - row_idx_.begin())];
}

bool SparseMatrix::is_canonical() const noexcept {
  return std::none_of(values_.begin(), values_.end(), [](double v) { return v == 0.0; });
}

DenseMatrix SparseMatrix::to_dense() const {
  DenseMatrix D = DenseMatrix::Zero(nrows_, ncols_);
  for (int j = 0; j < ncols_; ++j)
    for (int p = col_ptr_[j]; p < col_ptr_[j + 1]; ++p) D(row_idx_[p], j) = values_[p];
  return D;
}

void SparseMatrix::release(std::vector<int>& col_ptr, std::vector<int>& row_idx,
                           std::vector<double>& values) && {
  col_ptr = std::move(col_ptr_);
  row_idx = std::move(row_idx_);
  values = std::move(values_);
  col_ptr_.assign(static_cast<std::size_t>(ncols_) + 1, 0);
  row_idx_.clear();
  values_.clear();
}

SparseMatrix from_triplets(int nrows, int ncols, std::span<const Triplet> entries) {
  if (nrows < 0 || ncols < 0) throw InvalidArgument("negative matrix dimension");
  std::vector<int> count(static_cast<std::size_t>(ncols) + 1, 0);
  for (const auto& t : entries) {
    if (t.row < 0 || t.row >= nrows || t.col < 0 || t.col >= ncols)
      throw IndexOutOfRange("triplet (" + std::to_string(t.row) + ", " + std::to_string(t.col) +
                            ") outside " + std::to_string(nrows) + "x" + std::to_string(ncols));
    ++count[t.col + 1];
  }
  std::partial_sum(count.begin(), count.end(), count.begin());
  std::vector<int> rows(entries.size());
  std::vector<double> vals(entries.size());
  {
    std::vector<int> next(count.begin(), count.end() - 1);
    for (const auto& t : entries) {
      const int p = next[t.col]++;
      rows[p] = t.row;
      vals[p] = t.value;
    }
  }
  // Sort each column by row, sum duplicates, drop zeros.
  std::vector<int> cp(static_cast<std::size_t>(ncols) + 1, 0), ri;
  std::vector<double> v;
  ri.reserve(entries.size());
  v.reserve(entries.size());
  std::vector<int> order;
  for (int j = 0; j < ncols; ++j) {
    const int b = count[j], e = count[j + 1];
    order.resize(static_cast<std::size_t>(e - b));
    std::iota(order.begin(), order.end(), b);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int c) { return rows[a] < rows[c]; });
    for (std::size_t k = 0; k < order.size();) {
      const int r = rows[order[k]];
      double s = 0.0;
      for (; k < order.size() && rows[order[k]] == r; ++k) s += vals[order[k]];
      if (s != 0.0) {
        ri.push_back(r);
        v.push_back(s);
      }
    }
    cp[j + 1] = static_cast<int>(ri.size());
  }
  return SparseMatrix(nrows, ncols, std::move(cp), std::move(ri), std::move(v));
}

SparseMatrix from_dense(const DenseMatrix& M) {
  std::vector<int> cp(static_cast<std::size_t>(M.cols()) + 1, 0), ri;
  std::vector<double> v;
  for (Eigen::Index j = 0; j < M.cols(); ++j) {
    for (Eigen::Index i = 0; i < M.rows(); ++i)
      if (M(i, j) != 0.0) {
        ri.push_back(static_cast<int>(i));
        v.push_back(M(i, j));
      }
    cp[j + 1] = static_cast<int>(ri.size());
  }
  return SparseMatrix(static_cast<int>(M.rows()), static_cast<int>(M.cols()), std::move(cp),
                      std::move(ri), std::move(v));
}

SparseMatrix canonicalize(const SparseMatrix& M) {
  if (M.is_canonical()) return M;
  const auto cp = M.col_ptr();
  const auto ri = M.row_idx();
  const auto vv = M.values();
  std::vector<int> ncp(static_cast<std::size_t>(M.cols()) + 1, 0), nri;
  std::vector<double> nv;
  for (int j = 0; j < M.cols(); ++j) {
    for (int p = cp[j]; p < cp[j + 1]; ++p)
      if (vv[p] != 0.0) {
        nri.push_back(ri[p]);
        nv.push_back(vv[p]);
      }
    ncp[j + 1] = static_cast<int>(nri.size());
  }
  return SparseMatrix(M.rows(), M.cols(), std::move(ncp), std::move(nri), std::move(nv));
}

SparseMatrix transpose(const SparseMatrix& M) {
  const int m = M.rows(), n = M.cols();
  const auto cp = M.col_ptr();
  const auto ri = M.row_idx();
  const auto vv = M.values();
  std::vector<int> tcp(static_cast<std::size_t>(m) + 1, 0);
  for (int p = 0; p < M.nnz(); ++p) ++tcp[ri[p] + 1];
  std::partial_sum(tcp.begin(), tcp.end(), tcp.begin());
  std::vector<int> next(tcp.begin(), tcp.end() - 1);
  std::vector<int> tri(static_cast<std::size_t>(M.nnz()));
  std::vector<double> tv(static_cast<std::size_t>(M.nnz()));
  // Columns visited in increasing order keep the transposed rows sorted.
  for (int j = 0; j < n; ++j)
    for (int p = cp[j]; p < cp[j + 1]; ++p) {
      const int q = next[ri[p]]++;
      tri[q] = j;
      tv[q] = vv[p];
    }
  return SparseMatrix(n, m, std::move(tcp), std::move(tri), std::move(tv));
}

SparseMatrix spgemm(const SparseMatrix& A, const SparseMatrix& B) {
  if (A.cols() != B.rows())
    throw DimensionMismatch("spgemm: inner dimensions " + std::to_string(A.cols()) + " and " +
                            std::to_string(B.rows()) + " differ");
  const int m = A.rows(), n = B.cols();
  const auto acp = A.col_ptr();
  const auto ari = A.row_idx();
  const auto av = A.values();
  const auto bcp = B.col_ptr();
  const auto bri = B.row_idx();
  const auto bv = B.values();

  std::vector<int> mark(static_cast<std::size_t>(m), -1);
  std::vector<double> work(static_cast<std::size_t>(m), 0.0);
  std::vector<int> cp(static_cast<std::size_t>(n) + 1, 0), ri, pattern;
  std::vector<double> v;
  ri.reserve(static_cast<std::size_t>(A.nnz() + B.nnz()));
  v.reserve(ri.capacity());
  for (int j = 0; j < n; ++j) {
    pattern.clear();
    for (int pb = bcp[j]; pb < bcp[j + 1]; ++pb) {
      const int k = bri[pb];
      const double bkj = bv[pb];
      for (int pa = acp[k]; pa < acp[k + 1]; ++pa) {
        const int i = ari[pa];
        if (mark[i] != j) {
          mark[i] = j;
          work[i] = av[pa] * bkj;
          pattern.push_back(i);
        } else {
          work[i] += av[pa] * bkj;
        }
      }
    }
    std::sort(pattern.begin(), pattern.end());
    for (const int i : pattern)
      if (work[i] != 0.0) {
        ri.push_back(i);
        v.push_back(work[i]);
      }
    cp[j + 1] = static_cast<int>(ri.size());
  }
  return SparseMatrix(m, n, std::move(cp), std::move(ri), std::move(v));
}

SparseMatrix add(const SparseMatrix& A, const SparseMatrix& B, double alpha, double beta) {
  if (A.rows() != B.rows() || A.cols() != B.cols())
    throw DimensionMismatch("add: shapes differ");
  const auto acp = A.col_ptr();
  const auto ari = A.row_idx();
  const auto av = A.values();
  const auto bcp = B.col_ptr();
  const auto bri = B.row_idx();
  const auto bv = B.values();
  std::vector<int> cp(static_cast<std::size_t>(A.cols()) + 1, 0), ri;
  std::vector<double> v;
  ri.reserve(static_cast<std::size_t>(A.nnz() + B.nnz()));
  v.reserve(ri.capacity());
  auto push = [&](int r, double x) {
    if (x != 0.0) {
      ri.push_back(r);
      v.push_back(x);
    }
  };
  for (int j = 0; j < A.cols(); ++j) {
    int pa = acp[j], pb = bcp[j];
    while (pa < acp[j + 1] || pb < bcp[j + 1]) {
      const int ra = pa < acp[j + 1] ? ari[pa] : std::numeric_limits<int>::max();
      const int rb = pb < bcp[j + 1] ? bri[pb] : std::numeric_limits<int>::max();
      if (ra == rb) {
        push(ra, alpha * av[pa++] + beta * bv[pb++]);
      } else if (ra < rb) {
        push(ra, alpha * av[pa++]);
      } else {
        push(rb, beta * bv[pb++]);
      }
    }
    cp[j + 1] = static_cast<int>(ri.size());
  }
  return SparseMatrix(A.rows(), A.cols(), std::move(cp), std::move(ri), std::move(v));
}

SparseMatrix scale(const SparseMatrix& A, double alpha) {
  if (alpha == 0.0) return SparseMatrix(A.rows(), A.cols());
  std::vector<int> cp(A.col_ptr().begin(), A.col_ptr().end());
  std::vector<int> ri(A.row_idx().begin(), A.row_idx().end());
  std::vector<double> v(A.values().begin(), A.values().end());
  for (auto& x : v) x *= alpha;
  return canonicalize(SparseMatrix(A.rows(), A.cols(), std::move(cp), std::move(ri), std::move(v)));
}

Vector spmv(const SparseMatrix& M, const Vector& x) {
  if (x.size() != M.cols()) throw DimensionMismatch("spmv: vector length mismatch");
  const auto cp = M.col_ptr();
  const auto ri = M.row_idx();
  const auto vv = M.values();
  Vector y = Vector::Zero(M.rows());
  for (int j = 0; j < M.cols(); ++j) {
    const double xj = x[j];
    if (xj == 0.0) continue;
    for (int p = cp[j]; p < cp[j + 1]; ++p) y[ri[p]] += vv[p] * xj;
  }
  return y;
}

Vector spmv_transpose(const SparseMatrix& M, const Vector& x) {
  if (x.size() != M.rows()) throw DimensionMismatch("spmv_transpose: vector length mismatch");
  const auto cp = M.col_ptr();
  const auto ri = M.row_idx();
  const auto vv = M.values();
  Vector y(M.cols());
  for (int j = 0; j < M.cols(); ++j) {
    double s = 0.0;
    for (int p = cp[j]; p < cp[j + 1]; ++p) s += vv[p] * x[ri[p]];
    y[j] = s;
  }
  return y;
}

DenseMatrix spmm(const SparseMatrix& M, const DenseMatrix& X) {
  if (X.rows() != M.cols()) throw DimensionMismatch("spmm: row count mismatch");
  DenseMatrix Y(M.rows(), X.cols());
  for (Eigen::Index c = 0; c < X.cols(); ++c) Y.col(c) = spmv(M, X.col(c));
  return Y;
}

SparseMatrix select_rows(const SparseMatrix& M, std::span<const int> idx) {
  check_index_list(idx, M.rows(), "select_rows");
  std::vector<int> newpos(static_cast<std::size_t>(M.rows()), -1);
  for (std::size_t k = 0; k < idx.size(); ++k) newpos[idx[k]] = static_cast<int>(k);
  const auto cp = M.col_ptr();
  const auto ri = M.row_idx();
  const auto vv = M.values();
  std::vector<int> ncp(static_cast<std::size_t>(M.cols()) + 1, 0), nri;
  std::vector<double> nv;
  for (int j = 0; j < M.cols(); ++j) {
    for (int p = cp[j]; p < cp[j + 1]; ++p)
      if (newpos[ri[p]] >= 0) {
        nri.push_back(newpos[ri[p]]);
        nv.push_back(vv[p]);
      }
    ncp[j + 1] = static_cast<int>(nri.size());
  }
  return SparseMatrix(static_cast<int>(idx.size()), M.cols(), std::move(ncp), std::move(nri),
                      std::move(nv));
}

DenseMatrix select_rows(const DenseMatrix& M, std::span<const int> idx) {
  check_index_list(idx, static_cast<int>(M.rows()), "select_rows");
  DenseMatrix out(static_cast<Eigen::Index>(idx.size()), M.cols());
  for (std::size_t k = 0; k < idx.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = M.row(idx[k]);
  return out;
}

Vector select_rows(const Vector& v, std::span<const int> idx) {
  check_index_list(idx, static_cast<int>(v.size()), "select_rows");
  Vector out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) out[static_cast<Eigen::Index>(k)] = v[idx[k]];
  return out;
}

SparseMatrix select_principal(const SparseMatrix& M, std::span<const int> idx) {
  return transpose(select_rows(transpose(select_rows(M, idx)), idx));
}

bool is_structurally_symmetric(const SparseMatrix& M) {
  if (M.rows() != M.cols()) return false;
  const SparseMatrix T = transpose(M);
  return std::equal(M.col_ptr().begin(), M.col_ptr().end(), T.col_ptr().begin()) &&
         std::equal(M.row_idx().begin(), M.row_idx().end(), T.row_idx().begin());
}

double max_abs(const SparseMatrix& M) {
  double m = 0.0;
  for (const double v : M.values()) m = std::max(m, std::abs(v));
  return m;
}

SparseMatrix read_matrix_market(std::istream& in) {
  std::string line;
  int lineno = 0;
  if (!std::getline(in, line)) throw ParseError("Matrix Market: empty input");
  ++lineno;
  std::istringstream banner(line);
  std::string tag, object, format, field, symmetry;
  banner >> tag >> object >> format >> field >> symmetry;
  auto lower = [](std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
  };
  if (tag != "%%MatrixMarket" || lower(object) != "matrix" || lower(format) != "coordinate")
    throw ParseError("Matrix Market: line 1: expected '%%MatrixMarket matrix coordinate' banner");
  field = lower(field);
  symmetry = lower(symmetry);
  if (field != "real" && field != "integer" && field != "pattern")
    throw ParseError("Matrix Market: unsupported field '" + field + "'");
  if (symmetry != "general" && symmetry != "symmetric")
    throw ParseError("Matrix Market: unsupported symmetry '" + symmetry + "'");

  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line[0] != '%') break;
  }
  std::istringstream size_line(line);
  long long m = 0, n = 0, nz = 0;
  if (!(size_line >> m >> n >> nz) || m < 0 || n < 0 || nz < 0)
    throw ParseError("Matrix Market: line " + std::to_string(lineno) + ": bad size line");

  std::vector<Triplet> t;
  t.reserve(static_cast<std::size_t>(symmetry == "symmetric" ? 2 * nz : nz));
  long long read = 0;
  while (read < nz && std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '%') continue;
    std::istringstream es(line);
    long long i = 0, j = 0;
    double v = 1.0;
    if (!(es >> i >> j) || (field != "pattern" && !(es >> v)))
      throw ParseError("Matrix Market: line " + std::to_string(lineno) + ": bad entry");
    if (i < 1 || i > m || j < 1 || j > n)
      throw ParseError("Matrix Market: line " + std::to_string(lineno) + ": index out of range");
    t.push_back({static_cast<int>(i - 1), static_cast<int>(j - 1), v});
    if (symmetry == "symmetric" && i != j)
      t.push_back({static_cast<int>(j - 1), static_cast<int>(i - 1), v});
    ++read;
  }
  if (read != nz)
    throw ParseError("Matrix Market: expected " + std::to_string(nz) + " entries, found " +
                     std::to_string(read));
  return from_triplets(static_cast<int>(m), static_cast<int>(n), t);
}

SparseMatrix read_matrix_market_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  return read_matrix_market(in);
}

void write_matrix_market(std::ostream& out, const SparseMatrix& M, bool symmetric) {
  if (symmetric && M.rows() != M.cols())
    throw DimensionMismatch("symmetric Matrix Market output requires a square matrix");
  const auto cp = M.col_ptr();
  const auto ri = M.row_idx();
  const auto vv = M.values();
  int count = 0;
  for (int j = 0; j < M.cols(); ++j)
    for (int p = cp[j]; p < cp[j + 1]; ++p)
      if (!symmetric || ri[p] >= j) ++count;
  out << "%%MatrixMarket matrix coordinate real " << (symmetric ? "symmetric" : "general")
      << '\n'
      << M.rows() << ' ' << M.cols() << ' ' << count << '\n';
  out << std::setprecision(17);
  for (int j = 0; j < M.cols(); ++j)
    for (int p = cp[j]; p < cp[j + 1]; ++p)
      if (!symmetric || ri[p] >= j) out << ri[p] + 1 << ' ' << j + 1 << ' ' << vv[p] << '\n';
}

void write_matrix_market_file(const std::string& path, const SparseMatrix& M, bool symmetric) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write '" + path + "'");
  write_matrix_market(out, M, symmetric);
}

}  // namespace hsar
