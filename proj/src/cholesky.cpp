#include "hsar/cholesky.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>

#include <amd.h>

#include "hsar/errors.hpp"

namespace hsar {

namespace {

void check_permutation(const std::vector<int>& perm, int n) {
  if (static_cast<int>(perm.size()) != n)
    throw DimensionMismatch("permutation length " + std::to_string(perm.size()) +
                            " does not match matrix size " + std::to_string(n));
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  for (const int p : perm) {
    if (p < 0 || p >= n || seen[p]) throw InvalidArgument("not a permutation");
    seen[p] = 1;
  }
}

std::vector<int> inverse_permutation(const std::vector<int>& perm) {
  std::vector<int> pinv(perm.size());
  for (std::size_t k = 0; k < perm.size(); ++k) pinv[perm[k]] = static_cast<int>(k);
  return pinv;
}

std::vector<int> amd_permutation(const SparseMatrix& S) {
  const int n = S.rows();
  std::vector<int> perm(static_cast<std::size_t>(n));
  if (n == 0) return perm;
  double control[AMD_CONTROL];
  double info[AMD_INFO];
  amd_defaults(control);
  const int status = amd_order(n, S.col_ptr().data(), S.row_idx().data(), perm.data(), control, info);
  if (status != AMD_OK && status != AMD_OK_BUT_JUMBLED)
    throw InvalidArgument("AMD ordering failed with status " + std::to_string(status));
  return perm;
}

void dissect(const GridShape& g, int r0, int r1, int c0, int c1, int sep,
             std::vector<int>& out) {
  const int h = r1 - r0, w = c1 - c0;
  if (h <= 0 || w <= 0) return;
  if (std::max(h, w) <= 2 * sep + 2) {
    for (int i = r0; i < r1; ++i)
      for (int j = c0; j < c1; ++j) out.push_back(i * g.cols + j);
    return;
  }
  if (w >= h) {
    const int mid = c0 + (w - sep) / 2;
    dissect(g, r0, r1, c0, mid, sep, out);
    dissect(g, r0, r1, mid + sep, c1, sep, out);
    for (int i = r0; i < r1; ++i)
      for (int j = mid; j < mid + sep; ++j) out.push_back(i * g.cols + j);
  } else {
    const int mid = r0 + (h - sep) / 2;
    dissect(g, r0, mid, c0, c1, sep, out);
    dissect(g, mid + sep, r1, c0, c1, sep, out);
    for (int i = mid; i < mid + sep; ++i)
      for (int j = c0; j < c1; ++j) out.push_back(i * g.cols + j);
  }
}

}  // namespace

std::vector<int> grid_nested_dissection(GridShape grid, int sep_width) {
  if (grid.rows < 0 || grid.cols < 0 || sep_width < 1)
    throw InvalidArgument("grid_nested_dissection: invalid grid or separator width");
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(grid.size()));
  dissect(grid, 0, grid.rows, 0, grid.cols, sep_width, out);
  return out;
}

std::vector<int> symbolic_order(const SparseMatrix& S, Ordering method,
                                std::optional<GridShape> grid) {
  if (S.rows() != S.cols()) throw InvalidArgument("symbolic_order: matrix is not square");
  const int n = S.rows();
  switch (method) {
    case Ordering::natural: {
      std::vector<int> p(static_cast<std::size_t>(n));
      std::iota(p.begin(), p.end(), 0);
      return p;
    }
    case Ordering::nested_dissection:
      if (grid && grid->size() == n) return grid_nested_dissection(*grid);
      [[fallthrough]];
    case Ordering::amd:
      break;
  }
  // A diagonal matrix admits no fill; keep the identity so the ordering is
  // trivially reproducible.
  bool diagonal = true;
  for (int j = 0; j < n && diagonal; ++j)
    for (int p = S.col_ptr()[j]; p < S.col_ptr()[j + 1]; ++p)
      if (S.row_idx()[p] != j) {
        diagonal = false;
        break;
      }
  if (diagonal) return symbolic_order(S, Ordering::natural);
  return amd_permutation(S);
}

SymbolicCholesky::SymbolicCholesky(const SparseMatrix& S, std::vector<int> perm)
    : n_(S.rows()), perm_(std::move(perm)), pattern_(S) {
  if (S.rows() != S.cols()) throw InvalidArgument("Cholesky analysis: matrix is not square");
  check_permutation(perm_, n_);
  pinv_ = inverse_permutation(perm_);
  const auto cp = S.col_ptr();
  const auto ri = S.row_idx();

  // Elimination tree of P S P^T, reading the upper triangle from the
  // symmetric storage of S.
  parent_.assign(static_cast<std::size_t>(n_), -1);
  std::vector<int> ancestor(static_cast<std::size_t>(n_), -1);
  for (int k = 0; k < n_; ++k) {
    const int col = perm_[k];
    for (int p = cp[col]; p < cp[col + 1]; ++p) {
      int i = pinv_[ri[p]];
      while (i != -1 && i < k) {
        const int inext = ancestor[i];
        ancestor[i] = k;
        if (inext == -1) parent_[i] = k;
        i = inext;
      }
    }
  }

  // Row patterns of L by walking the tree from each entry of C(:, k).
  std::vector<int> mark(static_cast<std::size_t>(n_), -1);
  std::vector<int> colcount(static_cast<std::size_t>(n_), 1);
  rp_.assign(static_cast<std::size_t>(n_) + 1, 0);
  rj_.clear();
  for (int k = 0; k < n_; ++k) {
    mark[k] = k;
    const auto start = rj_.size();
    const int col = perm_[k];
    for (int p = cp[col]; p < cp[col + 1]; ++p) {
      for (int i = pinv_[ri[p]]; i < k && mark[i] != k; i = parent_[i]) {
        rj_.push_back(i);
        mark[i] = k;
      }
    }
    std::sort(rj_.begin() + static_cast<std::ptrdiff_t>(start), rj_.end());
    for (auto q = start; q < rj_.size(); ++q) ++colcount[rj_[q]];
    rp_[k + 1] = static_cast<int>(rj_.size());
  }

  lp_.assign(static_cast<std::size_t>(n_) + 1, 0);
  for (int j = 0; j < n_; ++j) lp_[j + 1] = lp_[j] + colcount[j];
  li_.assign(static_cast<std::size_t>(lp_[n_]), 0);
  std::vector<int> next(static_cast<std::size_t>(n_));
  for (int j = 0; j < n_; ++j) {
    li_[lp_[j]] = j;
    next[j] = lp_[j] + 1;
  }
  for (int k = 0; k < n_; ++k)
    for (int q = rp_[k]; q < rp_[k + 1]; ++q) li_[next[rj_[q]]++] = k;
}

bool SymbolicCholesky::covers(const SparseMatrix& S) const {
  if (S.rows() != n_ || S.cols() != n_) return false;
  const auto cp = S.col_ptr();
  const auto ri = S.row_idx();
  const auto pcp = pattern_.col_ptr();
  const auto pri = pattern_.row_idx();
  for (int j = 0; j < n_; ++j) {
    int q = pcp[j];
    for (int p = cp[j]; p < cp[j + 1]; ++p) {
      while (q < pcp[j + 1] && pri[q] < ri[p]) ++q;
      if (q == pcp[j + 1] || pri[q] != ri[p]) return false;
    }
  }
  return true;
}

std::shared_ptr<const SymbolicCholesky> analyze(const SparseMatrix& S, std::vector<int> perm) {
  return std::make_shared<const SymbolicCholesky>(S, std::move(perm));
}

CholeskyFactor CholeskyFactor::numeric(const SparseMatrix& S,
                                       std::shared_ptr<const SymbolicCholesky> sym) {
  if (!sym) throw InvalidArgument("numeric factorization requires a symbolic analysis");
  if (S.rows() != S.cols() || S.rows() != sym->size())
    throw DimensionMismatch("numeric factorization: matrix size does not match analysis");
  if (!sym->covers(S))
    throw InvalidArgument("numeric factorization: pattern not covered by the analysis");

  const int n = sym->size();
  CholeskyFactor F;
  F.perm_ = sym->perm_;
  F.pinv_ = sym->pinv_;
  F.lp_ = sym->lp_;
  F.li_ = sym->li_;
  F.lx_.assign(sym->li_.size(), 0.0);
  F.symbolic_ = sym;

  const auto cp = S.col_ptr();
  const auto ri = S.row_idx();
  const auto sv = S.values();
  double maxdiag = 0.0;
  for (int j = 0; j < n; ++j) maxdiag = std::max(maxdiag, S.coeff(j, j));
  const double tol = kPivotTolerance * maxdiag;

  const auto& lp = F.lp_;
  const auto& li = F.li_;
  auto& lx = F.lx_;
  const auto& pinv = sym->pinv_;
  const auto& perm = sym->perm_;
  const auto& rp = sym->rp_;
  const auto& rj = sym->rj_;

  std::vector<double> x(static_cast<std::size_t>(n), 0.0);
  std::vector<int> next(lp.begin(), lp.end() - 1);
  for (int k = 0; k < n; ++k) {
    const int col = perm[k];
    for (int p = cp[col]; p < cp[col + 1]; ++p) {
      const int i = pinv[ri[p]];
      if (i <= k) x[i] = sv[p];
    }
    double d = x[k];
    x[k] = 0.0;
    for (int q = rp[k]; q < rp[k + 1]; ++q) {
      const int j = rj[q];
      const double lkj = x[j] / lx[lp[j]];
      x[j] = 0.0;
      for (int p = lp[j] + 1; p < next[j]; ++p) x[li[p]] -= lx[p] * lkj;
      d -= lkj * lkj;
      lx[next[j]++] = lkj;
    }
    if (!(d > tol)) throw NotPositiveDefinite(k, d);
    lx[lp[k]] = std::sqrt(d);
    ++next[k];
  }
  F.recompute_logdet();
  return F;
}

SparseMatrix CholeskyFactor::L() const {
  const int n = size();
  return SparseMatrix(n, n, lp_, li_, lx_);
}

void CholeskyFactor::recompute_logdet() {
  double s = 0.0;
  for (int j = 0; j < size(); ++j) s += std::log(lx_[lp_[j]]);
  logdet_ = 2.0 * s;
}

void CholeskyFactor::lsolve(std::span<double> x) const {
  const int n = size();
  for (int j = 0; j < n; ++j) {
    const double xj = x[j] /= lx_[lp_[j]];
    if (xj == 0.0) continue;
    for (int p = lp_[j] + 1; p < lp_[j + 1]; ++p) x[li_[p]] -= lx_[p] * xj;
  }
}

void CholeskyFactor::ltsolve(std::span<double> x) const {
  for (int j = size() - 1; j >= 0; --j) {
    double s = x[j];
    for (int p = lp_[j] + 1; p < lp_[j + 1]; ++p) s -= lx_[p] * x[li_[p]];
    x[j] = s / lx_[lp_[j]];
  }
}

void CholeskyFactor::update_in_place(std::span<const int> idx, std::span<const double> val) {
  if (idx.size() != val.size()) throw DimensionMismatch("rank-1 update: index/value lengths differ");
  const int n = size();
  for (const int i : idx)
    if (i < 0 || i >= n) throw IndexOutOfRange("rank-1 update: index out of range");
  std::vector<int> nz;
  for (std::size_t k = 0; k < idx.size(); ++k)
    if (val[k] != 0.0) nz.push_back(idx[k]);
  if (nz.empty()) return;
  std::sort(nz.begin(), nz.end());
  if (std::adjacent_find(nz.begin(), nz.end()) != nz.end())
    throw InvalidArgument("rank-1 update: duplicate indices");

  // A single-entry vector cannot create fill: the nonzeros of w stay inside
  // the column patterns along the elimination-tree path.  Otherwise walk the
  // path symbolically and splice in any new entries first.
  if (nz.size() > 1) {
    std::vector<std::vector<int>> extra(static_cast<std::size_t>(n));
    bool fill = false;
    std::set<int> reach(nz.begin(), nz.end());
    while (!reach.empty()) {
      const int k = *reach.begin();
      reach.erase(reach.begin());
      for (const int i : reach)
        if (!std::binary_search(li_.begin() + lp_[k] + 1, li_.begin() + lp_[k + 1], i)) {
          extra[k].push_back(i);
          fill = true;
        }
      reach.insert(li_.begin() + lp_[k] + 1, li_.begin() + lp_[k + 1]);
    }
    if (fill) {
      std::vector<int> nlp(static_cast<std::size_t>(n) + 1, 0), nli;
      std::vector<double> nlx;
      nli.reserve(li_.size() + 64);
      nlx.reserve(li_.size() + 64);
      for (int j = 0; j < n; ++j) {
        int p = lp_[j];
        std::size_t e = 0;
        const auto& ex = extra[j];
        while (p < lp_[j + 1] || e < ex.size()) {
          if (e == ex.size() || (p < lp_[j + 1] && li_[p] < ex[e])) {
            nli.push_back(li_[p]);
            nlx.push_back(lx_[p]);
            ++p;
          } else {
            nli.push_back(ex[e++]);
            nlx.push_back(0.0);
          }
        }
        nlp[j + 1] = static_cast<int>(nli.size());
      }
      lp_ = std::move(nlp);
      li_ = std::move(nli);
      lx_ = std::move(nlx);
    }
  }

  std::vector<double> w(static_cast<std::size_t>(n), 0.0);
  for (std::size_t k = 0; k < idx.size(); ++k) w[idx[k]] = val[k];
  double beta = 1.0;
  for (int j = nz.front(); j != -1;) {
    int p = lp_[j];
    const double alpha = w[j] / lx_[p];
    const double beta2 = std::sqrt(beta * beta + alpha * alpha);
    const double delta = beta / beta2;
    const double gamma = alpha / (beta2 * beta);
    lx_[p] = delta * lx_[p] + gamma * w[j];
    if (!(lx_[p] > 0.0) || !std::isfinite(lx_[p])) throw NotPositiveDefinite(j, lx_[p]);
    beta = beta2;
    for (++p; p < lp_[j + 1]; ++p) {
      const double w1 = w[li_[p]];
      const double w2 = w1 - alpha * lx_[p];
      w[li_[p]] = w2;
      lx_[p] = delta * lx_[p] + gamma * w1;
    }
    w[j] = 0.0;
    j = lp_[j] + 1 < lp_[j + 1] ? li_[lp_[j] + 1] : -1;
  }
  recompute_logdet();
}

CholeskyFactor factor(const SparseMatrix& S, std::vector<int> perm) {
  return CholeskyFactor::numeric(S, analyze(S, std::move(perm)));
}

CholeskyFactor factor(const SparseMatrix& S, std::shared_ptr<const SymbolicCholesky> symbolic) {
  return CholeskyFactor::numeric(S, std::move(symbolic));
}

namespace {

void solve_column(const CholeskyFactor& F, const double* b, double* x, std::vector<double>& work) {
  const int n = F.size();
  const auto& perm = F.perm();
  for (int k = 0; k < n; ++k) work[k] = b[perm[k]];
  F.lsolve(work);
  F.ltsolve(work);
  for (int k = 0; k < n; ++k) x[perm[k]] = work[k];
}

}  // namespace

DenseMatrix solve_spd(const CholeskyFactor& F, const DenseMatrix& B) {
  if (B.rows() != F.size()) throw DimensionMismatch("solve_spd: right-hand side has wrong length");
  DenseMatrix X(B.rows(), B.cols());
  std::vector<double> work(static_cast<std::size_t>(F.size()));
  for (Eigen::Index c = 0; c < B.cols(); ++c) solve_column(F, B.col(c).data(), X.col(c).data(), work);
  return X;
}

Vector solve_spd(const CholeskyFactor& F, const Vector& b) {
  if (b.size() != F.size()) throw DimensionMismatch("solve_spd: right-hand side has wrong length");
  Vector x(b.size());
  std::vector<double> work(static_cast<std::size_t>(F.size()));
  solve_column(F, b.data(), x.data(), work);
  return x;
}

DenseMatrix solve_spd_parallel(const CholeskyFactor& F, const DenseMatrix& B) {
  if (B.rows() != F.size()) throw DimensionMismatch("solve_spd: right-hand side has wrong length");
  DenseMatrix X(B.rows(), B.cols());
  const long ncols = static_cast<long>(B.cols());
#pragma omp parallel
  {
    std::vector<double> work(static_cast<std::size_t>(F.size()));
#pragma omp for schedule(static)
    for (long c = 0; c < ncols; ++c) solve_column(F, B.col(c).data(), X.col(c).data(), work);
  }
  return X;
}

CholeskyFactor rank1_update(const CholeskyFactor& F, const SparseVector& v) {
  CholeskyFactor G = F;
  G.update_in_place(v.idx, v.val);
  return G;
}

CholeskyFactor factor_observed_system(const CholeskyFactor& F_AtA, const SparseMatrix& AtA,
                                      std::span<const int> obs_idx, double theta,
                                      double update_cutoff, ObservedSystemRoute route) {
  if (!(theta >= 0.0)) throw InvalidArgument("factor_observed_system: theta must be >= 0");
  const int n = F_AtA.size();
  if (AtA.rows() != n || AtA.cols() != n)
    throw DimensionMismatch("factor_observed_system: A^T A does not match the factor");
  for (std::size_t k = 0; k < obs_idx.size(); ++k) {
    if (obs_idx[k] < 0 || obs_idx[k] >= n) throw IndexOutOfRange("observed index out of range");
    if (k > 0 && obs_idx[k] <= obs_idx[k - 1])
      throw InvalidArgument("observed indices must be strictly increasing");
  }
  if (theta == 0.0 || obs_idx.empty()) return F_AtA;

  bool use_updates = false;
  switch (route) {
    case ObservedSystemRoute::automatic:
      use_updates = static_cast<double>(obs_idx.size()) <= update_cutoff * n;
      break;
    case ObservedSystemRoute::rank1_updates:
      use_updates = true;
      break;
    case ObservedSystemRoute::refactor:
      use_updates = false;
      break;
  }

  if (use_updates) {
    CholeskyFactor G = F_AtA;
    const double s = std::sqrt(theta);
    const auto& pinv = F_AtA.pinv();
    for (const int i : obs_idx) {
      const int k = pinv[i];
      G.update_in_place(std::span<const int>(&k, 1), std::span<const double>(&s, 1));
    }
    return G;
  }

  std::vector<double> d(static_cast<std::size_t>(n), 0.0);
  for (const int i : obs_idx) d[i] = theta;
  const SparseMatrix S = add(AtA, SparseMatrix::diagonal(d));
  auto sym = F_AtA.symbolic();
  if (!sym || !sym->covers(S)) sym = analyze(S, F_AtA.perm());
  return CholeskyFactor::numeric(S, std::move(sym));
}

}  // namespace hsar
