#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "hsar/cholesky.hpp"
#include "hsar/errors.hpp"
#include "oracle.hpp"

using namespace hsar;

namespace {

SparseMatrix rook_AtA(int rows, int cols, double rho) {
  const auto W = oracle::rook_dense(rows, cols, true);
  const Eigen::MatrixXd A = Eigen::MatrixXd::Identity(W.rows(), W.cols()) - rho * W;
  const auto As = from_dense(A);
  return spgemm(transpose(As), As);
}

Eigen::MatrixXd permuted(const Eigen::MatrixXd& S, const std::vector<int>& perm) {
  const auto n = S.rows();
  Eigen::MatrixXd C(n, n);
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = 0; b < n; ++b) C(a, b) = S(perm[a], perm[b]);
  return C;
}

std::vector<int> random_subset(int n, int k, std::mt19937_64& rng) {
  std::vector<int> all(static_cast<std::size_t>(n));
  std::iota(all.begin(), all.end(), 0);
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(static_cast<std::size_t>(k));
  std::sort(all.begin(), all.end());
  return all;
}

}  // namespace

TEST_CASE("symbolic_order trivial cases") {
  CHECK(symbolic_order(SparseMatrix::identity(1)) == std::vector<int>{0});
  const std::vector<double> d{3, 1, 2, 5};
  CHECK(symbolic_order(SparseMatrix::diagonal(d)) == std::vector<int>{0, 1, 2, 3});
  CHECK_THROWS_AS(symbolic_order(SparseMatrix(2, 3)), InvalidArgument);
}

TEST_CASE("orderings are permutations and reduce fill on grids") {
  const auto S = rook_AtA(5, 5, 0.8);
  const int n = S.rows();
  for (auto method : {Ordering::natural, Ordering::amd, Ordering::nested_dissection}) {
    auto p = symbolic_order(S, method, GridShape{5, 5});
    auto sorted = p;
    std::sort(sorted.begin(), sorted.end());
    std::vector<int> iota(static_cast<std::size_t>(n));
    std::iota(iota.begin(), iota.end(), 0);
    CHECK(sorted == iota);
    const auto F = factor(S, p);
    CHECK(F.nnz() <= n * (n + 1) / 2);
  }
  // Deterministic for a given input.
  CHECK(symbolic_order(S) == symbolic_order(S));

  const auto big = rook_AtA(30, 30, 0.8);
  const auto nat = factor(big, symbolic_order(big, Ordering::natural));
  const auto amd = factor(big, symbolic_order(big, Ordering::amd));
  const auto nd = factor(big, symbolic_order(big, Ordering::nested_dissection, GridShape{30, 30}));
  CHECK(amd.nnz() < nat.nnz());
  CHECK(nd.nnz() < nat.nnz());
  CHECK(amd.logdet() == doctest::Approx(nat.logdet()).epsilon(1e-12));
  CHECK(nd.logdet() == doctest::Approx(nat.logdet()).epsilon(1e-12));
}

TEST_CASE("nested dissection separators split the grid") {
  const auto p = grid_nested_dissection(GridShape{7, 11});
  CHECK(p.size() == 77);
  std::vector<int> seen(77, 0);
  for (int v : p) seen[v]++;
  CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
}

TEST_CASE("factor small hand cases") {
  const auto F = factor(SparseMatrix::identity(3), symbolic_order(SparseMatrix::identity(3)));
  CHECK(F.logdet() == 0.0);
  CHECK(F.L().to_dense() == Eigen::MatrixXd::Identity(3, 3));

  Eigen::MatrixXd S(2, 2);
  S << 4, 2, 2, 3;
  const auto G = factor(from_dense(S), std::vector<int>{0, 1});
  const auto L = G.L().to_dense();
  CHECK(L(0, 0) == doctest::Approx(2.0));
  CHECK(L(1, 0) == doctest::Approx(1.0));
  CHECK(L(1, 1) == doctest::Approx(std::sqrt(2.0)));
  CHECK(L(0, 1) == 0.0);
  CHECK(G.logdet() == doctest::Approx(std::log(8.0)));

  DenseMatrix B(2, 1);
  B << 1, 0;
  const auto X = solve_spd(G, B);
  CHECK(X(0, 0) == doctest::Approx(0.375));
  CHECK(X(1, 0) == doctest::Approx(-0.25));

  const auto I = factor(SparseMatrix::identity(4), std::vector<int>{3, 1, 0, 2});
  const DenseMatrix R = DenseMatrix::Random(4, 3);
  CHECK(solve_spd(I, R) == R);
}

TEST_CASE("factor rejects indefinite and mismatched input") {
  Eigen::MatrixXd S(2, 2);
  S << 1, 2, 2, 1;
  try {
    factor(from_dense(S), std::vector<int>{0, 1});
    FAIL("expected NotPositiveDefinite");
  } catch (const NotPositiveDefinite& e) {
    CHECK(e.pivot() == 1);
    CHECK(e.value() < 0);
  }
  const auto F = factor(SparseMatrix::identity(3), std::vector<int>{0, 1, 2});
  CHECK_THROWS_AS(solve_spd(F, DenseMatrix(DenseMatrix::Zero(2, 1))), DimensionMismatch);
  CHECK_THROWS_AS(factor(SparseMatrix::identity(3), std::vector<int>{0, 1}), DimensionMismatch);
  CHECK_THROWS_AS(factor(SparseMatrix::identity(3), std::vector<int>{0, 1, 1}), InvalidArgument);
}

TEST_CASE("grid A^T A log-determinant against dense Cholesky") {
  const auto S = rook_AtA(10, 10, 0.8);
  const Eigen::MatrixXd D = S.to_dense();
  const double dense = 2.0 * Eigen::LLT<Eigen::MatrixXd>(D).matrixL().toDenseMatrix().diagonal().array().log().sum();
  const auto F = factor(S, symbolic_order(S));
  CHECK(std::abs(F.logdet() - dense) < 1e-8);
}

TEST_CASE("symbolic analysis is reused across values") {
  const auto generic = rook_AtA(6, 6, 0.5);
  const auto sym = analyze(generic, symbolic_order(generic));
  for (double rho : {0.0, 0.3, -0.6, 0.95}) {
    const auto S = rook_AtA(6, 6, rho);
    CHECK(sym->covers(S));
    const auto F = factor(S, sym);
    CHECK(F.logdet() == doctest::Approx(oracle::logdet_spd(S.to_dense())).epsilon(1e-10));
  }
  CHECK_FALSE(sym->covers(from_dense(Eigen::MatrixXd::Ones(36, 36))));
  CHECK_THROWS_AS(factor(from_dense(Eigen::MatrixXd::Ones(36, 36) + 36 * Eigen::MatrixXd::Identity(36, 36)), sym),
                  InvalidArgument);
}

TEST_CASE("random SPD reconstruction, logdet and solves") {
  std::mt19937_64 rng(42);
  for (int rep = 0; rep < 20; ++rep) {
    const int n = 5 + rep * 2;
    const auto D = oracle::random_spd(n, rng);
    const auto S = from_dense(D);
    for (auto method : {Ordering::natural, Ordering::amd}) {
      const auto perm = symbolic_order(S, method);
      const auto F = factor(S, perm);
      const auto L = F.L().to_dense();
      CHECK(oracle::max_abs(L * L.transpose() - permuted(D, perm)) <= 1e-10 * oracle::max_abs(D));
      CHECK(std::abs(F.logdet() - oracle::logdet_spd(D)) <= 1e-8 * std::max(1.0, std::abs(F.logdet())));
      const DenseMatrix B = oracle::random_dense(n, 3, rng);
      const DenseMatrix X = solve_spd(F, B);
      CHECK(oracle::max_abs(X - D.ldlt().solve(B)) < 1e-9);
      CHECK(oracle::max_abs(D * X - B) <= 1e-8 * oracle::max_abs(B));
      CHECK(oracle::max_abs(solve_spd_parallel(F, B) - X) == 0.0);
      const Vector x = solve_spd(F, Vector(B.col(0)));
      CHECK((x - X.col(0)).cwiseAbs().maxCoeff() == 0.0);
    }
  }
}

TEST_CASE("rank-1 updates") {
  SUBCASE("zero vector leaves the factor unchanged") {
    const auto S = rook_AtA(4, 4, 0.6);
    const auto F = factor(S, symbolic_order(S));
    const auto G = rank1_update(F, SparseVector{{2}, {0.0}});
    CHECK(G.L() == F.L());
    CHECK(G.logdet() == F.logdet());
  }
  SUBCASE("identity plus a unit vector") {
    const auto F = factor(SparseMatrix::identity(2), std::vector<int>{0, 1});
    const auto G = rank1_update(F, SparseVector{{0}, {1.0}});
    CHECK(G.logdet() == doctest::Approx(std::log(2.0)));
    CHECK(G.L().to_dense()(0, 0) == doctest::Approx(std::sqrt(2.0)));
  }
  SUBCASE("dense update vectors with fill") {
    std::mt19937_64 rng(17);
    for (int rep = 0; rep < 10; ++rep) {
      const int n = 10 + 3 * rep;
      const auto D = oracle::random_spd(n, rng, 0.1);
      const auto F = factor(from_dense(D), symbolic_order(from_dense(D)));
      SparseVector v;
      std::uniform_real_distribution<double> u(-1, 1);
      for (int k : random_subset(n, 4, rng)) {
        v.idx.push_back(k);
        v.val.push_back(u(rng));
      }
      const auto G = rank1_update(F, v);
      Vector vp = Vector::Zero(n);
      for (std::size_t k = 0; k < v.idx.size(); ++k) vp(v.idx[k]) = v.val[k];
      Vector vo(n);
      for (int k = 0; k < n; ++k) vo(F.perm()[k]) = vp(k);
      const Eigen::MatrixXd Du = D + vo * vo.transpose();
      const auto L = G.L().to_dense();
      CHECK(oracle::max_abs(L * L.transpose() - permuted(Du, F.perm())) <= 1e-10 * oracle::max_abs(Du));
      CHECK(std::abs(G.logdet() - oracle::logdet_spd(Du)) < 1e-9);
    }
  }
  SUBCASE("updates by sqrt(theta) e_i match refactorization") {
    const auto S = rook_AtA(8, 8, 0.7);
    const auto F = factor(S, symbolic_order(S));
    std::mt19937_64 rng(23);
    const auto obs = random_subset(64, 12, rng);
    const double theta = 1.7;
    auto G = F;
    for (int i : obs) G = rank1_update(G, SparseVector{{F.pinv()[i]}, {std::sqrt(theta)}});
    std::vector<double> d(64, 0.0);
    for (int i : obs) d[i] = theta;
    const auto R = factor(add(S, SparseMatrix::diagonal(d)), F.perm());
    CHECK(std::abs(G.logdet() - R.logdet()) < 1e-10);
  }
}

TEST_CASE("factor_observed_system") {
  const auto S = rook_AtA(12, 12, 0.8);
  const auto F = factor(S, symbolic_order(S, Ordering::amd));
  std::vector<int> all(144);
  std::iota(all.begin(), all.end(), 0);

  SUBCASE("theta zero is the A^T A factor") {
    const auto G = factor_observed_system(F, S, all, 0.0);
    CHECK(G.logdet() == F.logdet());
  }
  SUBCASE("all observed, theta one") {
    const auto G = factor_observed_system(F, S, all, 1.0);
    const Eigen::MatrixXd D = S.to_dense() + Eigen::MatrixXd::Identity(144, 144);
    CHECK(std::abs(G.logdet() - oracle::logdet_spd(D)) < 1e-8);
  }
  SUBCASE("update and refactor routes agree") {
    std::mt19937_64 rng(31);
    for (double frac : {0.1, 0.3, 0.5}) {
      const auto obs = random_subset(144, static_cast<int>(frac * 144), rng);
      const auto U = factor_observed_system(F, S, obs, 2.0, kDefaultUpdateCutoff, ObservedSystemRoute::rank1_updates);
      const auto R = factor_observed_system(F, S, obs, 2.0, kDefaultUpdateCutoff, ObservedSystemRoute::refactor);
      const auto A = factor_observed_system(F, S, obs, 2.0);
      CHECK(std::abs(U.logdet() - R.logdet()) < 1e-10);
      CHECK(A.logdet() == doctest::Approx(R.logdet()).epsilon(1e-12));
      CHECK(R.perm() == F.perm());
      const DenseMatrix B = oracle::random_dense(144, 3, rng);
      CHECK(oracle::max_abs(solve_spd(U, B) - solve_spd(R, B)) < 1e-8);
    }
  }
  SUBCASE("argument checks") {
    CHECK_THROWS_AS(factor_observed_system(F, S, all, -1.0), InvalidArgument);
    CHECK_THROWS_AS(factor_observed_system(F, S, std::vector<int>{3, 2}, 1.0), InvalidArgument);
    CHECK_THROWS_AS(factor_observed_system(F, S, std::vector<int>{200}, 1.0), IndexOutOfRange);
  }
}
