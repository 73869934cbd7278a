#include "support.hpp"

#include <gtest/gtest.h>

using namespace patfeti;
using namespace patfeti::testing;

namespace {

Matrix spd(Index n, std::uint64_t seed) {
  const Matrix a = random_matrix(n, n, seed);
  return a * a.transpose() + Matrix::Identity(n, n);
}

// Path graph Laplacian: kernel spanned by the constant vector.
Matrix path_laplacian(Index n) {
  Matrix l = Matrix::Zero(n, n);
  for (Index i = 0; i + 1 < n; ++i) {
    l(i, i) += 1.0;
    l(i + 1, i + 1) += 1.0;
    l(i, i + 1) -= 1.0;
    l(i + 1, i) -= 1.0;
  }
  return l;
}

}  // namespace

TEST(FactorSym, SpdSolveMatchesCholesky) {
  const Matrix a = spd(12, 3);
  const Vector b = random_vector(12, 4);
  const SymFactorization f = factor_sym(a);
  EXPECT_EQ(f.rank(), 12);
  EXPECT_EQ(f.kernel_dim(), 0);
  const Vector ref = a.llt().solve(b);
  EXPECT_LE((f.pseudo_solve(b) - ref).norm(), 1e-12 * ref.norm());
}

TEST(FactorSym, SingularGivesMinimumNormSolution) {
  const Matrix a = path_laplacian(9);
  const SymFactorization f = factor_sym(a);
  ASSERT_EQ(f.kernel_dim(), 1);
  const Vector k = f.kernel_basis().col(0);
  EXPECT_NEAR(std::abs(k.sum()), 3.0, 1e-12);  // ±ones/3
  Vector b = random_vector(9, 5);
  b.array() -= b.mean();
  const Vector x = f.pseudo_solve(b);
  const Vector ref = pinv(a) * b;
  EXPECT_LE((x - ref).norm(), 1e-11 * ref.norm());
  EXPECT_LE((a * x - b).norm(), 1e-11 * b.norm());
}

TEST(FactorSym, RejectsNonSymmetric) {
  Matrix a = spd(5, 1);
  a(0, 1) += 1e-3;
  try {
    (void)factor_sym(a);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NotSymmetric);
  }
}

TEST(FactorSym, RejectsIndefinite) {
  Matrix a = Matrix::Identity(4, 4);
  a(2, 2) = -1.0;
  try {
    (void)factor_sym(a);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::IndefiniteMatrix);
  }
}

TEST(FactorSym, BlockSolveIsBitwiseColumnwise) {
  const SymFactorization f = factor_sym(path_laplacian(15));
  Matrix b = random_matrix(15, 6, 7);
  const Matrix x = f.pseudo_solve_block(b);
  for (Index c = 0; c < b.cols(); ++c) {
    const Vector xc = f.pseudo_solve(b.col(c));
    EXPECT_TRUE(bitwise_equal(x.col(c), xc)) << "column " << c;
  }
}

TEST(InvSqrtSym, FullRankIsSymmetricInverseRoot) {
  const Matrix m = spd(6, 11);
  const InvSqrtResult r = inv_sqrt_sym(m);
  ASSERT_EQ(r.effective_rank, 6);
  EXPECT_EQ(r.dropped, 0);
  Eigen::SelfAdjointEigenSolver<Matrix> es(m);
  const Matrix ref = es.operatorInverseSqrt();
  EXPECT_LE((r.transform - ref).norm(), 1e-10 * ref.norm());
  EXPECT_LE((r.transform.transpose() * m * r.transform - Matrix::Identity(6, 6)).norm(), 1e-10);
}

TEST(InvSqrtSym, DropsDependentDirections) {
  Matrix w = random_matrix(10, 4, 2);
  w.col(3) = w.col(0) - 2.0 * w.col(1);
  const Matrix m = w.transpose() * w;
  const InvSqrtResult r = inv_sqrt_sym(m);
  EXPECT_EQ(r.effective_rank, 3);
  EXPECT_EQ(r.dropped, 1);
  EXPECT_LE((r.transform.transpose() * m * r.transform - Matrix::Identity(3, 3)).norm(), 1e-8);
}

TEST(InvSqrtSym, ZeroMatrixHasNoRank) {
  const InvSqrtResult r = inv_sqrt_sym(Matrix::Zero(3, 3));
  EXPECT_EQ(r.effective_rank, 0);
}

TEST(KernelOrthonormalize, SpanAndOrthonormality) {
  Matrix r = random_matrix(8, 3, 9);
  r.col(2) = 2.0 * r.col(0);
  const Matrix q = kernel_orthonormalize(r);
  ASSERT_EQ(q.cols(), 2);
  EXPECT_LE((q.transpose() * q - Matrix::Identity(2, 2)).norm(), 1e-12);
  // r lies in span(q)
  EXPECT_LE((r - q * (q.transpose() * r)).norm(), 1e-12 * r.norm());
}

TEST(MultiplyFixed, MatchesProductAndIgnoresWidth) {
  const Matrix a = random_matrix(7, 5, 1);
  const Matrix x = random_matrix(5, 4, 2);
  const Matrix y = multiply_fixed(a, x);
  EXPECT_LE((y - a * x).norm(), 1e-14 * (a * x).norm());
  for (Index c = 0; c < x.cols(); ++c) EXPECT_TRUE(bitwise_equal(y.col(c), multiply_fixed(a, x.col(c))));
}
