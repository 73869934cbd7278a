#include "patfeti/linalg.hpp"

#include "patfeti/error.hpp"

#include <lapacke.h>

#include <algorithm>
#include <cmath>
#include <string>

namespace patfeti {

namespace {

void normalize_column_signs(Matrix& q) {
  for (Index c = 0; c < q.cols(); ++c) {
    Index arg = 0;
    double best = -1.0;
    for (Index i = 0; i < q.rows(); ++i) {
      const double v = std::abs(q(i, c));
      if (v > best * (1.0 + 1e-12)) {
        best = v;
        arg = i;
      }
    }
    if (q(arg, c) < 0.0) q.col(c) = -q.col(c);
  }
}

Matrix orthonormal_basis_full_width(const Matrix& n) {
  Eigen::HouseholderQR<Matrix> qr(n);
  Matrix q = qr.householderQ() * Matrix::Identity(n.rows(), n.cols());
  normalize_column_signs(q);
  return q;
}

}  // namespace

double max_abs(const Matrix& a) noexcept {
  return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff();
}

bool all_finite(const Matrix& a) noexcept {
  for (Index j = 0; j < a.cols(); ++j)
    for (Index i = 0; i < a.rows(); ++i)
      if (!std::isfinite(a(i, j))) return false;
  return true;
}

DenseBlock multiply_fixed(const Matrix& a, const DenseBlock& x) {
  if (a.cols() != x.rows()) {
    throw Error(Errc::DimensionMismatch, "multiply_fixed: " + std::to_string(a.cols()) +
                                             " columns vs " + std::to_string(x.rows()) + " rows");
  }
  const Index m = a.rows();
  DenseBlock y = DenseBlock::Zero(m, x.cols());
  for (Index c = 0; c < x.cols(); ++c) {
    double* yc = y.col(c).data();
    for (Index k = 0; k < a.cols(); ++k) {
      const double xk = x(k, c);
      if (xk == 0.0) continue;
      const double* ak = a.col(k).data();
      for (Index i = 0; i < m; ++i) yc[i] += ak[i] * xk;
    }
  }
  return y;
}

SymFactorization factor_sym(const Matrix& a, double pivot_tol) {
  if (a.rows() != a.cols()) {
    throw Error(Errc::DimensionMismatch, "factor_sym: matrix is " + std::to_string(a.rows()) + "x" +
                                             std::to_string(a.cols()));
  }
  if (!all_finite(a)) throw Error(Errc::IndefiniteMatrix, "factor_sym: non-finite entries");
  const double scale = max_abs(a);
  const double asym = a.size() == 0 ? 0.0 : (a - a.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-12 * scale) {
    throw Error(Errc::NotSymmetric, "factor_sym: max |A - A^T| = " + std::to_string(asym));
  }

  SymFactorization f;
  const Index n = a.rows();
  f.order_ = n;
  f.pivot_tol_ = pivot_tol;
  f.perm_.resize(static_cast<std::size_t>(n));
  if (n == 0) return f;

  const double max_diag = a.diagonal().maxCoeff();
  const double abs_tol = pivot_tol * std::max(max_diag, 0.0);

  Matrix work = a;
  std::vector<lapack_int> piv(static_cast<std::size_t>(n));
  lapack_int rank = 0;
  const lapack_int info = LAPACKE_dpstrf(LAPACK_COL_MAJOR, 'L', static_cast<lapack_int>(n), work.data(),
                                         static_cast<lapack_int>(n), piv.data(), &rank, abs_tol);
  if (info < 0) throw Error(Errc::IndefiniteMatrix, "dpstrf rejected argument " + std::to_string(-info));
  if (max_diag <= 0.0) rank = 0;
  for (Index k = 0; k < n; ++k) f.perm_[static_cast<std::size_t>(k)] = piv[static_cast<std::size_t>(k)] - 1;

  const Index r = rank;
  f.rank_ = r;
  f.lower_ = work.topLeftCorner(r, r).triangularView<Eigen::Lower>();

  if (r == n) return f;

  // Rank deficient: rebuild the coupling block from the original matrix and
  // check that the trailing Schur complement is numerically zero.
  const Index k = n - r;
  Matrix a_perm(n, n);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < n; ++i) a_perm(i, j) = a(f.perm_[static_cast<std::size_t>(i)], f.perm_[static_cast<std::size_t>(j)]);

  Matrix l21t = a_perm.block(0, r, r, k);  // A12 = L11 L21ᵀ
  if (r > 0) f.lower_.triangularView<Eigen::Lower>().solveInPlace(l21t);
  Matrix schur = a_perm.bottomRightCorner(k, k) - l21t.transpose() * l21t;
  schur = 0.5 * (schur + schur.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(schur, Eigen::EigenvaluesOnly);
  const double lambda_min = eig.eigenvalues().minCoeff();
  if (lambda_min < -std::max(abs_tol, 1e-300)) {
    throw Error(Errc::IndefiniteMatrix,
                "factor_sym: trailing Schur complement eigenvalue " + std::to_string(lambda_min));
  }

  // Kernel in pivoted coordinates: [-L11⁻ᵀ L21ᵀ ; I].
  Matrix top = -l21t;
  if (r > 0) f.lower_.transpose().triangularView<Eigen::Upper>().solveInPlace(top);
  Matrix kern(n, k);
  for (Index i = 0; i < r; ++i) kern.row(f.perm_[static_cast<std::size_t>(i)]) = top.row(i);
  for (Index i = 0; i < k; ++i) {
    kern.row(f.perm_[static_cast<std::size_t>(r + i)]).setZero();
    kern(f.perm_[static_cast<std::size_t>(r + i)], i) = 1.0;
  }
  kern = orthonormal_basis_full_width(kern);

  // One refinement sweep: subtract the particular solution of A x = A v.
  if (r > 0) {
    DenseBlock av = a * kern;
    f.solve_in_place(av);
    kern -= av;
    kern = orthonormal_basis_full_width(kern);
  }
  f.kernel_ = kern;
  return f;
}

void SymFactorization::project_out_kernel(DenseBlock& x) const {
  const Index n = order_;
  for (Index c = 0; c < x.cols(); ++c) {
    double* xc = x.col(c).data();
    for (Index q = 0; q < kernel_.cols(); ++q) {
      const double* rq = kernel_.col(q).data();
      double coef = 0.0;
      for (Index i = 0; i < n; ++i) coef += rq[i] * xc[i];
      for (Index i = 0; i < n; ++i) xc[i] -= coef * rq[i];
    }
  }
}

// x holds right hand sides in original ordering; on exit the particular
// solution with zero trailing pivoted components.
void SymFactorization::solve_in_place(DenseBlock& x) const {
  const Index n = order_;
  const Index r = rank_;
  const Index m = x.cols();
  DenseBlock y(r, m);
  for (Index c = 0; c < m; ++c)
    for (Index i = 0; i < r; ++i) y(i, c) = x(perm_[static_cast<std::size_t>(i)], c);

  // L y = b, column oriented.
  for (Index j = 0; j < r; ++j) {
    const double* lj = lower_.col(j).data();
    const double djj = lj[j];
    for (Index c = 0; c < m; ++c) {
      double* yc = y.col(c).data();
      const double v = yc[j] / djj;
      yc[j] = v;
      if (v == 0.0) continue;
      for (Index i = j + 1; i < r; ++i) yc[i] -= lj[i] * v;
    }
  }
  // Lᵀ x = y, dot-product form over columns of L.
  for (Index j = r - 1; j >= 0; --j) {
    const double* lj = lower_.col(j).data();
    const double djj = lj[j];
    for (Index c = 0; c < m; ++c) {
      double* yc = y.col(c).data();
      double s = yc[j];
      for (Index i = j + 1; i < r; ++i) s -= lj[i] * yc[i];
      yc[j] = s / djj;
    }
  }

  x.setZero(n, m);
  for (Index c = 0; c < m; ++c)
    for (Index i = 0; i < r; ++i) x(perm_[static_cast<std::size_t>(i)], c) = y(i, c);
}

DenseBlock SymFactorization::pseudo_solve_block(const DenseBlock& rhs) const {
  if (rhs.rows() != order_) {
    throw Error(Errc::DimensionMismatch, "pseudo_solve_block: " + std::to_string(rhs.rows()) +
                                             " rows, factorization order " + std::to_string(order_));
  }
  DenseBlock x = rhs;
  project_out_kernel(x);
  solve_in_place(x);
  project_out_kernel(x);
  return x;
}

Vector SymFactorization::pseudo_solve(const Vector& rhs) const {
  return pseudo_solve_block(rhs);
}

DenseBlock pseudo_solve_block(const SymFactorization& f, const DenseBlock& b) {
  return f.pseudo_solve_block(b);
}

Matrix kernel_orthonormalize(const Matrix& r, double tol) {
  if (r.cols() == 0 || r.rows() == 0 || max_abs(r) == 0.0) return Matrix(r.rows(), 0);
  Eigen::JacobiSVD<Matrix> svd(r, Eigen::ComputeThinU);
  const auto& sigma = svd.singularValues();
  const double cutoff = tol * sigma(0);
  Index keep = 0;
  while (keep < sigma.size() && sigma(keep) > cutoff) ++keep;
  Matrix q = svd.matrixU().leftCols(keep);
  normalize_column_signs(q);
  return q;
}

InvSqrtResult inv_sqrt_sym(const Matrix& m, double rank_tol) {
  if (m.rows() != m.cols()) throw Error(Errc::DimensionMismatch, "inv_sqrt_sym: matrix not square");
  InvSqrtResult out;
  const Index n = m.rows();
  if (n == 0) {
    out.transform.resize(0, 0);
    return out;
  }
  const Matrix sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
  const Vector& lam = eig.eigenvalues();  // ascending
  const double lam_max = lam(n - 1);
  const double lam_min = lam(0);
  if (lam_max <= 0.0) {
    if (lam_min < 0.0) {
      throw Error(Errc::NegativeEigenvalueBeyondTolerance,
                  "inv_sqrt_sym: no positive eigenvalue, min " + std::to_string(lam_min));
    }
    out.transform.resize(n, 0);
    out.dropped = n;
    return out;
  }
  if (lam_min < -rank_tol * lam_max) {
    throw Error(Errc::NegativeEigenvalueBeyondTolerance,
                "inv_sqrt_sym: eigenvalue " + std::to_string(lam_min) + " vs max " + std::to_string(lam_max));
  }
  const double cutoff = rank_tol * lam_max;
  Index first = 0;
  while (first < n && lam(first) <= cutoff) ++first;
  const Index rank = n - first;
  out.effective_rank = rank;
  out.dropped = first;
  const Matrix v = eig.eigenvectors().rightCols(rank);
  const Vector scale = lam.tail(rank).cwiseSqrt().cwiseInverse();
  if (rank == n) {
    out.transform = v * scale.asDiagonal() * v.transpose();
  } else {
    out.transform = v * scale.asDiagonal();
    normalize_column_signs(out.transform);
  }
  return out;
}

}  // namespace patfeti
