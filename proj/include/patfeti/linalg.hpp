#pragma once

// Dense symmetric linear algebra at pattern scale.

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

namespace patfeti {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Column-major block of interface or pattern data (one column per right
/// hand side).
using DenseBlock = Eigen::MatrixXd;

inline constexpr double kDefaultPivotTol = 1e-10;
inline constexpr double kDefaultRankTol = 1e-8;

/// Pivoted Cholesky factorization of a symmetric positive semidefinite
/// matrix, A = P L Lᵀ Pᵀ restricted to the numerical rank, with an
/// orthonormal basis of the kernel. Immutable after construction.
class SymFactorization {
 public:
  SymFactorization() = default;

  [[nodiscard]] Index order() const noexcept { return order_; }
  [[nodiscard]] Index rank() const noexcept { return rank_; }
  [[nodiscard]] Index kernel_dim() const noexcept { return order_ - rank_; }
  [[nodiscard]] const Matrix& kernel_basis() const noexcept { return kernel_; }
  [[nodiscard]] double pivot_tolerance() const noexcept { return pivot_tol_; }

  /// Minimum-norm least-squares solution: kernel components of the right
  /// hand side are projected out before solving and out of the result.
  [[nodiscard]] Vector pseudo_solve(const Vector& rhs) const;

  /// Column-wise pseudo_solve. Every column goes through the same sequence
  /// of floating point operations regardless of the block width, so the
  /// result is bit-identical to solving the columns one at a time.
  [[nodiscard]] DenseBlock pseudo_solve_block(const DenseBlock& rhs) const;

 private:
  friend SymFactorization factor_sym(const Matrix& a, double pivot_tol);

  void solve_in_place(DenseBlock& x) const;
  void project_out_kernel(DenseBlock& x) const;

  Index order_ = 0;
  Index rank_ = 0;
  double pivot_tol_ = kDefaultPivotTol;
  std::vector<Index> perm_;  // perm_[k] = original index of pivot k
  Matrix lower_;             // order × rank, leading rank × rank block is L11
  Matrix kernel_;            // order × kernel_dim, orthonormal columns
};

/// Throws Error{NotSymmetric} if max |A − Aᵀ| > 1e-12·max|A| and
/// Error{IndefiniteMatrix} if a negative pivot beyond tolerance shows up.
[[nodiscard]] SymFactorization factor_sym(const Matrix& a, double pivot_tol = kDefaultPivotTol);

[[nodiscard]] DenseBlock pseudo_solve_block(const SymFactorization& f, const DenseBlock& b);

/// Orthonormal basis of the numerically significant column space of R.
/// Columns with singular value below tol·σ_max are dropped. Each returned
/// column is sign-normalized so that its largest entry is positive.
[[nodiscard]] Matrix kernel_orthonormalize(const Matrix& r, double tol = 1e-10);

struct InvSqrtResult {
  Matrix transform;     // N, size × effective_rank
  Index effective_rank = 0;
  Index dropped = 0;
};

/// N with Nᵀ M N = I of size effective_rank. Eigen-directions with
/// eigenvalue below rank_tol·λ_max are discarded. When nothing is dropped,
/// N is the symmetric inverse square root M^{-1/2}.
[[nodiscard]] InvSqrtResult inv_sqrt_sym(const Matrix& m, double rank_tol = kDefaultRankTol);

/// A·X evaluated as a sequence of column axpys in a fixed order. The result
/// for one column does not depend on how many columns are in X.
[[nodiscard]] DenseBlock multiply_fixed(const Matrix& a, const DenseBlock& x);

[[nodiscard]] double max_abs(const Matrix& a) noexcept;
[[nodiscard]] bool all_finite(const Matrix& a) noexcept;

}  // namespace patfeti
