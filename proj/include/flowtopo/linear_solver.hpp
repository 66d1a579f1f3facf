#pragma once

#include <memory>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

namespace flowtopo {

using SparseMatrix = Eigen::SparseMatrix<double>;

/// Assembled saddle-point system over (free velocity dofs, pressure dofs,
/// mean-zero multiplier).
struct SaddleSystem {
  SparseMatrix matrix;
  Eigen::VectorXd rhs;
};

/// Sparse LU backed by UMFPACK. The symbolic analysis is kept across
/// factorizations as long as the sparsity pattern stays identical, and both
/// A x = b and A^T x = b solves reuse one numeric factorization.
class SparseLu {
 public:
  SparseLu();
  ~SparseLu();
  SparseLu(const SparseLu&) = delete;
  SparseLu& operator=(const SparseLu&) = delete;
  SparseLu(SparseLu&&) noexcept;
  SparseLu& operator=(SparseLu&&) noexcept;

  /// Throws SingularSystemError (with the failing column) on breakdown.
  void factorize(const SparseMatrix& matrix);

  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const;
  Eigen::VectorXd solve_transposed(const Eigen::VectorXd& rhs) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Direct solver that first eliminates small dof groups which couple to no
/// other group (the element bubbles), then factors the Schur complement with
/// SparseLu. The condensation is exact, so solves against the full operator
/// and its transpose are recovered from one factorization. Patterns of
/// successive operators are compared and the symbolic work is reused when
/// they match.
class CondensedLu {
 public:
  /// Each group lists system indices; groups must be disjoint.
  explicit CondensedLu(std::vector<std::vector<int>> groups = {});
  ~CondensedLu();
  CondensedLu(const CondensedLu&) = delete;
  CondensedLu& operator=(const CondensedLu&) = delete;
  CondensedLu(CondensedLu&&) noexcept;
  CondensedLu& operator=(CondensedLu&&) noexcept;

  /// Throws InvalidArgument when two groups are coupled, SingularSystemError
  /// when a group block or the Schur complement is singular.
  void factorize(const SparseMatrix& matrix);
  Eigen::VectorXd solve(const Eigen::VectorXd& rhs, bool transposed = false) const;

  /// factorize + solve, with the result polished by iterative refinement on
  /// the same factorization and then passed through check_residual.
  Eigen::VectorXd solve(const SparseMatrix& matrix, const Eigen::VectorXd& rhs,
                        bool transposed = false);

  int factorizations() const { return factorizations_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int factorizations_ = 0;
};

/// One-shot solve with residual check ||Ax - b|| <= 1e-10 (1 + ||b||).
Eigen::VectorXd solve_linear(const SaddleSystem& system);

/// Same check for an already factorized operator. Throws SingularSystemError
/// when the residual bound is violated.
void check_residual(const SparseMatrix& matrix, const Eigen::VectorXd& x,
                    const Eigen::VectorXd& rhs, bool transposed = false);

}  // namespace flowtopo
