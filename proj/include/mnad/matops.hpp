#pragma once

// Dense helpers shared by every analysis module: column-stacking vec/mat,
// Kronecker products, spectral radius and LU-based linear solves.
//
// Convention: vectorize() stacks columns, so entry (i, j) of an n x m matrix
// lands at index j * n + i and vectorize(A * M * B^T) == kron(B, A) *
// vectorize(M). The second-moment operator in moments.hpp relies on this.

#include <Eigen/Dense>
#include <unsupported/Eigen/KroneckerProduct>

#include <cmath>
#include <complex>
#include <string>

#include "mnad/error.hpp"

namespace mnad {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatrixXd = Matrix<double>;
using VectorXd = Vector<double>;

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  return m.allFinite();
}

template <typename Derived>
Vector<typename Derived::Scalar> vectorize(const Eigen::MatrixBase<Derived>& m) {
  return m.reshaped();
}

template <typename Derived>
Matrix<typename Derived::Scalar> matricize(const Eigen::MatrixBase<Derived>& v,
                                           Eigen::Index rows, Eigen::Index cols) {
  if (v.size() != rows * cols) {
    throw Error(ErrorCode::dimension_mismatch,
                "matricize: vector of length " + std::to_string(v.size()) +
                    " cannot be reshaped to " + std::to_string(rows) + "x" +
                    std::to_string(cols));
  }
  return v.reshaped(rows, cols);
}

template <typename DerivedA, typename DerivedB>
Matrix<typename DerivedA::Scalar> kron(const Eigen::MatrixBase<DerivedA>& a,
                                       const Eigen::MatrixBase<DerivedB>& b) {
  return Eigen::kroneckerProduct(a.eval(), b.eval()).eval();
}

/// Largest eigenvalue magnitude of a general (nonsymmetric) square matrix.
template <typename Derived>
typename Derived::Scalar spectral_radius(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  if (m.rows() != m.cols()) {
    throw Error(ErrorCode::dimension_mismatch, "spectral_radius: matrix is not square");
  }
  if (m.size() == 0) return Scalar(0);
  if (!m.allFinite()) {
    throw Error(ErrorCode::eigen_failure, "spectral_radius: non-finite entries");
  }
  Eigen::EigenSolver<Matrix<Scalar>> solver(m.eval(), /*computeEigenvectors=*/false);
  if (solver.info() != Eigen::Success) {
    throw Error(ErrorCode::eigen_failure, "spectral_radius: eigenvalue iteration did not converge");
  }
  return solver.eigenvalues().cwiseAbs().maxCoeff();
}

/// Solves A x = b through an LU factorization. Throws singular_matrix when
/// the reciprocal condition estimate drops below 1e-14.
template <typename DerivedA, typename DerivedB>
Vector<typename DerivedA::Scalar> solve_linear(const Eigen::MatrixBase<DerivedA>& a,
                                               const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  if (a.rows() != a.cols() || a.rows() != b.rows() || b.cols() != 1) {
    throw Error(ErrorCode::dimension_mismatch, "solve_linear: nonconformant system");
  }
  if (a.rows() == 0) return Vector<Scalar>();
  Eigen::PartialPivLU<Matrix<Scalar>> lu(a.eval());
  const Scalar rcond = lu.rcond();
  if (!(rcond > Scalar(1e-14))) {
    throw Error(ErrorCode::singular_matrix,
                "solve_linear: matrix is singular to working precision (rcond = " +
                    std::to_string(static_cast<double>(rcond)) + ")");
  }
  return lu.solve(b.eval());
}

/// (M + M^T) / 2
template <typename Derived>
Matrix<typename Derived::Scalar> symmetrize(const Eigen::MatrixBase<Derived>& m) {
  return (m + m.transpose()) / typename Derived::Scalar(2);
}

}  // namespace mnad
