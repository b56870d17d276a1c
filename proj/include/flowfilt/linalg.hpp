#pragma once

#include <Eigen/Dense>

#include <string>

namespace flowfilt {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

Matrix symmetrized(const Matrix& a);

double max_abs(const Matrix& a);

/// Ascending eigenvalues of the symmetric part of `a`.
Vector symmetric_eigenvalues(const Matrix& a);

/// Throws ValidationError naming `what` and the smallest eigenvalue unless
/// `a` is symmetric positive definite.
void require_spd(const Matrix& a, const std::string& what);

/// Inverse of a symmetric positive definite matrix (via LLT). Throws
/// ValidationError naming `what` on failure.
Matrix spd_inverse(const Matrix& a, const std::string& what);

/// Symmetric square root and inverse square root via eigendecomposition.
Matrix spd_sqrt(const Matrix& a);
Matrix spd_inv_sqrt(const Matrix& a);

}  // namespace flowfilt
