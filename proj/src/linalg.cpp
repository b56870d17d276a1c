#include "flowfilt/linalg.hpp"

#include "flowfilt/error.hpp"

#include <cmath>
#include <sstream>

namespace flowfilt {

Matrix symmetrized(const Matrix& a) {
  if (a.rows() != a.cols()) {
    throw ValidationError("matrix is " + std::to_string(a.rows()) + "x" +
                          std::to_string(a.cols()) + ", expected square");
  }
  return 0.5 * (a + a.transpose());
}

double max_abs(const Matrix& a) { return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff(); }

Vector symmetric_eigenvalues(const Matrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetrized(a), Eigen::EigenvaluesOnly);
  return eig.eigenvalues();
}

void require_spd(const Matrix& a, const std::string& what) {
  if (a.rows() != a.cols() || a.rows() == 0) {
    throw ValidationError(what + " must be a non-empty square matrix");
  }
  const Vector ev = symmetric_eigenvalues(a);
  const double top = std::max(std::abs(ev.maxCoeff()), 1.0);
  if (!(ev.minCoeff() > 1e-14 * top) || !ev.allFinite()) {
    std::ostringstream msg;
    msg << what << " not positive definite (smallest eigenvalue " << ev.minCoeff() << ")";
    throw ValidationError(msg.str());
  }
}

Matrix spd_inverse(const Matrix& a, const std::string& what) {
  require_spd(a, what);
  Eigen::LLT<Matrix> llt(symmetrized(a));
  if (llt.info() != Eigen::Success) {
    throw ValidationError(what + " not positive definite (Cholesky failed)");
  }
  Matrix inv = llt.solve(Matrix::Identity(a.rows(), a.cols()));
  return symmetrized(inv);
}

Matrix spd_sqrt(const Matrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetrized(a));
  const Vector root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
}

Matrix spd_inv_sqrt(const Matrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetrized(a));
  if (!(eig.eigenvalues().minCoeff() > 0.0)) {
    throw ValidationError("inverse square root of a matrix that is not positive definite");
  }
  const Vector root = eig.eigenvalues().cwiseSqrt().cwiseInverse();
  return eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace flowfilt
