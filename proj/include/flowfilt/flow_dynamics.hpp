#pragma once

#include "flowfilt/quadratic_model.hpp"

#include <utility>
#include <vector>

namespace flowfilt {

/// Diffusion matrix Q(λ), independent of x. Either identically zero, a
/// constant PSD matrix, or piecewise-linear between (λ, Q) knots.
class DiffusionSchedule {
 public:
  enum class Kind { zero, constant, lambda_dependent };

  static DiffusionSchedule zero(int n);
  static DiffusionSchedule constant(const Matrix& q);
  static DiffusionSchedule scaled_identity(int n, double scale);
  /// Knots must have strictly increasing λ covering [0, 1].
  static DiffusionSchedule knots(std::vector<std::pair<double, Matrix>> table);

  Kind kind() const { return kind_; }
  int dim() const { return n_; }
  bool is_zero() const;

  /// Q(λ), symmetric with eigenvalues clamped at zero.
  Matrix at(double lambda) const;

 private:
  DiffusionSchedule(Kind kind, int n, std::vector<std::pair<double, Matrix>> table);

  Kind kind_;
  int n_;
  std::vector<std::pair<double, Matrix>> table_;
};

/// Coefficients of the affine SDE dx = (Ax + b)dλ + q dw at one λ.
struct FlowCoefficients {
  double lambda = 0.0;
  Matrix drift_jacobian;  // A(λ)
  Vector drift_offset;    // b(λ)
  Matrix noise_factor;    // q(λ), n×m with q qᵀ = Q(λ)
  Matrix diffusion;       // Q(λ)
};

/// K(λ) = ½ S Q S + ½ A_h
Matrix gain_K(const Homotopy& hom, double lambda, const Matrix& q);

/// f = S⁻¹[−∇log h + K S⁻¹ ∇log p]
Vector drift_f(const Homotopy& hom, const Vector& x, double lambda, const Matrix& q);

FlowCoefficients flow_coefficients(const Homotopy& hom, double lambda, const Matrix& q);

/// q with q qᵀ = Q; columns are √μᵢ vᵢ over the numerically nonzero
/// eigenpairs, so m is the numerical rank of Q (zero columns for Q = 0).
Matrix psd_factor(const Matrix& q);

/// Symmetrizes Q, rejects eigenvalues below −1e-12·max(1, max|Q|) and
/// clamps the remainder at zero.
Matrix clamp_psd(const Matrix& q);

}  // namespace flowfilt
