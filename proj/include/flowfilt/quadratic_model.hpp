#pragma once

#include "flowfilt/linalg.hpp"

namespace flowfilt {

/// log-density of the form ½xᵀAx + bᵀx + c. A is symmetrized on construction.
class QuadraticLogDensity {
 public:
  QuadraticLogDensity(const Matrix& curvature, Vector linear, double constant);

  int dim() const { return static_cast<int>(linear_.size()); }
  const Matrix& curvature() const { return curvature_; }
  const Vector& linear() const { return linear_; }
  double constant() const { return constant_; }

  double operator()(const Vector& x) const;
  Vector gradient(const Vector& x) const;

 private:
  Matrix curvature_;
  Vector linear_;
  double constant_;
};

/// Natural parameters of N(mean, covariance): A = −Σ⁻¹, b = Σ⁻¹μ, c = −½μᵀΣ⁻¹μ − ½ln det(2πΣ).
QuadraticLogDensity from_gaussian_prior(const Vector& mean, const Matrix& covariance);

/// log h(x) for z = Hx + v, v ~ N(0, R). The curvature −HᵀR⁻¹H is singular when d < n.
QuadraticLogDensity from_linear_gaussian_measurement(const Matrix& h, const Matrix& r,
                                                     const Vector& z);

struct PosteriorMoments {
  Vector mean;
  Matrix covariance;
};

/// Eigen-factorization of the homotopy precision −S(λ) = −(A_g + λA_h).
/// Construction fails with SingularHomotopyError when the spectrum is not
/// positive with condition number below 1e10.
class PrecisionFactor {
 public:
  PrecisionFactor(const Matrix& neg_hessian, double lambda);

  /// (−S)⁻¹ v
  Vector solve(const Vector& v) const;
  /// (−S)⁻¹, i.e. P_μ(λ) and the Lyapunov weight M(λ)
  const Matrix& inverse() const { return inverse_; }
  double log_det() const { return log_det_; }

 private:
  Matrix inverse_;
  double log_det_ = 0.0;
};

/// p(x, λ) ∝ g(x) h(x)^λ for an exponential-quadratic prior g and likelihood h.
/// Requires −A_g positive definite and −A_h positive semi-definite, which
/// keeps A_g + λA_h nonsingular on [0, 1].
class Homotopy {
 public:
  Homotopy(QuadraticLogDensity prior, QuadraticLogDensity likelihood);

  int dim() const { return prior_.dim(); }
  const QuadraticLogDensity& prior() const { return prior_; }
  const QuadraticLogDensity& likelihood() const { return likelihood_; }

  /// S(λ) = A_g + λA_h
  Matrix hessian_log_p(double lambda) const;
  /// b_g + λb_h
  Vector linear_term(double lambda) const;
  Vector grad_log_p(const Vector& x, double lambda) const;
  Vector grad_log_h(const Vector& x) const { return likelihood_.gradient(x); }

  PrecisionFactor precision(double lambda) const;
  PosteriorMoments posterior_moments(double lambda) const;
  double log_gamma(double lambda) const;
  double log_p(const Vector& x, double lambda) const;

 private:
  QuadraticLogDensity prior_;
  QuadraticLogDensity likelihood_;
};

/// Throws ValidationError unless λ ∈ [0, 1] (with 1e-12 slack).
void require_unit_lambda(double lambda);

}  // namespace flowfilt
