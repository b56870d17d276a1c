#include "flowfilt/quadratic_model.hpp"

#include "flowfilt/error.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

namespace flowfilt {

namespace {

constexpr double kConditionLimit = 1e10;

double log_two_pi() { return std::log(2.0 * std::numbers::pi); }

}  // namespace

void require_unit_lambda(double lambda) {
  if (!(lambda >= -1e-12 && lambda <= 1.0 + 1e-12)) {
    throw ValidationError("lambda=" + std::to_string(lambda) + " outside [0, 1]");
  }
}

QuadraticLogDensity::QuadraticLogDensity(const Matrix& curvature, Vector linear, double constant)
    : linear_(std::move(linear)), constant_(constant) {
  if (linear_.size() < 1) {
    throw ValidationError("quadratic log-density needs dimension >= 1");
  }
  if (curvature.rows() != linear_.size() || curvature.cols() != linear_.size()) {
    throw ValidationError("curvature is " + std::to_string(curvature.rows()) + "x" +
                          std::to_string(curvature.cols()) + " but linear term has length " +
                          std::to_string(linear_.size()));
  }
  curvature_ = symmetrized(curvature);
  if (!curvature_.allFinite() || !linear_.allFinite() || !std::isfinite(constant_)) {
    throw ValidationError("quadratic log-density has non-finite coefficients");
  }
}

double QuadraticLogDensity::operator()(const Vector& x) const {
  return 0.5 * x.dot(curvature_ * x) + linear_.dot(x) + constant_;
}

Vector QuadraticLogDensity::gradient(const Vector& x) const { return curvature_ * x + linear_; }

QuadraticLogDensity from_gaussian_prior(const Vector& mean, const Matrix& covariance) {
  if (covariance.rows() != mean.size() || covariance.cols() != mean.size()) {
    throw ValidationError("prior covariance shape does not match mean length");
  }
  const Matrix precision = spd_inverse(covariance, "prior covariance");
  const Eigen::LLT<Matrix> llt(symmetrized(covariance));
  const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  const double n = static_cast<double>(mean.size());
  const Vector b = precision * mean;
  const double c = -0.5 * mean.dot(b) - 0.5 * (n * log_two_pi() + log_det);
  return QuadraticLogDensity(-precision, b, c);
}

QuadraticLogDensity from_linear_gaussian_measurement(const Matrix& h, const Matrix& r,
                                                     const Vector& z) {
  if (h.rows() != z.size()) {
    throw ValidationError("measurement matrix H has " + std::to_string(h.rows()) +
                          " rows but z has length " + std::to_string(z.size()));
  }
  if (r.rows() != z.size() || r.cols() != z.size()) {
    throw ValidationError("measurement covariance R shape does not match z");
  }
  const Matrix r_inv = spd_inverse(r, "likelihood.R");
  const Eigen::LLT<Matrix> llt(symmetrized(r));
  const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  const double d = static_cast<double>(z.size());
  const Matrix a = -(h.transpose() * r_inv * h);
  const Vector b = h.transpose() * (r_inv * z);
  const double c = -0.5 * z.dot(r_inv * z) - 0.5 * (d * log_two_pi() + log_det);
  return QuadraticLogDensity(a, b, c);
}

PrecisionFactor::PrecisionFactor(const Matrix& neg_hessian, double lambda) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(neg_hessian);
  const Vector& ev = eig.eigenvalues();
  const double lo = ev.minCoeff();
  const double hi = ev.maxCoeff();
  if (!(hi > 0.0) || !(lo >= hi / kConditionLimit) || !ev.allFinite()) {
    throw SingularHomotopyError(lambda, lo, hi);
  }
  const Matrix& v = eig.eigenvectors();
  inverse_ = symmetrized(v * ev.cwiseInverse().asDiagonal() * v.transpose());
  log_det_ = ev.array().log().sum();
}

Vector PrecisionFactor::solve(const Vector& v) const { return inverse_ * v; }

Homotopy::Homotopy(QuadraticLogDensity prior, QuadraticLogDensity likelihood)
    : prior_(std::move(prior)), likelihood_(std::move(likelihood)) {
  std::vector<std::string> failures;
  if (prior_.dim() != likelihood_.dim()) {
    failures.push_back("prior dimension " + std::to_string(prior_.dim()) +
                       " != likelihood dimension " + std::to_string(likelihood_.dim()));
    throw ValidationError(failures);
  }
  const Vector eg = symmetric_eigenvalues(prior_.curvature());
  const Vector eh = symmetric_eigenvalues(likelihood_.curvature());
  const double scale = std::max({1.0, max_abs(prior_.curvature()), max_abs(likelihood_.curvature())});
  if (!(eg.maxCoeff() < 0.0) || eg.maxCoeff() > -1e-14 * scale) {
    std::ostringstream msg;
    msg << "(A3) violated: prior curvature A_g not negative definite (largest eigenvalue "
        << eg.maxCoeff() << ")";
    failures.push_back(msg.str());
  }
  if (eh.maxCoeff() > 1e-12 * scale) {
    std::ostringstream msg;
    msg << "(A3) violated: likelihood curvature A_h not negative semi-definite (largest eigenvalue "
        << eh.maxCoeff() << ")";
    failures.push_back(msg.str());
  }
  if (!failures.empty()) throw ValidationError(failures);
}

Matrix Homotopy::hessian_log_p(double lambda) const {
  require_unit_lambda(lambda);
  return prior_.curvature() + lambda * likelihood_.curvature();
}

Vector Homotopy::linear_term(double lambda) const {
  return prior_.linear() + lambda * likelihood_.linear();
}

Vector Homotopy::grad_log_p(const Vector& x, double lambda) const {
  return hessian_log_p(lambda) * x + linear_term(lambda);
}

PrecisionFactor Homotopy::precision(double lambda) const {
  return PrecisionFactor(-hessian_log_p(lambda), lambda);
}

PosteriorMoments Homotopy::posterior_moments(double lambda) const {
  const PrecisionFactor pf = precision(lambda);
  // x_μ = −S⁻¹β = (−S)⁻¹β
  return {pf.solve(linear_term(lambda)), pf.inverse()};
}

double Homotopy::log_gamma(double lambda) const {
  const PrecisionFactor pf = precision(lambda);
  const Vector beta = linear_term(lambda);
  const double n = static_cast<double>(dim());
  // −½βᵀS⁻¹β = +½βᵀ(−S)⁻¹β
  return prior_.constant() + lambda * likelihood_.constant() + 0.5 * beta.dot(pf.solve(beta)) +
         0.5 * n * log_two_pi() - 0.5 * pf.log_det();
}

double Homotopy::log_p(const Vector& x, double lambda) const {
  require_unit_lambda(lambda);
  return prior_(x) + lambda * likelihood_(x) - log_gamma(lambda);
}

}  // namespace flowfilt
