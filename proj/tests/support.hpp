#pragma once

#include "flowfilt/estimation_oracle.hpp"
#include "flowfilt/quadratic_model.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace flowfilt::testing {

inline Matrix mat1(double v) { return Matrix::Constant(1, 1, v); }
inline Vector vec1(double v) { return Vector::Constant(1, v); }

inline Vector vec(std::initializer_list<double> values) {
  Vector out(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double v : values) out[i++] = v;
  return out;
}

inline Matrix diag(std::initializer_list<double> values) { return vec(values).asDiagonal(); }

/// Prior N(0,1), H = R = z = 1.
inline Homotopy canonical_1d() {
  return Homotopy(from_gaussian_prior(vec1(0.0), mat1(1.0)),
                  from_linear_gaussian_measurement(mat1(1.0), mat1(1.0), vec1(1.0)));
}

/// Prior N(m, P) with correlation, one coordinate measured: A_h singular.
inline Homotopy partial_2d() {
  Matrix p(2, 2);
  p << 2.0, 0.6, 0.6, 1.0;
  Matrix h(1, 2);
  h << 1.0, 0.0;
  return Homotopy(from_gaussian_prior(vec({0.5, -1.0}), p),
                  from_linear_gaussian_measurement(h, mat1(0.25), vec1(1.2)));
}

/// A_h = 0, b_h = −0.8: a pure exponential tilt.
inline Homotopy exponential_1d() {
  return Homotopy(from_gaussian_prior(vec1(0.0), mat1(1.0)),
                  QuadraticLogDensity(mat1(0.0), vec1(-0.8), 0.0));
}

/// Direct multivariate normal log density, independent of the library's forms.
inline double gaussian_log_pdf(const Vector& x, const Vector& mean, const Matrix& cov) {
  const Eigen::LLT<Matrix> llt(cov);
  const Vector d = x - mean;
  const Vector w = llt.matrixL().solve(d);
  double log_det = 0.0;
  for (Eigen::Index i = 0; i < cov.rows(); ++i) log_det += 2.0 * std::log(llt.matrixL()(i, i));
  return -0.5 * w.squaredNorm() - 0.5 * log_det -
         0.5 * static_cast<double>(x.size()) * std::log(2.0 * std::numbers::pi);
}

inline Matrix random_spd(std::mt19937_64& gen, int n, double floor = 0.5) {
  std::normal_distribution<double> nd;
  Matrix a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = nd(gen);
  return a * a.transpose() + floor * Matrix::Identity(n, n);
}

inline Matrix random_psd(std::mt19937_64& gen, int n, int rank) {
  std::normal_distribution<double> nd;
  Matrix a(n, rank);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < rank; ++j) a(i, j) = nd(gen);
  return a * a.transpose();
}

inline Vector random_vector(std::mt19937_64& gen, int n, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  Vector v(n);
  for (int i = 0; i < n; ++i) v[i] = nd(gen);
  return v;
}

/// Random (A3)-satisfying homotopy with an n×d linear-Gaussian likelihood.
inline Homotopy random_homotopy(std::mt19937_64& gen, int n, int d) {
  std::normal_distribution<double> nd;
  Matrix h(d, n);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < n; ++j) h(i, j) = nd(gen);
  return Homotopy(from_gaussian_prior(random_vector(gen, n), random_spd(gen, n)),
                  from_linear_gaussian_measurement(h, random_spd(gen, d), random_vector(gen, d)));
}

}  // namespace flowfilt::testing
