#pragma once

#include "flowfilt/ensemble.hpp"
#include "flowfilt/quadratic_model.hpp"

#include <cstddef>

namespace flowfilt {

/// Unbiased sample mean and covariance (divisor N − 1).
struct SampleMoments {
  Vector mean;
  Matrix covariance;
  std::size_t count = 0;
};

/// Requires N ≥ 2. Summation order is fixed, so serial and parallel
/// evaluations agree bitwise.
SampleMoments sample_moments(const Matrix& particles, Execution exec = Execution::parallel);
SampleMoments sample_moments(const Ensemble& ens, Execution exec = Execution::parallel);

/// √((m − μ)ᵀ (Σ/N)⁻¹ (m − μ)), the standardized error of the sample mean.
double mahalanobis_gap(const SampleMoments& sm, const PosteriorMoments& ref);

/// ‖Σ^{-1/2} S Σ^{-1/2} − I‖_F, a scale-free covariance error.
double covariance_gap(const SampleMoments& sm, const PosteriorMoments& ref);

/// Per-coordinate sample skewness and excess kurtosis.
struct MarginalShape {
  Vector skewness;
  Vector excess_kurtosis;
};

MarginalShape marginal_shape(const Matrix& particles, Execution exec = Execution::parallel);

}  // namespace flowfilt
