#include "flowfilt/ensemble_stats.hpp"

#include "flowfilt/error.hpp"
#include "flowfilt/kernels.hpp"

#include <cmath>

namespace flowfilt {

SampleMoments sample_moments(const Matrix& particles, Execution exec) {
  const auto count = static_cast<std::size_t>(particles.cols());
  if (count < 2) {
    throw InsufficientSamplesError("sample moments need at least 2 particles, got " +
                                   std::to_string(count));
  }
  const double n = static_cast<double>(count);
  SampleMoments out;
  out.count = count;
  out.mean = kernels::column_sum(particles, exec) / n;
  out.covariance = symmetrized(kernels::centered_scatter(particles, out.mean, exec) / (n - 1.0));
  return out;
}

SampleMoments sample_moments(const Ensemble& ens, Execution exec) {
  return sample_moments(ens.particles, exec);
}

double mahalanobis_gap(const SampleMoments& sm, const PosteriorMoments& ref) {
  const Matrix scaled = ref.covariance / static_cast<double>(sm.count);
  Eigen::LLT<Matrix> llt(symmetrized(scaled));
  if (llt.info() != Eigen::Success) {
    throw ValidationError("reference covariance is singular");
  }
  const Vector diff = sm.mean - ref.mean;
  return std::sqrt(diff.dot(llt.solve(diff)));
}

double covariance_gap(const SampleMoments& sm, const PosteriorMoments& ref) {
  require_spd(ref.covariance, "reference covariance");
  const Matrix w = spd_inv_sqrt(ref.covariance);
  const Matrix whitened = w * sm.covariance * w;
  return (whitened - Matrix::Identity(whitened.rows(), whitened.cols())).norm();
}

MarginalShape marginal_shape(const Matrix& particles, Execution exec) {
  const auto count = static_cast<double>(particles.cols());
  if (particles.cols() < 4) throw InsufficientSamplesError("marginal shape needs >= 4 particles");
  const Vector mean = kernels::column_sum(particles, exec) / count;
  const Vector m2 = kernels::centered_power_sum(particles, mean, 2, exec) / count;
  const Vector m3 = kernels::centered_power_sum(particles, mean, 3, exec) / count;
  const Vector m4 = kernels::centered_power_sum(particles, mean, 4, exec) / count;
  MarginalShape out;
  out.skewness = m3.array() / m2.array().pow(1.5);
  out.excess_kurtosis = m4.array() / m2.array().square() - 3.0;
  return out;
}

}  // namespace flowfilt
