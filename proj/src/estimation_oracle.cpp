#include "flowfilt/estimation_oracle.hpp"

#include "flowfilt/ensemble_stats.hpp"
#include "flowfilt/error.hpp"
#include "flowfilt/kernels.hpp"
#include "flowfilt/rng.hpp"

namespace flowfilt {

namespace {

void check_shapes(const PosteriorMoments& init, const LinearDynamics& dyn,
                  const MeasurementModel& mm) {
  const auto n = init.mean.size();
  std::vector<std::string> failures;
  if (init.covariance.rows() != n || init.covariance.cols() != n) {
    failures.emplace_back("initial covariance does not match mean length");
  }
  if (dyn.transition.rows() != n || dyn.transition.cols() != n) {
    failures.emplace_back("dynamics F must be " + std::to_string(n) + "x" + std::to_string(n));
  }
  if (dyn.process_noise.rows() != n || dyn.process_noise.cols() != n) {
    failures.emplace_back("dynamics W must be " + std::to_string(n) + "x" + std::to_string(n));
  }
  if (mm.h.cols() != n) failures.emplace_back("measurement H must have n columns");
  if (mm.r.rows() != mm.h.rows() || mm.r.cols() != mm.h.rows()) {
    failures.emplace_back("measurement R must be d x d with d = rows of H");
  }
  if (!failures.empty()) throw ValidationError(failures);
}

}  // namespace

PosteriorMoments conjugate_posterior(const Vector& prior_mean, const Matrix& prior_cov,
                                     const QuadraticLogDensity& likelihood) {
  const Matrix prior_precision = spd_inverse(prior_cov, "prior covariance");
  const Matrix precision = symmetrized(prior_precision - likelihood.curvature());
  Eigen::LLT<Matrix> llt(precision);
  if (llt.info() != Eigen::Success) {
    throw ValidationError("improper posterior: precision not positive definite");
  }
  PosteriorMoments out;
  out.covariance = symmetrized(llt.solve(Matrix::Identity(precision.rows(), precision.cols())));
  out.mean = out.covariance * (prior_precision * prior_mean + likelihood.linear());
  return out;
}

PosteriorMoments kalman_update(const Vector& mean, const Matrix& cov, const MeasurementModel& mm,
                               const Vector& z) {
  const Matrix innovation = symmetrized(mm.h * cov * mm.h.transpose() + mm.r);
  Eigen::LLT<Matrix> llt(innovation);
  if (llt.info() != Eigen::Success) {
    throw ValidationError("innovation covariance not positive definite");
  }
  const Matrix gain = llt.solve(mm.h * cov).transpose();
  const Matrix i_kh = Matrix::Identity(cov.rows(), cov.cols()) - gain * mm.h;
  PosteriorMoments out;
  out.mean = mean + gain * (z - mm.h * mean);
  out.covariance = symmetrized(i_kh * cov * i_kh.transpose() + gain * mm.r * gain.transpose());
  return out;
}

PosteriorMoments kalman_predict(const PosteriorMoments& state, const LinearDynamics& dyn) {
  return {dyn.transition * state.mean,
          symmetrized(dyn.transition * state.covariance * dyn.transition.transpose() +
                      dyn.process_noise)};
}

std::vector<PosteriorMoments> kalman_filter(const PosteriorMoments& init, const LinearDynamics& dyn,
                                            const MeasurementModel& mm,
                                            const std::vector<Vector>& measurements) {
  check_shapes(init, dyn, mm);
  std::vector<PosteriorMoments> out;
  PosteriorMoments state = init;
  for (const Vector& z : measurements) {
    const PosteriorMoments predicted = kalman_predict(state, dyn);
    state = kalman_update(predicted.mean, predicted.covariance, mm, z);
    out.push_back(state);
  }
  return out;
}

std::vector<SequentialStep> sequential_flow_filter(
    const PosteriorMoments& init, const LinearDynamics& dyn, const MeasurementModel& mm,
    const std::vector<Vector>& measurements, const DiffusionSchedule& diffusion,
    const IntegratorConfig& cfg, std::size_t particles,
    const std::function<DiagnosticsSink*(std::size_t)>& sink_for_step) {
  check_shapes(init, dyn, mm);
  std::vector<SequentialStep> out;
  if (measurements.empty()) return out;
  if (particles < 2) throw ValidationError("sequential filter needs at least 2 particles");

  const Matrix process_factor = psd_factor(clamp_psd(dyn.process_noise));
  const Eigen::LLT<Matrix> init_llt(symmetrized(init.covariance));
  if (init_llt.info() != Eigen::Success) {
    throw ValidationError("initial covariance not positive definite");
  }
  Ensemble ens =
      make_ensemble(Matrix::Zero(init.mean.size(), static_cast<Eigen::Index>(particles)));
  kernels::gaussian_draws(ens.particles, ens.ids, init.mean, init_llt.matrixL().toDenseMatrix(),
                          NoiseKey{derive_seed(cfg.seed, 0), StreamDomain::prior_sample}, 0,
                          cfg.execution);

  PosteriorMoments analytic = init;
  for (std::size_t k = 0; k < measurements.size(); ++k) {
    const std::uint64_t step_seed = derive_seed(cfg.seed, k + 1);
    try {
      const std::size_t bad = kernels::linear_gaussian_map(
          ens.particles, ens.ids, dyn.transition, process_factor,
          NoiseKey{step_seed, StreamDomain::process_noise}, 0, cfg.execution);
      if (bad != kernels::kNoFailure) throw DivergenceError(bad, 0.0);
      ens.lambda = 0.0;

      const PosteriorMoments predicted = kalman_predict(analytic, dyn);
      Homotopy hom(from_gaussian_prior(predicted.mean, predicted.covariance),
                   from_linear_gaussian_measurement(mm.h, mm.r, measurements[k]));
      IntegratorConfig step_cfg = cfg;
      step_cfg.seed = step_seed;
      DiagnosticsSink* sink = sink_for_step ? sink_for_step(k) : nullptr;
      ens = flow_to_posterior(std::move(ens), hom, diffusion, step_cfg, sink);

      const SampleMoments sm = sample_moments(ens, cfg.execution);
      analytic = hom.posterior_moments(1.0);
      out.push_back({predicted, {sm.mean, sm.covariance}, ens});
    } catch (const NumericalError& e) {
      throw NumericalError("sequential step " + std::to_string(k) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace flowfilt
