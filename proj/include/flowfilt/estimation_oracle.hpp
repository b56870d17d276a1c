#pragma once

#include "flowfilt/ensemble.hpp"
#include "flowfilt/flow_dynamics.hpp"
#include "flowfilt/quadratic_model.hpp"
#include "flowfilt/sde_integrator.hpp"

#include <cstddef>
#include <functional>
#include <vector>

namespace flowfilt {

/// x_k = F x_{k−1} + w, w ~ N(0, W)
struct LinearDynamics {
  Matrix transition;
  Matrix process_noise;
};

/// z = H x + v, v ~ N(0, R)
struct MeasurementModel {
  Matrix h;
  Matrix r;
};

/// Gaussian prior times exp-quadratic likelihood, in information form:
/// cov = (Σ⁻¹ − A_h)⁻¹, mean = cov (Σ⁻¹μ + b_h).
PosteriorMoments conjugate_posterior(const Vector& prior_mean, const Matrix& prior_cov,
                                     const QuadraticLogDensity& likelihood);

/// Gain-form Kalman update with Joseph-form covariance.
PosteriorMoments kalman_update(const Vector& mean, const Matrix& cov, const MeasurementModel& mm,
                               const Vector& z);

PosteriorMoments kalman_predict(const PosteriorMoments& state, const LinearDynamics& dyn);

/// Exact predict/update recursion; one posterior per measurement.
std::vector<PosteriorMoments> kalman_filter(const PosteriorMoments& init, const LinearDynamics& dyn,
                                            const MeasurementModel& mm,
                                            const std::vector<Vector>& measurements);

struct SequentialStep {
  PosteriorMoments predicted;  // analytic prior g for this step
  PosteriorMoments estimate;   // sample moments of the flowed ensemble
  Ensemble ensemble;
};

/// Per measurement: propagate particles through the dynamics, build the
/// homotopy from the analytically predicted prior and the measurement
/// likelihood, flow to λ = 1, report sample moments. `cfg.seed` seeds every
/// stage; per-step seeds are derived from it. `sink_for_step(k)` may return
/// a sink for step k (0-based) or nullptr.
std::vector<SequentialStep> sequential_flow_filter(
    const PosteriorMoments& init, const LinearDynamics& dyn, const MeasurementModel& mm,
    const std::vector<Vector>& measurements, const DiffusionSchedule& diffusion,
    const IntegratorConfig& cfg, std::size_t particles,
    const std::function<DiagnosticsSink*(std::size_t)>& sink_for_step = {});

}  // namespace flowfilt
