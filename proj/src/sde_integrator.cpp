#include "flowfilt/sde_integrator.hpp"

#include "flowfilt/error.hpp"
#include "flowfilt/kernels.hpp"

#include <cmath>
#include <numeric>

namespace flowfilt {

Ensemble make_ensemble(Matrix particles, double lambda) {
  if (particles.cols() < 1 || particles.rows() < 1) {
    throw ValidationError("ensemble needs at least one particle of dimension >= 1");
  }
  if (!particles.allFinite()) throw ValidationError("ensemble contains non-finite particles");
  Ensemble ens;
  ens.ids.resize(static_cast<std::size_t>(particles.cols()));
  std::iota(ens.ids.begin(), ens.ids.end(), std::uint64_t{0});
  ens.particles = std::move(particles);
  ens.lambda = lambda;
  return ens;
}

Ensemble sample_prior(const Homotopy& hom, std::size_t count, std::uint64_t seed,
                      Execution exec) {
  if (count < 1) throw ValidationError("particle count must be >= 1");
  const PosteriorMoments prior = hom.posterior_moments(0.0);
  const Eigen::LLT<Matrix> llt(prior.covariance);
  const Matrix factor = llt.matrixL();
  Ensemble ens = make_ensemble(Matrix::Zero(hom.dim(), static_cast<Eigen::Index>(count)));
  kernels::gaussian_draws(ens.particles, ens.ids, prior.mean, factor,
                          NoiseKey{seed, StreamDomain::prior_sample}, 0, exec);
  return ens;
}

Ensemble step(Ensemble ens, const Homotopy& hom, const DiffusionSchedule& schedule,
              double dlambda, const NoiseKey& noise, std::uint32_t step_index, Execution exec) {
  if (!(dlambda >= 0.0) || ens.lambda + dlambda > 1.0 + 1e-12) {
    throw ValidationError("step would move lambda from " + std::to_string(ens.lambda) +
                          " past 1");
  }
  if (dlambda == 0.0) return ens;
  const FlowCoefficients coef = flow_coefficients(hom, ens.lambda, schedule.at(ens.lambda));
  const std::size_t bad =
      kernels::euler_maruyama(ens.particles, ens.ids, coef, dlambda, noise, step_index, exec);
  ens.lambda = std::min(1.0, ens.lambda + dlambda);
  if (bad != kernels::kNoFailure) throw DivergenceError(bad, ens.lambda);
  return ens;
}

Ensemble flow_to_posterior(Ensemble ens, const Homotopy& hom, const DiffusionSchedule& schedule,
                           const IntegratorConfig& cfg, DiagnosticsSink* sink) {
  if (ens.lambda != 0.0) throw ValidationError("flow must start at lambda = 0");
  if (cfg.steps < 1) throw ValidationError("integrator.steps must be >= 1");
  if (cfg.record_every < 1) throw ValidationError("integrator.record_every must be >= 1");
  if (cfg.scheme == Scheme::rk4_deterministic && !schedule.is_zero()) {
    throw ValidationError("rk4_deterministic scheme requires zero diffusion");
  }
  if (ens.dim() != hom.dim() || schedule.dim() != hom.dim()) {
    throw ValidationError("ensemble, homotopy and diffusion dimensions disagree");
  }

  const double h = 1.0 / cfg.steps;
  const NoiseKey noise{cfg.seed, StreamDomain::flow_noise};
  auto emit = [&](int j) {
    if (sink == nullptr) return;
    if (j % cfg.record_every != 0 && j != cfg.steps) return;
    const auto batch = record(hom, ens, schedule.at(ens.lambda), cfg.execution);
    sink->consume(batch);
  };

  emit(0);
  for (int j = 0; j < cfg.steps; ++j) {
    const double lambda = j * h;
    const double next = (j + 1 == cfg.steps) ? 1.0 : (j + 1) * h;
    std::size_t bad = kernels::kNoFailure;
    if (cfg.scheme == Scheme::euler_maruyama) {
      const FlowCoefficients coef = flow_coefficients(hom, lambda, schedule.at(lambda));
      bad = kernels::euler_maruyama(ens.particles, ens.ids, coef, next - lambda, noise,
                                    static_cast<std::uint32_t>(j), cfg.execution);
    } else {
      const double half = 0.5 * (lambda + next);
      const Matrix zero = Matrix::Zero(hom.dim(), hom.dim());
      bad = kernels::rk4_affine(ens.particles, flow_coefficients(hom, lambda, zero),
                                flow_coefficients(hom, half, zero),
                                flow_coefficients(hom, next, zero), next - lambda, cfg.execution);
    }
    ens.lambda = next;
    if (bad != kernels::kNoFailure) throw DivergenceError(bad, ens.lambda);
    emit(j + 1);
  }
  return ens;
}

}  // namespace flowfilt
