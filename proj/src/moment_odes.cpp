#include "flowfilt/moment_odes.hpp"

#include "flowfilt/error.hpp"

namespace flowfilt {

MomentDerivative moment_rhs(const MomentState& state, const Homotopy& hom,
                            const DiffusionSchedule& schedule) {
  const FlowCoefficients c = flow_coefficients(hom, state.lambda, schedule.at(state.lambda));
  const Matrix& a = c.drift_jacobian;
  return {a * state.mean + c.drift_offset,
          symmetrized(a * state.covariance + state.covariance * a.transpose() + c.diffusion)};
}

std::vector<MomentState> propagate_moments(const Homotopy& hom, const DiffusionSchedule& schedule,
                                           int steps) {
  if (steps < 1) throw ValidationError("moment propagation needs steps >= 1");
  const PosteriorMoments prior = hom.posterior_moments(0.0);
  std::vector<MomentState> trajectory;
  trajectory.reserve(static_cast<std::size_t>(steps) + 1);
  trajectory.push_back({prior.mean, prior.covariance, 0.0});

  const double h = 1.0 / steps;
  auto advance = [](const MomentState& s, const MomentDerivative& d, double dt, double at) {
    return MomentState{s.mean + dt * d.mean, symmetrized(s.covariance + dt * d.covariance), at};
  };

  for (int j = 0; j < steps; ++j) {
    const MomentState& s = trajectory.back();
    const double l0 = j * h;
    const double l1 = (j + 1 == steps) ? 1.0 : (j + 1) * h;
    const double dt = l1 - l0;
    const double lm = l0 + 0.5 * dt;
    const MomentDerivative k1 = moment_rhs(s, hom, schedule);
    const MomentDerivative k2 = moment_rhs(advance(s, k1, 0.5 * dt, lm), hom, schedule);
    const MomentDerivative k3 = moment_rhs(advance(s, k2, 0.5 * dt, lm), hom, schedule);
    const MomentDerivative k4 = moment_rhs(advance(s, k3, dt, l1), hom, schedule);
    MomentState next;
    next.lambda = l1;
    next.mean = s.mean + dt / 6.0 * (k1.mean + 2.0 * k2.mean + 2.0 * k3.mean + k4.mean);
    next.covariance = symmetrized(
        s.covariance +
        dt / 6.0 * (k1.covariance + 2.0 * k2.covariance + 2.0 * k3.covariance + k4.covariance));
    trajectory.push_back(std::move(next));
  }
  return trajectory;
}

}  // namespace flowfilt
