#pragma once

#include "flowfilt/flow_dynamics.hpp"
#include "flowfilt/quadratic_model.hpp"

#include <vector>

namespace flowfilt {

/// Mean and covariance of the flow's law at one λ.
struct MomentState {
  Vector mean;
  Matrix covariance;
  double lambda = 0.0;
};

struct MomentDerivative {
  Vector mean;        // A(λ) x̄ + b(λ)
  Matrix covariance;  // A P + P Aᵀ + Q(λ)
};

MomentDerivative moment_rhs(const MomentState& state, const Homotopy& hom,
                            const DiffusionSchedule& schedule);

/// Fixed-step RK4 over a uniform λ-grid, starting from the prior moments.
/// Returns steps + 1 states; covariance is symmetrized at every stage.
std::vector<MomentState> propagate_moments(const Homotopy& hom, const DiffusionSchedule& schedule,
                                           int steps = 2000);

}  // namespace flowfilt
