#pragma once

// Per-particle kernels. Each has a serial reference loop and an OpenMP loop
// over the same per-particle body; results are bitwise identical for any
// thread count.

#include "flowfilt/ensemble.hpp"
#include "flowfilt/flow_dynamics.hpp"
#include "flowfilt/lyapunov.hpp"
#include "flowfilt/rng.hpp"

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

namespace flowfilt::kernels {

inline constexpr std::size_t kNoFailure = std::numeric_limits<std::size_t>::max();

/// Column count per reduction block. Reductions sum within a block
/// serially and combine blocks pairwise, independent of thread count.
inline constexpr Eigen::Index kReductionBlock = 1024;

/// x ← x + (A x + b)h + q ξ √h with ξ drawn from (key, id, step).
/// Returns the column of the first non-finite particle, or kNoFailure.
std::size_t euler_maruyama(Matrix& particles, std::span<const std::uint64_t> ids,
                           const FlowCoefficients& coef, double h, const NoiseKey& key,
                           std::uint32_t step, Execution exec);

/// Classical RK4 for dx/dλ = A(λ)x + b(λ), coefficients at λ, λ+h/2, λ+h.
std::size_t rk4_affine(Matrix& particles, const FlowCoefficients& start,
                       const FlowCoefficients& mid, const FlowCoefficients& end, double h,
                       Execution exec);

/// x ← F x + w, w = factor ξ with ξ drawn from (key, id, step).
std::size_t linear_gaussian_map(Matrix& particles, std::span<const std::uint64_t> ids,
                                const Matrix& transition, const Matrix& noise_factor,
                                const NoiseKey& key, std::uint32_t step, Execution exec);

/// Column i ← mean + factor ξᵢ.
void gaussian_draws(Matrix& out, std::span<const std::uint64_t> ids, const Vector& mean,
                    const Matrix& factor, const NoiseKey& key, std::uint32_t step,
                    Execution exec);

std::vector<DiagnosticsRecord> evaluate_records(const DiagnosticsFrame& frame,
                                                const Ensemble& ens, Execution exec);

/// Σ columns, with fixed blocking.
Vector column_sum(const Matrix& particles, Execution exec);

/// Σ (xᵢ − center)(xᵢ − center)ᵀ, with fixed blocking.
Matrix centered_scatter(const Matrix& particles, const Vector& center, Execution exec);

/// Per-coordinate Σ (xᵢ − center)^power, with fixed blocking.
Vector centered_power_sum(const Matrix& particles, const Vector& center, int power,
                          Execution exec);

}  // namespace flowfilt::kernels
