#pragma once

#include "flowfilt/ensemble.hpp"
#include "flowfilt/flow_dynamics.hpp"
#include "flowfilt/quadratic_model.hpp"

#include <cstdint>
#include <functional>
#include <string_view>
#include <vector>

namespace flowfilt {

/// Regions of score space y = ∇log p by the sign of LV:
///   S1: yᵀQy > tr(Q M₂⁻¹)  (LV < 0)
///   S2: yᵀQy < tr(Q M₁⁻¹)  (LV > 0)
///   S3: otherwise, boundaries included (sign depends on λ)
enum class Partition { S1, S2, S3 };

std::string_view to_string(Partition p);

/// M(λ) = (−S(λ))⁻¹ and its endpoints M₁ = (−A_g)⁻¹, M₂ = (−A_g − A_h)⁻¹.
struct LyapunovWeights {
  Matrix m;
  Matrix m1;
  Matrix m2;
};

LyapunovWeights lyapunov_weights(const Homotopy& hom, double lambda);

/// x-independent part of L log p:
/// γ = c_h − βᵀS⁻¹b_h + ½βᵀS⁻¹A_hS⁻¹β + ½tr(QS), β = b_g + λb_h.
double gamma(const Homotopy& hom, double lambda, const Matrix& q);

/// L log p = ½yᵀQy + γ(λ), the Itô drift of log g + λ log h along the flow.
double log_p_drift(const Homotopy& hom, const Vector& x, double lambda, const Matrix& q);

/// V = yᵀM(λ)y; V1 = yᵀM₁y; V2 = yᵀM₂y with y = ∇log p(x, λ).
double lyapunov_v(const Homotopy& hom, const Vector& x, double lambda);
double lyapunov_v1(const Homotopy& hom, const Vector& x, double lambda);
double lyapunov_v2(const Homotopy& hom, const Vector& x, double lambda);

/// LV = −yᵀQy + tr(Q(−S(λ))), valid for affine scores.
double lyapunov_drift(const Homotopy& hom, const Vector& x, double lambda, const Matrix& q);

Partition classify_partition(const Homotopy& hom, const Vector& y, const Matrix& q);

using DriftFunction = std::function<Vector(const Vector& x, double lambda)>;

/// LHS − RHS of the necessary condition linking the drift f, the diffusion
/// Q and the homotopy density:
///   ∇ₓ∂log p/∂λ = −∇ₓdiv f − S f − (∇ₓfᵀ) y + ∇ₓ[(1/2p) Σᵢⱼ ∂²(pQᵢⱼ)/∂xᵢ∂xⱼ].
/// The drift is treated as a black box: its Jacobian and ∇div are taken by
/// central differences with step 1e-4·(1+|xⱼ|).
Vector density_condition_residual(const Homotopy& hom, const DriftFunction& drift,
                                  const Vector& x, double lambda, const Matrix& q);

/// Same, for the drift of the parameterized flow family.
Vector density_condition_residual(const Homotopy& hom, const Vector& x, double lambda,
                                  const Matrix& q);

struct DiagnosticsRecord {
  double lambda = 0.0;
  std::uint64_t particle_id = 0;
  Vector x;
  double log_p = 0.0;
  Vector y;
  double v = 0.0;
  double v1 = 0.0;
  double v2 = 0.0;
  double lv = 0.0;
  double gamma = 0.0;
  Partition partition = Partition::S3;
};

/// Everything in a DiagnosticsRecord that depends on λ only.
struct DiagnosticsFrame {
  double lambda = 0.0;
  Matrix hessian;     // S(λ)
  Vector linear;      // b_g + λb_h
  double log_p_offset = 0.0;  // c_g + λc_h − log Γ(λ)
  LyapunovWeights weights;
  Matrix diffusion;   // Q(λ)
  double gamma = 0.0;
  double trace_q_precision = 0.0;  // tr(Q(−S(λ)))
  double s2_threshold = 0.0;       // tr(Q M₁⁻¹)
  double s1_threshold = 0.0;       // tr(Q M₂⁻¹)
};

DiagnosticsFrame make_frame(const Homotopy& hom, double lambda, const Matrix& q);

DiagnosticsRecord evaluate_record(const DiagnosticsFrame& frame, const Vector& x,
                                  std::uint64_t particle_id);

/// One record per particle, in ensemble order.
std::vector<DiagnosticsRecord> record(const Homotopy& hom, const Ensemble& ens, const Matrix& q,
                                      Execution exec = Execution::parallel);

}  // namespace flowfilt
