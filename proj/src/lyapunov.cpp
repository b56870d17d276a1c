#include "flowfilt/lyapunov.hpp"

#include "flowfilt/kernels.hpp"

#include <cmath>

namespace flowfilt {

std::string_view to_string(Partition p) {
  switch (p) {
    case Partition::S1:
      return "S1";
    case Partition::S2:
      return "S2";
    case Partition::S3:
      return "S3";
  }
  return "S3";
}

LyapunovWeights lyapunov_weights(const Homotopy& hom, double lambda) {
  return {hom.precision(lambda).inverse(), hom.precision(0.0).inverse(),
          hom.precision(1.0).inverse()};
}

double gamma(const Homotopy& hom, double lambda, const Matrix& q) {
  const Matrix s = hom.hessian_log_p(lambda);
  const PrecisionFactor pf = hom.precision(lambda);
  const Vector beta = hom.linear_term(lambda);
  const Vector& b_h = hom.likelihood().linear();
  const Vector s_inv_beta = -pf.solve(beta);
  return hom.likelihood().constant() - s_inv_beta.dot(b_h) +
         0.5 * s_inv_beta.dot(hom.likelihood().curvature() * s_inv_beta) +
         0.5 * (q * s).trace();
}

double log_p_drift(const Homotopy& hom, const Vector& x, double lambda, const Matrix& q) {
  const Vector y = hom.grad_log_p(x, lambda);
  return 0.5 * y.dot(q * y) + gamma(hom, lambda, q);
}

double lyapunov_v(const Homotopy& hom, const Vector& x, double lambda) {
  const Vector y = hom.grad_log_p(x, lambda);
  return y.dot(hom.precision(lambda).solve(y));
}

double lyapunov_v1(const Homotopy& hom, const Vector& x, double lambda) {
  const Vector y = hom.grad_log_p(x, lambda);
  return y.dot(hom.precision(0.0).solve(y));
}

double lyapunov_v2(const Homotopy& hom, const Vector& x, double lambda) {
  const Vector y = hom.grad_log_p(x, lambda);
  return y.dot(hom.precision(1.0).solve(y));
}

double lyapunov_drift(const Homotopy& hom, const Vector& x, double lambda, const Matrix& q) {
  const Vector y = hom.grad_log_p(x, lambda);
  return -y.dot(q * y) + (q * (-hom.hessian_log_p(lambda))).trace();
}

Partition classify_partition(const Homotopy& hom, const Vector& y, const Matrix& q) {
  const double energy = y.dot(q * y);
  const double upper = (q * (-hom.hessian_log_p(1.0))).trace();  // tr(Q M₂⁻¹)
  const double lower = (q * (-hom.hessian_log_p(0.0))).trace();  // tr(Q M₁⁻¹)
  if (energy > upper) return Partition::S1;
  if (energy < lower) return Partition::S2;
  return Partition::S3;
}

Vector density_condition_residual(const Homotopy& hom, const DriftFunction& drift,
                                  const Vector& x, double lambda, const Matrix& q) {
  const int n = hom.dim();
  const Matrix s = hom.hessian_log_p(lambda);
  const Vector y = hom.grad_log_p(x, lambda);
  auto step_for = [](double xi) { return 1e-4 * (1.0 + std::abs(xi)); };

  auto jacobian_at = [&](const Vector& at) {
    Matrix jac(n, n);
    for (int j = 0; j < n; ++j) {
      const double h = step_for(at[j]);
      Vector plus = at, minus = at;
      plus[j] += h;
      minus[j] -= h;
      jac.col(j) = (drift(plus, lambda) - drift(minus, lambda)) / (plus[j] - minus[j]);
    }
    return jac;
  };

  const Matrix jac = jacobian_at(x);
  Vector grad_div(n);
  for (int k = 0; k < n; ++k) {
    const double h = step_for(x[k]);
    Vector plus = x, minus = x;
    plus[k] += h;
    minus[k] -= h;
    grad_div[k] = (jacobian_at(plus).trace() - jacobian_at(minus).trace()) / (plus[k] - minus[k]);
  }

  // (1/2p) Σ Qᵢⱼ ∂ᵢⱼp = ½[tr(Q ∇∇log p) + yᵀQy] for x-independent Q.
  auto q_term = [&](const Vector& at) {
    const Vector ya = hom.grad_log_p(at, lambda);
    return 0.5 * ((q * s).trace() + ya.dot(q * ya));
  };
  Vector grad_q_term(n);
  for (int k = 0; k < n; ++k) {
    const double h = step_for(x[k]);
    Vector plus = x, minus = x;
    plus[k] += h;
    minus[k] -= h;
    grad_q_term[k] = (q_term(plus) - q_term(minus)) / (plus[k] - minus[k]);
  }

  // ∂log p/∂λ = log h − d log Γ/dλ; the second term has zero x-gradient.
  const Vector lhs = hom.grad_log_h(x);
  const Vector f = drift(x, lambda);
  const Vector rhs = -grad_div - s * f - jac.transpose() * y + grad_q_term;
  return lhs - rhs;
}

Vector density_condition_residual(const Homotopy& hom, const Vector& x, double lambda,
                                  const Matrix& q) {
  const DriftFunction drift = [&](const Vector& at, double l) { return drift_f(hom, at, l, q); };
  return density_condition_residual(hom, drift, x, lambda, q);
}

DiagnosticsFrame make_frame(const Homotopy& hom, double lambda, const Matrix& q) {
  DiagnosticsFrame frame;
  frame.lambda = lambda;
  frame.hessian = hom.hessian_log_p(lambda);
  frame.linear = hom.linear_term(lambda);
  frame.log_p_offset = hom.prior().constant() + lambda * hom.likelihood().constant() -
                       hom.log_gamma(lambda);
  frame.weights = lyapunov_weights(hom, lambda);
  frame.diffusion = q;
  frame.gamma = gamma(hom, lambda, q);
  frame.trace_q_precision = (q * (-frame.hessian)).trace();
  frame.s2_threshold = (q * (-hom.hessian_log_p(0.0))).trace();
  frame.s1_threshold = (q * (-hom.hessian_log_p(1.0))).trace();
  return frame;
}

DiagnosticsRecord evaluate_record(const DiagnosticsFrame& frame, const Vector& x,
                                  std::uint64_t particle_id) {
  DiagnosticsRecord rec;
  rec.lambda = frame.lambda;
  rec.particle_id = particle_id;
  rec.x = x;
  const Vector sx = frame.hessian * x;
  rec.log_p = 0.5 * x.dot(sx) + frame.linear.dot(x) + frame.log_p_offset;
  rec.y = sx + frame.linear;
  rec.v = rec.y.dot(frame.weights.m * rec.y);
  rec.v1 = rec.y.dot(frame.weights.m1 * rec.y);
  rec.v2 = rec.y.dot(frame.weights.m2 * rec.y);
  const double energy = rec.y.dot(frame.diffusion * rec.y);
  rec.lv = -energy + frame.trace_q_precision;
  rec.gamma = frame.gamma;
  if (energy > frame.s1_threshold) {
    rec.partition = Partition::S1;
  } else if (energy < frame.s2_threshold) {
    rec.partition = Partition::S2;
  } else {
    rec.partition = Partition::S3;
  }
  return rec;
}

std::vector<DiagnosticsRecord> record(const Homotopy& hom, const Ensemble& ens, const Matrix& q,
                                      Execution exec) {
  const DiagnosticsFrame frame = make_frame(hom, ens.lambda, q);
  return kernels::evaluate_records(frame, ens, exec);
}

}  // namespace flowfilt
