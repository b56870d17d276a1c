#include "flowfilt/flow_dynamics.hpp"

#include "flowfilt/error.hpp"

#include <algorithm>
#include <sstream>

namespace flowfilt {

Matrix clamp_psd(const Matrix& q) {
  const Matrix sym = symmetrized(q);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
  const Vector& ev = eig.eigenvalues();
  if (ev.minCoeff() < -1e-12 * std::max(1.0, max_abs(sym)) || !ev.allFinite()) {
    std::ostringstream msg;
    msg << "diffusion matrix not positive semi-definite (smallest eigenvalue " << ev.minCoeff()
        << ")";
    throw DiffusionError(msg.str());
  }
  if (ev.minCoeff() >= 0.0) return sym;
  const Matrix& v = eig.eigenvectors();
  return symmetrized(v * ev.cwiseMax(0.0).asDiagonal() * v.transpose());
}

DiffusionSchedule::DiffusionSchedule(Kind kind, int n, std::vector<std::pair<double, Matrix>> table)
    : kind_(kind), n_(n), table_(std::move(table)) {}

DiffusionSchedule DiffusionSchedule::zero(int n) {
  if (n < 1) throw ValidationError("diffusion dimension must be >= 1");
  return DiffusionSchedule(Kind::zero, n, {{0.0, Matrix::Zero(n, n)}});
}

DiffusionSchedule DiffusionSchedule::constant(const Matrix& q) {
  const Matrix clamped = clamp_psd(q);
  return DiffusionSchedule(Kind::constant, static_cast<int>(q.rows()), {{0.0, clamped}});
}

DiffusionSchedule DiffusionSchedule::scaled_identity(int n, double scale) {
  if (!(scale >= 0.0)) throw DiffusionError("diffusion scale must be non-negative");
  if (scale == 0.0) return zero(n);
  return constant(scale * Matrix::Identity(n, n));
}

DiffusionSchedule DiffusionSchedule::knots(std::vector<std::pair<double, Matrix>> table) {
  if (table.empty()) throw DiffusionError("diffusion knot table is empty");
  const auto n = table.front().second.rows();
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (table[i].second.rows() != n || table[i].second.cols() != n) {
      throw DiffusionError("diffusion knot " + std::to_string(i) + " has inconsistent shape");
    }
    if (i > 0 && !(table[i].first > table[i - 1].first)) {
      throw DiffusionError("diffusion knot lambdas must be strictly increasing");
    }
    table[i].second = clamp_psd(table[i].second);
  }
  if (table.front().first > 0.0 || table.back().first < 1.0) {
    throw DiffusionError("diffusion knots must cover lambda in [0, 1]");
  }
  return DiffusionSchedule(Kind::lambda_dependent, static_cast<int>(n), std::move(table));
}

bool DiffusionSchedule::is_zero() const {
  return std::all_of(table_.begin(), table_.end(),
                     [](const auto& knot) { return max_abs(knot.second) == 0.0; });
}

Matrix DiffusionSchedule::at(double lambda) const {
  if (kind_ != Kind::lambda_dependent) return table_.front().second;
  auto upper = std::upper_bound(table_.begin(), table_.end(), lambda,
                                [](double l, const auto& knot) { return l < knot.first; });
  if (upper == table_.begin()) return table_.front().second;
  if (upper == table_.end()) return table_.back().second;
  const auto& [l0, q0] = *(upper - 1);
  const auto& [l1, q1] = *upper;
  const double w = (lambda - l0) / (l1 - l0);
  // convex combination of PSD knots; re-verified anyway
  return clamp_psd((1.0 - w) * q0 + w * q1);
}

Matrix gain_K(const Homotopy& hom, double lambda, const Matrix& q) {
  const Matrix s = hom.hessian_log_p(lambda);
  return symmetrized(0.5 * s * q * s + 0.5 * hom.likelihood().curvature());
}

Vector drift_f(const Homotopy& hom, const Vector& x, double lambda, const Matrix& q) {
  const PrecisionFactor pf = hom.precision(lambda);
  const Matrix k = gain_K(hom, lambda, q);
  // S⁻¹ = −(−S)⁻¹
  const Vector s_inv_grad_p = -pf.solve(hom.grad_log_p(x, lambda));
  return -pf.solve(-hom.grad_log_h(x) + k * s_inv_grad_p);
}

FlowCoefficients flow_coefficients(const Homotopy& hom, double lambda, const Matrix& q) {
  const Matrix q_psd = clamp_psd(q);
  const PrecisionFactor pf = hom.precision(lambda);
  const Matrix k = gain_K(hom, lambda, q_psd);
  FlowCoefficients out;
  out.lambda = lambda;
  out.drift_jacobian = -pf.inverse() * (-hom.likelihood().curvature() + k);
  out.drift_offset = drift_f(hom, Vector::Zero(hom.dim()), lambda, q_psd);
  out.noise_factor = psd_factor(q_psd);
  out.diffusion = q_psd;
  return out;
}

Matrix psd_factor(const Matrix& q) {
  const Matrix sym = symmetrized(q);
  const double scale = max_abs(sym);
  if (scale == 0.0) return Matrix(sym.rows(), 0);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
  const Vector& ev = eig.eigenvalues();
  if (ev.minCoeff() < -1e-8 * scale) {
    std::ostringstream msg;
    msg << "diffusion matrix not positive semi-definite (smallest eigenvalue " << ev.minCoeff()
        << ")";
    throw DiffusionError(msg.str());
  }
  const double cutoff = 1e-13 * ev.maxCoeff();
  std::vector<int> keep;
  for (int i = 0; i < ev.size(); ++i) {
    if (ev[i] > cutoff) keep.push_back(i);
  }
  Matrix out(sym.rows(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t j = 0; j < keep.size(); ++j) {
    out.col(static_cast<Eigen::Index>(j)) = std::sqrt(ev[keep[j]]) * eig.eigenvectors().col(keep[j]);
  }
  return out;
}

}  // namespace flowfilt
