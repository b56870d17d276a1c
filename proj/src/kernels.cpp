#include "flowfilt/kernels.hpp"

#include <algorithm>
#include <cmath>

#include <omp.h>

namespace flowfilt::kernels {

namespace {

struct Scratch {
  std::vector<double> a;
  std::vector<double> b;
  std::vector<double> c;
  std::vector<double> d;
  std::vector<double> e;
  std::vector<double> noise;
};

Scratch make_scratch(Eigen::Index n, Eigen::Index m) {
  const auto nn = static_cast<std::size_t>(n);
  return {std::vector<double>(nn), std::vector<double>(nn), std::vector<double>(nn),
          std::vector<double>(nn), std::vector<double>(nn),
          std::vector<double>(static_cast<std::size_t>(m))};
}

// Runs body(i, scratch) for every column; body returns false on failure.
template <typename Body>
std::size_t for_each_particle(Eigen::Index count, Eigen::Index n, Eigen::Index m, Execution exec,
                              Body&& body) {
  std::size_t first_bad = kNoFailure;
  if (exec == Execution::serial) {
    Scratch scratch = make_scratch(n, m);
    for (Eigen::Index i = 0; i < count; ++i) {
      if (!body(i, scratch)) first_bad = std::min(first_bad, static_cast<std::size_t>(i));
    }
    return first_bad;
  }
#pragma omp parallel
  {
    Scratch scratch = make_scratch(n, m);
    std::size_t local_bad = kNoFailure;
#pragma omp for schedule(static)
    for (Eigen::Index i = 0; i < count; ++i) {
      if (!body(i, scratch)) local_bad = std::min(local_bad, static_cast<std::size_t>(i));
    }
#pragma omp critical(flowfilt_first_bad)
    first_bad = std::min(first_bad, local_bad);
  }
  return first_bad;
}

// out = A x + b
inline void affine(const double* a, const double* b, const double* x, double* out,
                   Eigen::Index n) {
  for (Eigen::Index r = 0; r < n; ++r) {
    double acc = b[r];
    for (Eigen::Index c = 0; c < n; ++c) acc += a[r + c * n] * x[c];
    out[r] = acc;
  }
}

inline bool all_finite(const double* x, Eigen::Index n) {
  for (Eigen::Index r = 0; r < n; ++r) {
    if (!std::isfinite(x[r])) return false;
  }
  return true;
}

template <typename T, typename BlockFn>
T block_reduce(Eigen::Index count, Execution exec, const T& zero, BlockFn&& block_fn) {
  const Eigen::Index blocks = (count + kReductionBlock - 1) / kReductionBlock;
  if (blocks == 0) return zero;
  std::vector<T> partial(static_cast<std::size_t>(blocks), zero);
  if (exec == Execution::serial) {
    for (Eigen::Index k = 0; k < blocks; ++k) {
      block_fn(k * kReductionBlock, std::min(count, (k + 1) * kReductionBlock),
               partial[static_cast<std::size_t>(k)]);
    }
  } else {
#pragma omp parallel for schedule(static)
    for (Eigen::Index k = 0; k < blocks; ++k) {
      block_fn(k * kReductionBlock, std::min(count, (k + 1) * kReductionBlock),
               partial[static_cast<std::size_t>(k)]);
    }
  }
  while (partial.size() > 1) {
    std::vector<T> next;
    next.reserve((partial.size() + 1) / 2);
    for (std::size_t i = 0; i < partial.size(); i += 2) {
      next.push_back(i + 1 < partial.size() ? T(partial[i] + partial[i + 1]) : partial[i]);
    }
    partial = std::move(next);
  }
  return partial.front();
}

}  // namespace

std::size_t euler_maruyama(Matrix& particles, std::span<const std::uint64_t> ids,
                           const FlowCoefficients& coef, double h, const NoiseKey& key,
                           std::uint32_t step, Execution exec) {
  const Eigen::Index n = particles.rows();
  const Eigen::Index m = coef.noise_factor.cols();
  const double* a = coef.drift_jacobian.data();
  const double* b = coef.drift_offset.data();
  const double* q = coef.noise_factor.data();
  const double sqrt_h = std::sqrt(h);
  return for_each_particle(particles.cols(), n, m, exec, [&](Eigen::Index i, Scratch& s) {
    double* x = particles.col(i).data();
    affine(a, b, x, s.a.data(), n);
    if (m > 0) key.normals(ids[static_cast<std::size_t>(i)], step, s.noise);
    for (Eigen::Index r = 0; r < n; ++r) {
      double diffusion = 0.0;
      for (Eigen::Index k = 0; k < m; ++k) diffusion += q[r + k * n] * s.noise[k];
      x[r] = x[r] + s.a[r] * h + sqrt_h * diffusion;
    }
    return all_finite(x, n);
  });
}

std::size_t rk4_affine(Matrix& particles, const FlowCoefficients& start,
                       const FlowCoefficients& mid, const FlowCoefficients& end, double h,
                       Execution exec) {
  const Eigen::Index n = particles.rows();
  const double* a0 = start.drift_jacobian.data();
  const double* b0 = start.drift_offset.data();
  const double* am = mid.drift_jacobian.data();
  const double* bm = mid.drift_offset.data();
  const double* a1 = end.drift_jacobian.data();
  const double* b1 = end.drift_offset.data();
  return for_each_particle(particles.cols(), n, 0, exec, [&](Eigen::Index i, Scratch& s) {
    double* x = particles.col(i).data();
    double* k1 = s.a.data();
    double* k2 = s.b.data();
    double* k3 = s.c.data();
    double* k4 = s.d.data();
    double* tmp = s.e.data();
    affine(a0, b0, x, k1, n);
    for (Eigen::Index r = 0; r < n; ++r) tmp[r] = x[r] + 0.5 * h * k1[r];
    affine(am, bm, tmp, k2, n);
    for (Eigen::Index r = 0; r < n; ++r) tmp[r] = x[r] + 0.5 * h * k2[r];
    affine(am, bm, tmp, k3, n);
    for (Eigen::Index r = 0; r < n; ++r) tmp[r] = x[r] + h * k3[r];
    affine(a1, b1, tmp, k4, n);
    for (Eigen::Index r = 0; r < n; ++r) {
      x[r] = x[r] + h / 6.0 * (k1[r] + 2.0 * k2[r] + 2.0 * k3[r] + k4[r]);
    }
    return all_finite(x, n);
  });
}

std::size_t linear_gaussian_map(Matrix& particles, std::span<const std::uint64_t> ids,
                                const Matrix& transition, const Matrix& noise_factor,
                                const NoiseKey& key, std::uint32_t step, Execution exec) {
  const Eigen::Index n = particles.rows();
  const Eigen::Index m = noise_factor.cols();
  const double* f = transition.data();
  const double* q = noise_factor.data();
  const std::vector<double> zero(static_cast<std::size_t>(n), 0.0);
  return for_each_particle(particles.cols(), n, m, exec, [&](Eigen::Index i, Scratch& s) {
    double* x = particles.col(i).data();
    affine(f, zero.data(), x, s.a.data(), n);
    if (m > 0) key.normals(ids[static_cast<std::size_t>(i)], step, s.noise);
    for (Eigen::Index r = 0; r < n; ++r) {
      double w = 0.0;
      for (Eigen::Index k = 0; k < m; ++k) w += q[r + k * n] * s.noise[k];
      x[r] = s.a[r] + w;
    }
    return all_finite(x, n);
  });
}

void gaussian_draws(Matrix& out, std::span<const std::uint64_t> ids, const Vector& mean,
                    const Matrix& factor, const NoiseKey& key, std::uint32_t step,
                    Execution exec) {
  const Eigen::Index n = out.rows();
  const Eigen::Index m = factor.cols();
  const double* l = factor.data();
  for_each_particle(out.cols(), n, m, exec, [&](Eigen::Index i, Scratch& s) {
    double* x = out.col(i).data();
    key.normals(ids[static_cast<std::size_t>(i)], step, s.noise);
    for (Eigen::Index r = 0; r < n; ++r) {
      double acc = mean[r];
      for (Eigen::Index k = 0; k < m; ++k) acc += l[r + k * n] * s.noise[k];
      x[r] = acc;
    }
    return true;
  });
}

std::vector<DiagnosticsRecord> evaluate_records(const DiagnosticsFrame& frame,
                                                const Ensemble& ens, Execution exec) {
  std::vector<DiagnosticsRecord> out(ens.size());
  for_each_particle(ens.particles.cols(), 0, 0, exec, [&](Eigen::Index i, Scratch&) {
    const auto idx = static_cast<std::size_t>(i);
    out[idx] = evaluate_record(frame, ens.particles.col(i), ens.ids[idx]);
    return true;
  });
  return out;
}

Vector column_sum(const Matrix& particles, Execution exec) {
  const Eigen::Index n = particles.rows();
  return block_reduce(particles.cols(), exec, Vector(Vector::Zero(n)),
                      [&](Eigen::Index begin, Eigen::Index end, Vector& acc) {
                        for (Eigen::Index i = begin; i < end; ++i) acc += particles.col(i);
                      });
}

Matrix centered_scatter(const Matrix& particles, const Vector& center, Execution exec) {
  const Eigen::Index n = particles.rows();
  return block_reduce(particles.cols(), exec, Matrix(Matrix::Zero(n, n)),
                      [&](Eigen::Index begin, Eigen::Index end, Matrix& acc) {
                        for (Eigen::Index i = begin; i < end; ++i) {
                          for (Eigen::Index c = 0; c < n; ++c) {
                            const double dc = particles(c, i) - center[c];
                            for (Eigen::Index r = 0; r < n; ++r) {
                              acc(r, c) += (particles(r, i) - center[r]) * dc;
                            }
                          }
                        }
                      });
}

Vector centered_power_sum(const Matrix& particles, const Vector& center, int power,
                          Execution exec) {
  const Eigen::Index n = particles.rows();
  return block_reduce(particles.cols(), exec, Vector(Vector::Zero(n)),
                      [&](Eigen::Index begin, Eigen::Index end, Vector& acc) {
                        for (Eigen::Index i = begin; i < end; ++i) {
                          for (Eigen::Index r = 0; r < n; ++r) {
                            const double d = particles(r, i) - center[r];
                            double p = 1.0;
                            for (int k = 0; k < power; ++k) p *= d;
                            acc[r] += p;
                          }
                        }
                      });
}

}  // namespace flowfilt::kernels
