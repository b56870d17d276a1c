#include "flowfilt/lyapunov.hpp"
#include "flowfilt/rng.hpp"
#include "flowfilt/sde_integrator.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

using namespace flowfilt;
using namespace flowfilt::testing;

namespace {

const double kLn2Pi = std::log(2.0 * std::numbers::pi);

// E_p[log g + λ log h] under p(·,λ) = N(m, P), in closed form.
double expected_unnormalized_log(const Homotopy& hom, double l) {
  const auto pm = hom.posterior_moments(l);
  const Matrix s = hom.hessian_log_p(l);
  return 0.5 * ((s * pm.covariance).trace() + pm.mean.dot(s * pm.mean)) +
         hom.linear_term(l).dot(pm.mean) + hom.prior().constant() + l * hom.likelihood().constant();
}

Vector y_of(const Homotopy& hom, const Vector& x, double l) { return hom.grad_log_p(x, l); }

}  // namespace

TEST(Gamma, CanonicalAtZero) {
  EXPECT_NEAR(gamma(canonical_1d(), 0.0, mat1(0.0)), -0.5 - 0.5 * kLn2Pi, 1e-15);
}

TEST(Gamma, VanishesWithoutLinearTerms) {
  std::mt19937_64 gen(1);
  const Matrix p = random_spd(gen, 3);
  const Homotopy hom(from_gaussian_prior(Vector::Zero(3), p),
                     QuadraticLogDensity(-random_psd(gen, 3, 2), Vector::Zero(3), 0.0));
  for (double l : {0.0, 0.5, 1.0}) EXPECT_NEAR(gamma(hom, l, Matrix::Zero(3, 3)), 0.0, 1e-14);
}

TEST(Gamma, IsDerivativeOfExpectedUnnormalizedLog) {
  std::mt19937_64 gen(2);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 1 + trial % 3;
    const auto hom = random_homotopy(gen, n, 1 + trial % 2);
    const Matrix q = random_psd(gen, n, n);
    for (double l : {0.1, 0.5, 0.9}) {
      const double h = 1e-5;
      const double slope =
          (expected_unnormalized_log(hom, l + h) - expected_unnormalized_log(hom, l - h)) / (2 * h);
      // E[L log p] = ½tr(Q E[yyᵀ]) + γ and E[yyᵀ] = −S at the homotopy law
      const double el = 0.5 * (q * (-hom.hessian_log_p(l))).trace() + gamma(hom, l, q);
      EXPECT_NEAR(slope, el, 1e-6 * std::max(1.0, std::abs(el)));
      // the normalized log p differs by exactly the log Γ slope
      const double dlog_gamma = (hom.log_gamma(l + h) - hom.log_gamma(l - h)) / (2 * h);
      EXPECT_NEAR(slope - dlog_gamma,
                  (expected_unnormalized_log(hom, l + h) - hom.log_gamma(l + h) -
                   expected_unnormalized_log(hom, l - h) + hom.log_gamma(l - h)) /
                      (2 * h),
                  1e-8);
    }
  }
}

TEST(LogPDrift, ModeAndZeroDiffusion) {
  std::mt19937_64 gen(3);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 1 + trial % 4;
    const auto hom = random_homotopy(gen, n, 1 + trial % 2);
    const Matrix q = random_psd(gen, n, n);
    const double l = 0.1 * trial;
    const Vector mode = hom.posterior_moments(l).mean;
    EXPECT_NEAR(log_p_drift(hom, mode, l, q), gamma(hom, l, q), 1e-10);
    const Matrix zero = Matrix::Zero(n, n);
    for (int k = 0; k < 3; ++k) {
      EXPECT_NEAR(log_p_drift(hom, random_vector(gen, n, 3.0), l, zero), gamma(hom, l, zero), 1e-12);
    }
  }
}

TEST(LyapunovV, HandValues) {
  const auto hom = canonical_1d();
  EXPECT_NEAR(lyapunov_v(hom, vec1(2.0), 0.0), 4.0, 1e-15);
  EXPECT_NEAR(lyapunov_v1(hom, vec1(2.0), 0.0), 4.0, 1e-15);
  EXPECT_NEAR(lyapunov_v2(hom, vec1(2.0), 0.0), 2.0, 1e-15);
  for (double l : {0.0, 0.3, 1.0}) {
    const Vector mode = hom.posterior_moments(l).mean;
    EXPECT_NEAR(lyapunov_v(hom, mode, l), 0.0, 1e-30);
    EXPECT_NEAR(lyapunov_v1(hom, mode, l), 0.0, 1e-30);
    EXPECT_NEAR(lyapunov_v2(hom, mode, l), 0.0, 1e-30);
  }
}

TEST(LyapunovV, Ordering) {
  std::mt19937_64 gen(4);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + trial % 4;
    const auto hom = random_homotopy(gen, n, 1 + trial % 3);
    const Vector x = random_vector(gen, n, 3.0);
    const double l = unit(gen);
    const double v = lyapunov_v(hom, x, l);
    const double tol = 1e-10 * (1.0 + v);
    EXPECT_LE(lyapunov_v2(hom, x, l), v + tol);
    EXPECT_LE(v, lyapunov_v1(hom, x, l) + tol);
  }
}

TEST(LyapunovDrift, Values) {
  const auto hom = canonical_1d();
  for (double l : {0.0, 0.5, 1.0}) {
    for (double x : {-2.0, 0.0, 1.5}) EXPECT_EQ(lyapunov_drift(hom, vec1(x), l, mat1(0.0)), 0.0);
  }
  // LV = −q y² + q(1+λ); boundary of S1 at λ=1 is y = √2
  const double q = 0.7;
  const double l = 1.0;
  const double x = (std::sqrt(2.0) - hom.linear_term(l)[0]) / hom.hessian_log_p(l)(0, 0);
  ASSERT_NEAR(y_of(hom, vec1(x), l)[0], std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(lyapunov_drift(hom, vec1(x), l, mat1(q)), 0.0, 1e-14);
  EXPECT_NEAR(lyapunov_drift(hom, vec1(0.9), 0.3, mat1(q)),
              -q * std::pow(y_of(hom, vec1(0.9), 0.3)[0], 2) + q * 1.3, 1e-14);
  const auto h2 = partial_2d();
  const Vector mode = h2.posterior_moments(0.4).mean;
  EXPECT_NEAR(lyapunov_drift(h2, mode, 0.4, Matrix::Identity(2, 2)), (-h2.hessian_log_p(0.4)).trace(), 1e-12);
}

TEST(ClassifyPartition, HandThresholds) {
  const auto hom = canonical_1d();
  EXPECT_EQ(classify_partition(hom, vec1(2.0), mat1(1.0)), Partition::S1);
  EXPECT_EQ(classify_partition(hom, vec1(0.5), mat1(1.0)), Partition::S2);
  EXPECT_EQ(classify_partition(hom, vec1(1.2), mat1(1.0)), Partition::S3);
  // ties land in S3
  EXPECT_EQ(classify_partition(hom, vec1(1.0), mat1(1.0)), Partition::S3);
  EXPECT_EQ(classify_partition(hom, vec1(-1.2), mat1(1.0)), Partition::S3);
  for (double y : {-5.0, 0.0, 0.3, 10.0}) {
    EXPECT_EQ(classify_partition(hom, vec1(y), mat1(0.0)), Partition::S3);
  }
  const auto h2 = partial_2d();
  EXPECT_EQ(classify_partition(h2, vec({0.0, 5.0}), diag({1.0, 0.0})), Partition::S2);
}

TEST(DensityCondition, ResidualSmallForFamilyDrift) {
  const auto hom = canonical_1d();
  EXPECT_LT(density_condition_residual(hom, vec1(0.7), 0.5, mat1(0.0)).norm(), 1e-6);
  std::mt19937_64 gen(6);
  for (int k = 0; k < 10; ++k) {
    const double x = std::normal_distribution<double>(0.0, 2.0)(gen);
    const double l = std::uniform_real_distribution<double>(0.0, 1.0)(gen);
    EXPECT_LT(density_condition_residual(hom, vec1(x), l, mat1(0.8)).norm(), 1e-6);
  }
}

TEST(DensityCondition, DetectsCorruptedDrift) {
  const auto hom = canonical_1d();
  const Matrix q = mat1(0.8);
  const DriftFunction bad = [&](const Vector& x, double l) {
    return Vector(drift_f(hom, x, l, q).array() + 0.1);
  };
  EXPECT_GT(density_condition_residual(hom, bad, vec1(0.7), 0.5, q).norm(), 1e-3);
  const auto h2 = partial_2d();
  const Matrix q2 = diag({0.5, 0.2});
  const DriftFunction scaled = [&](const Vector& x, double l) { return Vector(1.01 * drift_f(h2, x, l, q2)); };
  EXPECT_GT(density_condition_residual(h2, scaled, vec({0.3, -0.2}), 0.5, q2).norm(), 1e-3);
}

TEST(Record, EndpointWeightsAndIds) {
  const auto hom = partial_2d();
  const Matrix q = diag({0.5, 0.1});
  Ensemble ens = sample_prior(hom, 3, 1);
  auto recs = record(hom, ens, q);
  ASSERT_EQ(recs.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(recs[i].particle_id, ens.ids[i]);
    EXPECT_EQ(recs[i].v, recs[i].v1);
    EXPECT_NEAR(recs[i].log_p, hom.log_p(recs[i].x, 0.0), 1e-12);
    EXPECT_NEAR(recs[i].lv, lyapunov_drift(hom, recs[i].x, 0.0, q), 1e-12);
    EXPECT_EQ(recs[i].partition, classify_partition(hom, recs[i].y, q));
  }
  ens.lambda = 1.0;
  recs = record(hom, ens, q);
  for (const auto& r : recs) EXPECT_EQ(r.v, r.v2);
}

// Properties

TEST(LyapunovProperty, GammaIsXIndependent) {
  std::mt19937_64 gen(7);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 1 + trial % 4;
    const auto hom = random_homotopy(gen, n, 1 + trial % 3);
    const Matrix q = random_psd(gen, n, 1 + trial % n);
    const double l = 0.05 * trial;
    const double g = gamma(hom, l, q);
    for (int k = 0; k < 10; ++k) {
      const Vector x = random_vector(gen, n, 2.0);
      const Vector y = y_of(hom, x, l);
      EXPECT_NEAR(log_p_drift(hom, x, l, q) - 0.5 * y.dot(q * y), g, 1e-9);
    }
  }
}

TEST(LyapunovProperty, PartitionSigns) {
  std::mt19937_64 gen(8);
  const auto hom = partial_2d();
  const Matrix q = diag({1.0, 0.3});
  for (int k = 0; k < 2000; ++k) {
    const double l = std::uniform_real_distribution<double>(0.0, 1.0)(gen);
    const Vector x = random_vector(gen, 2, 3.0);
    const Vector y = y_of(hom, x, l);
    const double lv = lyapunov_drift(hom, x, l, q);
    switch (classify_partition(hom, y, q)) {
      case Partition::S1:
        ASSERT_LT(lv, 0.0);
        break;
      case Partition::S2:
        ASSERT_GT(lv, 0.0);
        break;
      case Partition::S3:
        break;
    }
  }
}

TEST(LyapunovProperty, ExactFlowConservationAndSandwich) {
  const auto hom = partial_2d();
  Matrix x0(2, 3);
  x0 << 0.5, 2.0, -3.0, -1.0, 1.5, 0.2;
  IntegratorConfig cfg;
  cfg.steps = 2000;
  cfg.scheme = Scheme::rk4_deterministic;
  cfg.record_every = 10;
  MemorySink sink;
  flow_to_posterior(make_ensemble(x0), hom, DiffusionSchedule::zero(2), cfg, &sink);
  std::vector<double> v0(3);
  for (const auto& r : sink.records) {
    if (r.lambda == 0.0) v0[r.particle_id] = r.v1;
  }
  for (const auto& r : sink.records) {
    const double ref = v0[r.particle_id];
    const double tol = 1e-6 * (1.0 + ref);
    EXPECT_LT(std::abs(r.v - ref) / std::max(ref, 1e-12), 1e-6);
    EXPECT_GE(r.v1, ref - tol);
    EXPECT_LE(r.v2, ref + tol);
  }
}

TEST(LyapunovProperty, MonteCarloDriftOfV) {
  const auto hom = canonical_1d();
  const auto q = DiffusionSchedule::scaled_identity(1, 1.0);
  const std::size_t n = 20000;
  const double window = 0.02;
  const int substeps = 20;
  for (double start : {3.0, 0.0}) {
    // start deep in S1 (|y| = 3) or at the mode, in S2
    Ensemble ens = make_ensemble(Matrix::Constant(1, static_cast<Eigen::Index>(n), start));
    const Vector v_start = Vector::Constant(static_cast<Eigen::Index>(n), lyapunov_v(hom, vec1(start), 0.0));
    for (int k = 0; k < substeps; ++k) {
      ens = step(std::move(ens), hom, q, window / substeps, NoiseKey{55, StreamDomain::flow_noise},
                 static_cast<std::uint32_t>(k));
    }
    Vector dv(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      dv[static_cast<Eigen::Index>(i)] = lyapunov_v(hom, ens.particles.col(static_cast<Eigen::Index>(i)), ens.lambda) -
                                         v_start[static_cast<Eigen::Index>(i)];
    }
    const double mean = dv.mean();
    const double sd = std::sqrt((dv.array() - mean).square().sum() / (n - 1.0));
    const double se = sd / std::sqrt(static_cast<double>(n));
    if (start != 0.0) {
      EXPECT_LT(mean + 3.0 * se, 0.0) << "S1 start: mean dV " << mean;
    } else {
      EXPECT_GT(mean - 3.0 * se, 0.0) << "S2 start: mean dV " << mean;
    }
  }
}

TEST(LyapunovProperty, NoConvergenceToMode) {
  const auto hom = partial_2d();
  const Matrix q = Matrix::Identity(2, 2);
  IntegratorConfig cfg;
  cfg.steps = 1000;
  cfg.seed = 3;
  const auto out = flow_to_posterior(sample_prior(hom, 20000, 2), hom, DiffusionSchedule::constant(q), cfg);
  const double threshold = (q * (-hom.hessian_log_p(1.0))).trace();
  const double c0 = 0.9 * 2.0 / threshold;  // exact law gives E[V] = n
  double mean_v = 0.0;
  for (Eigen::Index i = 0; i < out.particles.cols(); ++i) mean_v += lyapunov_v(hom, out.particles.col(i), 1.0);
  mean_v /= static_cast<double>(out.particles.cols());
  EXPECT_GT(mean_v, threshold * c0);
}
