#include "flowfilt/error.hpp"
#include "flowfilt/quadratic_model.hpp"
#include "support.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <gtest/gtest.h>

#include <limits>

using namespace flowfilt;
using namespace flowfilt::testing;

namespace {

const double kLn2Pi = std::log(2.0 * std::numbers::pi);

// Trapezoid rule on a tensor grid; for Gaussian integrands on a wide box this
// converges far below 1e-6.
template <typename F>
double grid_integral_2d(F&& f, const Vector& center, const Vector& half_width, int points) {
  const double hx = 2.0 * half_width[0] / (points - 1);
  const double hy = 2.0 * half_width[1] / (points - 1);
  double total = 0.0;
  Vector x(2);
  for (int i = 0; i < points; ++i) {
    const double wi = (i == 0 || i == points - 1) ? 0.5 : 1.0;
    x[0] = center[0] - half_width[0] + i * hx;
    for (int j = 0; j < points; ++j) {
      const double wj = (j == 0 || j == points - 1) ? 0.5 : 1.0;
      x[1] = center[1] - half_width[1] + j * hy;
      total += wi * wj * f(x);
    }
  }
  return total * hx * hy;
}

double quad_1d(const std::function<double(double)>& f) {
  const double inf = std::numeric_limits<double>::infinity();
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, -inf, inf, 15, 1e-14);
}

}  // namespace

TEST(QuadraticLogDensity, SymmetrizesCurvature) {
  Matrix a(2, 2);
  a << -2.0, 0.3, 0.1, -1.0;
  const QuadraticLogDensity q(a, vec({0.0, 0.0}), 0.0);
  EXPECT_EQ((q.curvature() - q.curvature().transpose()).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_DOUBLE_EQ(q.curvature()(0, 1), 0.2);
}

TEST(QuadraticLogDensity, RejectsInconsistentShapes) {
  EXPECT_THROW(QuadraticLogDensity(Matrix::Identity(2, 2), vec1(0.0), 0.0), ValidationError);
  EXPECT_THROW(QuadraticLogDensity(Matrix::Zero(2, 3), vec({0.0, 0.0}), 0.0), ValidationError);
  EXPECT_THROW(QuadraticLogDensity(Matrix(0, 0), Vector(0), 0.0), ValidationError);
}

TEST(FromGaussianPrior, StandardNormal) {
  const auto g = from_gaussian_prior(vec1(0.0), mat1(1.0));
  EXPECT_DOUBLE_EQ(g.curvature()(0, 0), -1.0);
  EXPECT_DOUBLE_EQ(g.linear()[0], 0.0);
  EXPECT_NEAR(g.constant(), -0.5 * kLn2Pi, 1e-15);
}

TEST(FromGaussianPrior, IdentityCovariance) {
  const Vector mu = vec({0.3, -1.2, 2.0});
  const auto g = from_gaussian_prior(mu, Matrix::Identity(3, 3));
  EXPECT_TRUE(g.curvature().isApprox(-Matrix::Identity(3, 3)));
  EXPECT_TRUE(g.linear().isApprox(mu));
  EXPECT_NEAR(g.constant(), -0.5 * mu.squaredNorm() - 1.5 * kLn2Pi, 1e-14);
}

TEST(FromGaussianPrior, DiagonalIntegratesToOne) {
  const auto g = from_gaussian_prior(vec({1.0, 2.0}), diag({4.0, 9.0}));
  EXPECT_NEAR(g.curvature()(0, 0), -0.25, 1e-15);
  EXPECT_NEAR(g.curvature()(1, 1), -1.0 / 9.0, 1e-15);
  EXPECT_NEAR(g.linear()[0], 0.25, 1e-15);
  EXPECT_NEAR(g.linear()[1], 2.0 / 9.0, 1e-15);
  const double mass = grid_integral_2d([&](const Vector& x) { return std::exp(g(x)); },
                                       vec({1.0, 2.0}), vec({24.0, 36.0}), 801);
  EXPECT_NEAR(mass, 1.0, 1e-9);
}

TEST(FromGaussianPrior, RejectsNonSpdCovariance) {
  EXPECT_THROW(from_gaussian_prior(vec({0.0, 0.0}), diag({1.0, -1.0})), ValidationError);
  EXPECT_THROW(from_gaussian_prior(vec1(0.0), mat1(0.0)), ValidationError);
}

TEST(FromLinearGaussianMeasurement, Scalar) {
  const auto h = from_linear_gaussian_measurement(mat1(1.0), mat1(1.0), vec1(1.0));
  EXPECT_DOUBLE_EQ(h.curvature()(0, 0), -1.0);
  EXPECT_DOUBLE_EQ(h.linear()[0], 1.0);
  EXPECT_NEAR(h.constant(), -0.5 - 0.5 * kLn2Pi, 1e-15);
}

TEST(FromLinearGaussianMeasurement, RankOne) {
  Matrix hm(1, 2);
  hm << 1.0, 0.0;
  const auto h = from_linear_gaussian_measurement(hm, mat1(1.0), vec1(0.0));
  EXPECT_TRUE(h.curvature().isApprox(diag({-1.0, 0.0})));
  EXPECT_EQ(h.linear(), Vector::Zero(2));
}

TEST(FromLinearGaussianMeasurement, MatchesDirectDensity) {
  const Vector z = vec({2.0, -2.0});
  const Matrix r = diag({2.0, 2.0});
  const auto h = from_linear_gaussian_measurement(Matrix::Identity(2, 2), r, z);
  EXPECT_TRUE(h.curvature().isApprox(-0.5 * Matrix::Identity(2, 2)));
  EXPECT_TRUE(h.linear().isApprox(vec({1.0, -1.0})));
  EXPECT_NEAR(h(z), gaussian_log_pdf(z, z, r), 1e-13);
  const Vector x = vec({0.4, 1.1});
  EXPECT_NEAR(h(x), gaussian_log_pdf(z, x, r), 1e-13);
}

TEST(FromLinearGaussianMeasurement, RejectsBadR) {
  try {
    from_linear_gaussian_measurement(mat1(1.0), mat1(-1.0), vec1(0.0));
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("likelihood.R not positive definite"), std::string::npos);
  }
}

TEST(Homotopy, RejectsA3Violation) {
  const auto g = from_gaussian_prior(vec1(0.0), mat1(1.0));
  try {
    Homotopy(g, QuadraticLogDensity(mat1(0.5), vec1(0.0), 0.0));
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("(A3) violated"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("0.5"), std::string::npos);
  }
  EXPECT_THROW(Homotopy(QuadraticLogDensity(mat1(0.0), vec1(0.0), 0.0), g), ValidationError);
}

TEST(Homotopy, HessianEndpointsAndAffinity) {
  const auto hom = canonical_1d();
  EXPECT_DOUBLE_EQ(hom.hessian_log_p(0.0)(0, 0), -1.0);
  EXPECT_DOUBLE_EQ(hom.hessian_log_p(1.0)(0, 0), -2.0);
  const Homotopy h2(from_gaussian_prior(Vector::Zero(2), Matrix::Identity(2, 2)),
                    QuadraticLogDensity(diag({-1.0, 0.0}), Vector::Zero(2), 0.0));
  EXPECT_TRUE(h2.hessian_log_p(0.5).isApprox(diag({-1.5, -1.0})));
  EXPECT_THROW(hom.hessian_log_p(1.5), ValidationError);
  EXPECT_THROW(hom.hessian_log_p(-0.1), ValidationError);
}

TEST(Homotopy, GradLogP) {
  const auto hom = canonical_1d();
  EXPECT_DOUBLE_EQ(hom.grad_log_p(vec1(0.0), 0.0)[0], 0.0);
  EXPECT_DOUBLE_EQ(hom.grad_log_p(vec1(0.5), 1.0)[0], 0.0);
  EXPECT_DOUBLE_EQ(hom.grad_log_p(vec1(1.0), 0.5)[0], -1.0);
}

TEST(Homotopy, PosteriorMomentsCanonical) {
  const auto hom = canonical_1d();
  for (double l : {0.0, 0.2, 0.5, 0.8, 1.0}) {
    const auto pm = hom.posterior_moments(l);
    EXPECT_NEAR(pm.mean[0], l / (1.0 + l), 1e-15);
    EXPECT_NEAR(pm.covariance(0, 0), 1.0 / (1.0 + l), 1e-15);
  }
}

TEST(Homotopy, PosteriorMomentsPartial2d) {
  const Homotopy hom(from_gaussian_prior(Vector::Zero(2), Matrix::Identity(2, 2)),
                     QuadraticLogDensity(diag({-1.0, 0.0}), vec({1.0, 0.0}), 0.0));
  const auto pm = hom.posterior_moments(1.0);
  EXPECT_TRUE(pm.mean.isApprox(vec({0.5, 0.0})));
  EXPECT_NEAR((pm.covariance - diag({0.5, 1.0})).norm(), 0.0, 1e-15);
}

TEST(Homotopy, EndpointsMatchPriorAndKalman) {
  std::mt19937_64 gen(17);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 1 + trial % 4;
    const int d = 1 + trial % 3;
    Matrix h(d, n);
    std::normal_distribution<double> nd;
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < n; ++j) h(i, j) = nd(gen);
    const Vector m0 = random_vector(gen, n);
    const Matrix p0 = random_spd(gen, n);
    const Matrix r = random_spd(gen, d);
    const Vector z = random_vector(gen, d);
    const Homotopy hom(from_gaussian_prior(m0, p0), from_linear_gaussian_measurement(h, r, z));

    const auto start = hom.posterior_moments(0.0);
    EXPECT_LT((start.mean - m0).cwiseAbs().maxCoeff(), 1e-10 * (1.0 + m0.norm()));
    EXPECT_LT((start.covariance - p0).cwiseAbs().maxCoeff(), 1e-10 * p0.norm());

    const auto kf = kalman_update(m0, p0, MeasurementModel{h, r}, z);
    const auto end = hom.posterior_moments(1.0);
    EXPECT_LT((end.mean - kf.mean).cwiseAbs().maxCoeff(), 1e-10 * (1.0 + kf.mean.norm()));
    EXPECT_LT((end.covariance - kf.covariance).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Homotopy, LogGammaAgainstQuadrature) {
  const auto hom = canonical_1d();
  EXPECT_EQ(hom.log_gamma(0.0), 0.0);
  // closed form at λ=1: the marginal likelihood N(z=1; 0, 2)
  EXPECT_NEAR(hom.log_gamma(1.0), -0.5 * std::log(4.0 * std::numbers::pi) - 0.25, 1e-14);
  for (double l : {0.25, 0.5, 1.0}) {
    const double mass = quad_1d([&](double x) {
      const Vector v = vec1(x);
      return std::exp(hom.prior()(v) + l * hom.likelihood()(v));
    });
    EXPECT_NEAR(hom.log_gamma(l), std::log(mass), 1e-8) << "lambda " << l;
  }
}

TEST(Homotopy, LogGammaZeroForAnyPrior) {
  std::mt19937_64 gen(3);
  for (int n = 1; n <= 4; ++n) {
    EXPECT_NEAR(random_homotopy(gen, n, 2).log_gamma(0.0), 0.0, 1e-12);
  }
}

TEST(Homotopy, LogPEndpointsAndGaussianIdentity) {
  const auto hom = canonical_1d();
  for (double x : {-2.0, 0.0, 0.7, 3.0}) {
    EXPECT_EQ(hom.log_p(vec1(x), 0.0), hom.prior()(vec1(x)));
  }
  EXPECT_NEAR(hom.log_p(vec1(0.5), 1.0), -0.5 * std::log(std::numbers::pi), 1e-14);
  for (double l : {0.25, 0.75}) {
    const auto pm = hom.posterior_moments(l);
    for (double x : {-2.0, 0.0, 3.0}) {
      EXPECT_NEAR(hom.log_p(vec1(x), l), gaussian_log_pdf(vec1(x), pm.mean, pm.covariance), 1e-12);
    }
  }
}

// Properties

TEST(HomotopyProperty, GaussianIdentityRandom) {
  std::mt19937_64 gen(101);
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 1 + trial % 4;
    const auto hom = random_homotopy(gen, n, 1 + trial % 3);
    for (double l : {0.0, 0.3, 0.7, 1.0}) {
      const auto pm = hom.posterior_moments(l);
      const Vector x = pm.mean + random_vector(gen, n);
      EXPECT_NEAR(hom.log_p(x, l), gaussian_log_pdf(x, pm.mean, pm.covariance), 1e-10);
    }
  }
}

TEST(HomotopyProperty, GradientMatchesFiniteDifferences) {
  std::mt19937_64 gen(5);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 1 + trial % 3;
    const auto hom = random_homotopy(gen, n, 1 + trial % 2);
    for (double l : {0.0, 0.4, 1.0}) {
      const Vector x = random_vector(gen, n, 2.0);
      const Vector grad = hom.grad_log_p(x, l);
      Vector fd(n);
      for (int i = 0; i < n; ++i) {
        const double step = 1e-5 * (1.0 + std::abs(x[i]));
        Vector xp = x, xm = x;
        xp[i] += step;
        xm[i] -= step;
        fd[i] = (hom.log_p(xp, l) - hom.log_p(xm, l)) / (2.0 * step);
      }
      EXPECT_LT((fd - grad).norm(), 1e-6 * std::max(1.0, grad.norm()));
    }
  }
}

TEST(HomotopyProperty, NormalizationByQuadrature) {
  const auto h1 = canonical_1d();
  const auto h2 = partial_2d();
  for (double l : {0.0, 0.3, 0.7, 1.0}) {
    const double m1 = quad_1d([&](double x) { return std::exp(h1.log_p(vec1(x), l)); });
    EXPECT_GE(m1, 1.0 - 1e-6);
    EXPECT_LE(m1, 1.0 + 1e-6);

    const auto pm = h2.posterior_moments(l);
    const Vector half = 12.0 * pm.covariance.diagonal().cwiseSqrt();
    const double m2 = grid_integral_2d([&](const Vector& x) { return std::exp(h2.log_p(x, l)); },
                                       pm.mean, half, 601);
    EXPECT_GE(m2, 1.0 - 1e-6) << "lambda " << l;
    EXPECT_LE(m2, 1.0 + 1e-6) << "lambda " << l;
  }
}

TEST(HomotopyProperty, MonotoneContraction) {
  std::mt19937_64 gen(9);
  for (int trial = 0; trial < 20; ++trial) {
    const auto hom = random_homotopy(gen, 1 + trial % 4, 1 + trial % 3);
    Matrix prev = hom.posterior_moments(0.0).covariance;
    for (int j = 1; j <= 20; ++j) {
      const Matrix next = hom.posterior_moments(j / 20.0).covariance;
      EXPECT_GE(symmetric_eigenvalues(prev - next).minCoeff(), -1e-12);
      prev = next;
    }
  }
}

TEST(PrecisionFactor, RefusesIllConditioned) {
  EXPECT_THROW(PrecisionFactor(diag({1.0, 1e-11}), 0.3), SingularHomotopyError);
  EXPECT_THROW(PrecisionFactor(diag({1.0, -1.0}), 0.3), SingularHomotopyError);
  try {
    PrecisionFactor(diag({1.0, 0.0}), 0.3);
  } catch (const SingularHomotopyError& e) {
    EXPECT_DOUBLE_EQ(e.lambda(), 0.3);
  }
  EXPECT_NO_THROW(PrecisionFactor(diag({1.0, 1e-9}), 0.0));
}
