#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "canon/gp.hpp"

namespace canon {
namespace {

Eigen::MatrixXd rows(std::initializer_list<std::initializer_list<double>> r) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(r.size()), static_cast<Eigen::Index>(r.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& row : r) {
    Eigen::Index j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

TEST(RbfKernelTest, Values) {
  const std::vector<double> a = {0.1, 0.4}, b = {0.3, 0.4};
  EXPECT_DOUBLE_EQ(rbf_kernel(a, a, 0.2, 1.7), 1.7);
  // One lengthscale apart: exp(-1/2).
  EXPECT_NEAR(rbf_kernel(a, b, 0.2, 1.0), 0.606530659712633423604, 1e-15);
  EXPECT_DOUBLE_EQ(rbf_kernel(a, b, 0.2, 1.0), rbf_kernel(b, a, 0.2, 1.0));
  EXPECT_THROW(rbf_kernel(a, std::vector<double>{0.1}, 0.2, 1.0), DimensionMismatch);
  EXPECT_THROW(rbf_kernel(a, b, 0.0, 1.0), ArgumentError);
}

TEST(GpFitTest, SinglePointFactor) {
  const GPState s = gp_fit(rows({{0.5}}), Eigen::VectorXd::Constant(1, 3.0), 0.2, 2.0, 0.01);
  EXPECT_NEAR(s.chol(0, 0), std::sqrt(2.01), 1e-15);
  EXPECT_EQ(s.jitter, 0.0);
  EXPECT_EQ(s.y_mean, 3.0);
  EXPECT_EQ(s.y_scale, 1.0);
}

TEST(GpFitTest, CholeskyReconstructsKernel) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd X(5, 2);
  Eigen::VectorXd y(5);
  for (int i = 0; i < 5; ++i) {
    X(i, 0) = u(rng);
    X(i, 1) = u(rng);
    y(i) = u(rng);
  }
  const GPState s = gp_fit(X, y, 0.3, 1.0, 1e-6);
  Eigen::MatrixXd K(5, 5);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) {
      const std::vector<double> a = {X(i, 0), X(i, 1)}, b = {X(j, 0), X(j, 1)};
      K(i, j) = rbf_kernel(a, b, 0.3, 1.0) + (i == j ? 1e-6 + s.jitter : 0.0);
    }
  EXPECT_LE((s.chol * s.chol.transpose() - K).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(GpFitTest, DuplicatePointsUseJitter) {
  const GPState s = gp_fit(rows({{0.3}, {0.3}, {0.7}}), Eigen::Vector3d(1.0, 1.0, 2.0), 0.2, 1.0, 0.0);
  EXPECT_GT(s.jitter, 0.0);
  EXPECT_LE(s.jitter, 1e-4);
  const std::vector<double> q = {0.3};
  EXPECT_NEAR(gp_posterior(s, q).mu, 1.0, 1e-3);
}

TEST(GpFitTest, RejectsBadInputs) {
  EXPECT_THROW(gp_fit(Eigen::MatrixXd(0, 1), Eigen::VectorXd(0), 0.2, 1.0, 1e-6), ArgumentError);
  EXPECT_THROW(gp_fit(rows({{0.1}}), Eigen::VectorXd(2), 0.2, 1.0, 1e-6), DimensionMismatch);
  EXPECT_THROW(gp_fit(rows({{0.1}}), Eigen::VectorXd(1), -1.0, 1.0, 1e-6), ArgumentError);
}

TEST(GpPosteriorTest, InterpolatesTrainingPoints) {
  const Eigen::MatrixXd X = rows({{0.0, 0.0}, {0.5, 0.2}, {1.0, 0.9}, {0.2, 0.8}});
  const Eigen::Vector4d y(1.5, -0.3, 2.0, 0.7);
  const GPState s = gp_fit(X, y, 0.2, 1.0, 1e-10);
  for (int i = 0; i < 4; ++i) {
    const std::vector<double> q = {X(i, 0), X(i, 1)};
    const Posterior p = gp_posterior(s, q);
    EXPECT_NEAR(p.mu, y(i), 1e-6);
    EXPECT_LE(p.var, 1e-8);
  }
}

TEST(GpPosteriorTest, RevertsToPriorFarAway) {
  const Eigen::Vector3d y(1.0, 2.0, 6.0);
  const GPState s = gp_fit(rows({{0.0}, {0.05}, {0.1}}), y, 0.05, 1.0, 1e-6);
  const std::vector<double> far = {50.0};
  const Posterior p = gp_posterior(s, far);
  EXPECT_NEAR(p.mu, y.mean(), 1e-12);
  const double pop_var = (y.array() - y.mean()).square().mean();
  EXPECT_NEAR(p.var, pop_var, 1e-9);
}

TEST(GpPosteriorTest, SymmetricMidpointAveragesNeighbours) {
  const GPState s = gp_fit(rows({{0.2}, {0.8}}), Eigen::Vector2d(1.0, 3.0), 0.2, 1.0, 1e-6);
  const std::vector<double> mid = {0.5};
  EXPECT_NEAR(gp_posterior(s, mid).mu, 2.0, 1e-12);
  const std::vector<double> near = {0.21};
  EXPECT_GT(gp_posterior(s, mid).var, gp_posterior(s, near).var);
}

TEST(GpPosteriorTest, BatchMatchesSingle) {
  const GPState s = gp_fit(rows({{0.1, 0.1}, {0.9, 0.3}, {0.4, 0.6}}), Eigen::Vector3d(0.0, 1.0, -2.0), 0.25,
                           1.0, 1e-6);
  const Eigen::MatrixXd Q = rows({{0.0, 0.0}, {0.5, 0.5}, {0.8, 0.1}});
  Eigen::VectorXd mu, var;
  gp_posterior_batch(s, Q, mu, var);
  for (int i = 0; i < 3; ++i) {
    const std::vector<double> q = {Q(i, 0), Q(i, 1)};
    const Posterior p = gp_posterior(s, q);
    EXPECT_NEAR(mu(i), p.mu, 1e-14);
    EXPECT_NEAR(var(i), p.var, 1e-14);
  }
  const std::vector<double> wrong = {0.5};
  EXPECT_THROW(gp_posterior(s, wrong), DimensionMismatch);
}

TEST(ExpectedImprovementTest, KnownValues) {
  EXPECT_NEAR(expected_improvement(0.0, 1.0, 0.0, 0.0), 0.398942280401432677940, 1e-12);
  EXPECT_EQ(expected_improvement(0.0, 0.0, 1.0, 0.0), 1.0);
  EXPECT_EQ(expected_improvement(2.0, 0.0, 1.0, 0.0), 0.0);
  // Shifting mu and best together leaves EI unchanged; sigma scales it.
  EXPECT_NEAR(expected_improvement(3.0, 0.5, 2.7, 0.0), expected_improvement(0.3, 0.5, 0.0, 0.0), 1e-15);
  EXPECT_NEAR(expected_improvement(0.6, 2.0, 0.0, 0.0), 2.0 * expected_improvement(0.3, 1.0, 0.0, 0.0), 1e-15);
}

TEST(ExpectedImprovementTest, NonNegativeAndMonotoneInSigma) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  std::uniform_real_distribution<double> s(0.0, 5.0);
  for (int i = 0; i < 100000; ++i) {
    const double mu = u(rng), best = u(rng), sigma = s(rng);
    const double ei = expected_improvement(mu, sigma, best, 0.0);
    ASSERT_GE(ei, 0.0);
    ASSERT_TRUE(std::isfinite(ei));
    ASSERT_GE(expected_improvement(mu, sigma + 0.1, best, 0.0), ei - 1e-12);
  }
}

TEST(ExpectedImprovementTest, LargerXiIsMoreConservative) {
  EXPECT_LT(expected_improvement(0.0, 1.0, 0.0, 0.5), expected_improvement(0.0, 1.0, 0.0, 0.0));
}

}  // namespace
}  // namespace canon
