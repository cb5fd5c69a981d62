#include <cmath>

#include <gtest/gtest.h>

#include "spncf/errors.hpp"
#include "spncf/inference.hpp"
#include "spncf/numeric.hpp"
#include "test_support.hpp"

namespace spncf {
namespace {

using testing::normal_log_pdf;
using testing::two_gaussian_model;

Eigen::VectorXd scalar(double v) { return Eigen::VectorXd::Constant(1, v); }

TEST(ClassLogDensity, SingleRootMatchesLogValue) {
  Rng rng(1);
  testing::RandomCircuitBuilder builder(rng, testing::RandomLeaves::kGaussian);
  Circuit c = builder.build(3, 1);
  Eigen::Vector3d x(0.1, 0.7, 0.4);
  EXPECT_DOUBLE_EQ(class_log_density(c, 0, x), log_value(c, c.class_roots[0], x));
  // With one class the mixture equals the class-conditional.
  EXPECT_NEAR(log_density(c, x), class_log_density(c, 0, x), 1e-12);
}

TEST(ClassLogDensity, StandardNormalAtZero) {
  Circuit c;
  c.num_variables = 1;
  c.set_root(c.add_gaussian(0, 0.0, 1.0));
  EXPECT_NEAR(class_log_density(c, 0, scalar(0.0)), -0.918939, 1e-6);
}

TEST(ClassLogDensity, IdenticalRootsAgree) {
  Circuit c;
  c.num_variables = 2;
  NodeId p = c.add_product({c.add_gaussian(0, 0.3, 0.2), c.add_gaussian(1, 0.6, 0.5)});
  c.set_class_roots({p, p});
  Rng rng(2);
  for (int i = 0; i < 10; ++i) {
    Eigen::Vector2d x(rng.uniform(), rng.uniform());
    Eigen::VectorXd v = class_log_densities(c, x);
    EXPECT_EQ(v[0], v[1]);
    // S(x) = v when both components equal v.
    EXPECT_NEAR(log_density(c, x), v[0], 1e-12);
  }
}

TEST(ClassLogDensity, RejectsClassOutOfRange) {
  Circuit c = two_gaussian_model();
  EXPECT_THROW(class_log_density(c, 2, scalar(0.0)), InputError);
  EXPECT_THROW(class_log_density(c, -1, scalar(0.0)), InputError);
}

TEST(LogDensity, AllMissingIsZero) {
  Circuit c = two_gaussian_model();
  EXPECT_NEAR(log_density(c, scalar(kMissing)), 0.0, 1e-12);
}

TEST(LogDensity, TwoGaussianMixtureAtZero) {
  Circuit c = two_gaussian_model();
  const double expected =
      std::log(0.5 * std::exp(normal_log_pdf(0.0, -1.0, 0.25)) + 0.5 * std::exp(normal_log_pdf(0.0, 1.0, 0.25)));
  EXPECT_NEAR(log_density(c, scalar(0.0)), expected, 1e-12);
}

TEST(LogDensity, MarginalizationMatchesQuadrature) {
  Rng rng(31);
  testing::RandomCircuitBuilder builder(rng, testing::RandomLeaves::kGaussian);
  for (int trial = 0; trial < 5; ++trial) {
    Circuit c = builder.build(2, 2);
    const double x0 = rng.uniform();
    // Composite Simpson over a range that covers every leaf by > 10 sigma.
    const double lo = -8.0, hi = 9.0;
    const int n = 20000;
    const double h = (hi - lo) / n;
    double integral = 0.0;
    for (int i = 0; i <= n; ++i) {
      const double w = (i == 0 || i == n) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
      integral += w * std::exp(log_density(c, Eigen::Vector2d(x0, lo + i * h)));
    }
    integral *= h / 3.0;
    const double marginal = std::exp(log_density(c, Eigen::Vector2d(x0, kMissing)));
    EXPECT_NEAR(marginal, integral, 1e-6);
  }
}

TEST(Posterior, SymmetricModelIsUniform) {
  Circuit c;
  c.num_variables = 1;
  NodeId leaf = c.add_gaussian(0, 0.2, 0.4);
  c.set_class_roots({leaf, leaf});
  Eigen::VectorXd p = posterior(c, scalar(0.9)).probs();
  EXPECT_NEAR(p[0], 0.5, 1e-12);
  EXPECT_NEAR(p[1], 0.5, 1e-12);
}

TEST(Posterior, DegeneratePriorWins) {
  Circuit c = two_gaussian_model();
  c.log_prior = Eigen::Vector2d(0.0, kNegInf);
  ASSERT_TRUE(validate(c).ok) << validate(c).summary();
  for (double x : {-2.0, 0.0, 1.0, 3.0}) {
    Eigen::VectorXd p = posterior(c, scalar(x)).probs();
    EXPECT_EQ(p[0], 1.0);
    EXPECT_EQ(p[1], 0.0);
  }
}

TEST(Posterior, TwoGaussianAnalyticValue) {
  Circuit c = two_gaussian_model();
  const double expected = 1.0 / (1.0 + std::exp(-8.0));
  EXPECT_NEAR(posterior(c, scalar(1.0)).probs()[1], expected, 1e-12);
  EXPECT_NEAR(expected, 0.999665, 1e-6);
}

TEST(Posterior, InvariantToShiftingAllClassDensities) {
  // Multiplying every class-conditional by the same factor (here: an extra
  // shared leaf on a second variable) must not change the posterior.
  Circuit base = two_gaussian_model();
  Circuit shifted = testing::two_gaussian_model_2d();
  for (double x : {-1.5, -0.2, 0.0, 0.4, 2.0}) {
    Eigen::VectorXd a = posterior(base, scalar(x)).log_probs;
    Eigen::VectorXd b = posterior(shifted, Eigen::Vector2d(x, 3.0)).log_probs;
    EXPECT_NEAR(a[0], b[0], 1e-12);
    EXPECT_NEAR(a[1], b[1], 1e-12);
  }
}

TEST(Posterior, UniformPriorLogRatioEqualsClassRatio) {
  Rng rng(4);
  testing::RandomCircuitBuilder builder(rng, testing::RandomLeaves::kGaussian);
  for (int trial = 0; trial < 20; ++trial) {
    Circuit c = builder.build(3, 3);
    c.log_prior = Eigen::VectorXd::Constant(3, -std::log(3.0));
    Eigen::Vector3d x(rng.uniform(), rng.uniform(), rng.uniform());
    Eigen::VectorXd lp = posterior(c, x).log_probs;
    Eigen::VectorXd lc = class_log_densities(c, x);
    EXPECT_NEAR(lp[2] - lp[0], lc[2] - lc[0], 1e-12);
  }
}

TEST(Predict, ArgmaxWithLowestIndexTies) {
  EXPECT_EQ(argmax_lowest(Eigen::Vector2d(std::log(0.9), std::log(0.1))), 0);
  EXPECT_EQ(argmax_lowest(Eigen::Vector3d(0.2, 0.5, 0.5)), 1);
  EXPECT_EQ(argmax_lowest(Eigen::Vector2d(0.5, 0.5)), 0);

  Circuit tie;
  tie.num_variables = 1;
  NodeId leaf = tie.add_gaussian(0, 0.0, 1.0);
  tie.set_class_roots({leaf, leaf});
  EXPECT_EQ(predict(tie, scalar(0.3)), 0);
}

TEST(Predict, TwoGaussianDecision) {
  Circuit c = two_gaussian_model();
  EXPECT_EQ(predict(c, scalar(-1.0)), 0);
  EXPECT_EQ(predict(c, scalar(1.0)), 1);
}

TEST(RowBatched, MatchesSingleRowEvaluation) {
  Rng rng(6);
  testing::RandomCircuitBuilder builder(rng, testing::RandomLeaves::kGaussian);
  Circuit c = builder.build(4, 3);
  Eigen::MatrixXd rows = Eigen::MatrixXd::Random(25, 4);
  rows(3, 1) = kMissing;
  Eigen::MatrixXd cl = class_log_densities_rows(c, rows);
  Eigen::VectorXd ld = log_density_rows(c, rows);
  Eigen::MatrixXd lp = posterior_rows(c, rows);
  Eigen::VectorXi pred = predict_rows(c, rows);
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    Eigen::VectorXd x = rows.row(i).transpose();
    EXPECT_NEAR((cl.row(i).transpose() - class_log_densities(c, x)).norm(), 0.0, 1e-12);
    EXPECT_NEAR(ld[i], log_density(c, x), 1e-12);
    EXPECT_NEAR((lp.row(i).transpose() - posterior(c, x).log_probs).norm(), 0.0, 1e-12);
    EXPECT_EQ(pred[i], predict(c, x));
  }
  EXPECT_NEAR((class_log_density_rows(c, 2, rows) - cl.col(2)).norm(), 0.0, 1e-12);
}

TEST(RowBatched, AccuracyCountsMatches) {
  Circuit c = two_gaussian_model();
  Eigen::MatrixXd rows(4, 1);
  rows << -1.0, 1.0, 0.5, -0.5;
  Eigen::VectorXi labels(4);
  labels << 0, 1, 0, 0;
  EXPECT_DOUBLE_EQ(accuracy(c, rows, labels), 0.75);
}

}  // namespace
}  // namespace spncf
