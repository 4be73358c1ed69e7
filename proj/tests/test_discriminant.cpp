#include <cmath>

#include <gtest/gtest.h>

#include "nsda/discriminant.hpp"
#include "nsda/presets.hpp"
#include "test_support.hpp"

using namespace nsda;

namespace {

TimeIndexedGaussianMoments<double> two_class(const Vector& mu0, const Matrix& S0, const Vector& mu1,
                                             const Matrix& S1) {
  TimeIndexedGaussianMoments<double> m;
  m.classes = {{{mu0, S0}}, {{mu1, S1}}};
  return m;
}

Vector v2(double a, double b) { return (Vector(2) << a, b).finished(); }

}  // namespace

TEST(Nsqda, ShiftedMeansGiveLinearBoundary) {
  const Matrix I = Matrix::Identity(2, 2);
  const auto rule = build_nsqda(two_class(v2(0, 0), I, v2(2, 0), I));
  EXPECT_LT(rule.E[0].norm(), 1e-15);
  EXPECT_LT(max_abs_diff(rule.F[0], v2(2, 0)), 1e-15);
  EXPECT_NEAR(rule.G[0], -2.0, 1e-15);
  EXPECT_EQ(classify(rule, v2(1.0, 3.0), 0), 1);
  EXPECT_EQ(classify(rule, v2(0.999, 3.0), 0), 0);
}

TEST(Nsqda, IdenticalMomentsGiveZeroCoefficients) {
  Rng rng(1);
  const Matrix S = testing_support::random_spd(3, rng);
  const Vector mu = testing_support::random_matrix(3, 1, rng);
  const auto rule = build_nsqda(two_class(mu, S, mu, S));
  EXPECT_LT(rule.E[0].norm(), 1e-12);
  EXPECT_LT(rule.F[0].norm(), 1e-12);
  EXPECT_NEAR(rule.G[0], 0.0, 1e-12);
}

TEST(Nsqda, DeterminantTermOnly) {
  const auto rule = build_nsqda(
      two_class(Vector::Zero(1), Matrix::Identity(1, 1), Vector::Zero(1), 4.0 * Matrix::Identity(1, 1)));
  EXPECT_NEAR(rule.G[0], -0.5 * std::log(4.0), 1e-15);
  EXPECT_TRUE(is_symmetric(rule.E[0], 1e-10));
}

TEST(Nsqda, ShrinksIllConditionedCovariance) {
  Matrix S = Matrix::Identity(2, 2);
  S(1, 1) = 1e-12;
  const auto reg = regularize(S, ShrinkConfig{}, "test");
  EXPECT_GT(reg.lambda, 0.0);
  EXPECT_LE(reg.cov.eigenvalues().real().maxCoeff() / reg.cov.eigenvalues().real().minCoeff(), 1e8);
  EXPECT_NO_THROW(build_nsqda(two_class(v2(0, 0), S, v2(1, 1), S)));
  EXPECT_THROW(regularize(Matrix(Matrix::Zero(2, 2)), ShrinkConfig{}, "zero"), NumericalError);
}

TEST(Nsqda, MultiClassArgmaxTiesToSmallerIndex) {
  TimeIndexedGaussianMoments<double> m;
  const Matrix I = Matrix::Identity(2, 2);
  m.classes = {{{v2(0, 0), I}}, {{v2(2, 0), I}}, {{v2(0, 2), I}}};
  const auto q = build_nsqda(m);
  EXPECT_EQ(classify(q, v2(0, 0), 0), 0);
  EXPECT_EQ(classify(q, v2(3, 0), 0), 1);
  EXPECT_EQ(classify(q, v2(0, 3), 0), 2);
  EXPECT_EQ(classify(q, v2(1, 0), 0), 0);  // equidistant from classes 0 and 1
  const auto l = build_nslda(m, Pooling::equal_weight);
  EXPECT_EQ(classify(l, v2(1, 0), 0), 0);
  EXPECT_EQ(classify(l, v2(1, 1.5), 0), 2);
}

TEST(Nslda, PooledEqualsCommonCovariance) {
  Rng rng(2);
  const Matrix S = testing_support::random_spd(2, rng);
  const auto m = two_class(v2(0, 0), S, v2(1, 2), S);
  Eigen::MatrixXi counts(2, 1);
  counts << 7, 3;
  for (auto mode : {Pooling::equal_weight, Pooling::sample_weighted, Pooling::total_minus_two}) {
    EXPECT_LT(max_abs_diff(build_nslda(m, mode, counts).pooled[0], S), 1e-14);
  }
}

TEST(Nslda, HandEvaluatedRule) {
  const Matrix I = Matrix::Identity(2, 2);
  const auto rule = build_nslda(two_class(v2(0, 0), I, v2(2, 0), I), Pooling::equal_weight);
  EXPECT_LT(max_abs_diff(rule.w[0], v2(2, 0)), 1e-15);
  EXPECT_NEAR(rule.b[0], -2.0, 1e-15);
  EXPECT_EQ(classify(rule, v2(1.5, 7.0), 0), 1);
  EXPECT_EQ(classify(rule, v2(1.0, -4.0), 0), 1);
  EXPECT_EQ(classify(rule, v2(0.5, 0.0), 0), 0);
}

TEST(Nslda, SampleWeightedPooling) {
  const Matrix S0 = Matrix::Identity(2, 2), S1 = 5.0 * Matrix::Identity(2, 2);
  std::vector<Matrix> covs{S0, S1};
  EXPECT_LT(max_abs_diff(pool_covariances(covs, {3, 1}, Pooling::sample_weighted), S0), 1e-15);
  EXPECT_LT(max_abs_diff(pool_covariances(covs, {3, 1}, Pooling::total_minus_two), S0), 1e-15);
  EXPECT_LT(max_abs_diff(pool_covariances(covs, {0, 0}, Pooling::sample_weighted), Matrix(3.0 * S0)), 1e-15);
  EXPECT_LT(max_abs_diff(pool_covariances(covs, {1, 1}, Pooling::total_minus_two), Matrix(3.0 * S0)), 1e-15);
  // Three classes: the two divisors disagree for unbalanced counts.
  std::vector<Matrix> three{S0, S0, S0};
  EXPECT_LT(max_abs_diff(pool_covariances(three, {4, 3, 2}, Pooling::sample_weighted), S0), 1e-15);
  EXPECT_LT(max_abs_diff(pool_covariances(three, {4, 3, 2}, Pooling::total_minus_two), Matrix(6.0 / 7.0 * S0)),
            1e-15);
}

TEST(Classify, PriorDominatedAndRangeChecked) {
  Rng rng(3);
  const Matrix S = testing_support::random_spd(2, rng);
  auto m = two_class(v2(1, 1), S, v2(1, 1), S);
  m.priors = {{0.1, 0.9}};
  const auto q = build_nsqda(m);
  const auto l = build_nslda(m, Pooling::equal_weight);
  for (int i = 0; i < 100; ++i) {
    const Vector x = testing_support::random_matrix(2, 1, rng, 5.0);
    EXPECT_EQ(classify(q, x, 0), 1);
    EXPECT_EQ(classify(l, x, 0), 1);
  }
  EXPECT_THROW(classify(q, v2(0, 0), 1), InvalidArgument);
  EXPECT_THROW(classify(l, v2(0, 0), -1), InvalidArgument);
}

TEST(Moments, ValidateRejectsBadPriorsAndCovariances) {
  auto m = two_class(v2(0, 0), Matrix::Identity(2, 2), v2(1, 0), Matrix::Identity(2, 2));
  m.priors = {{0.5, 0.6}};
  EXPECT_THROW(m.validate(), InvalidArgument);
  m.priors.clear();
  m.classes[1][0].cov(0, 0) = -1.0;
  EXPECT_THROW(m.validate(), InvalidArgument);
}

TEST(DiscriminantProperties, HomoskedasticQdaEqualsLda) {
  Rng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix S = testing_support::random_spd(2, rng);
    const auto m = two_class(testing_support::random_matrix(2, 1, rng), S, testing_support::random_matrix(2, 1, rng), S);
    const auto q = build_nsqda(m);
    const auto l = build_nslda(m, Pooling::equal_weight);
    int agree = 0;
    for (int i = 0; i < 1000; ++i) {
      const Vector x = testing_support::random_matrix(2, 1, rng, 2.0);
      agree += classify(q, x, 0) == classify(l, x, 0);
    }
    EXPECT_EQ(agree, 1000);
  }
}

TEST(DiscriminantProperties, RaisingPriorNeverFlipsToZero) {
  Rng rng(5);
  auto m = two_class(v2(0, 0), testing_support::random_spd(2, rng), v2(1, 0.5), testing_support::random_spd(2, rng));
  m.priors = {{0.5, 0.5}};
  const auto base_q = build_nsqda(m);
  const auto base_l = build_nslda(m, Pooling::equal_weight);
  m.priors = {{0.2, 0.8}};
  const auto hi_q = build_nsqda(m);
  const auto hi_l = build_nslda(m, Pooling::equal_weight);
  for (int i = 0; i < 5000; ++i) {
    const Vector x = testing_support::random_matrix(2, 1, rng, 3.0);
    if (classify(base_q, x, 0) == 1) EXPECT_EQ(classify(hi_q, x, 0), 1);
    if (classify(base_l, x, 0) == 1) EXPECT_EQ(classify(hi_l, x, 0), 1);
  }
}

TEST(DiscriminantProperties, AffineMapPreservesLabels) {
  Rng rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix S0 = testing_support::random_spd(2, rng), S1 = testing_support::random_spd(2, rng);
    const Vector m0 = testing_support::random_matrix(2, 1, rng), m1 = testing_support::random_matrix(2, 1, rng);
    const Matrix M = testing_support::random_matrix(2, 2, rng) + 2.0 * Matrix::Identity(2, 2);
    const Vector c = testing_support::random_matrix(2, 1, rng);
    const auto q = build_nsqda(two_class(m0, S0, m1, S1));
    const auto qt = build_nsqda(two_class(Vector(M * m0 + c), Matrix(M * S0 * M.transpose()), Vector(M * m1 + c),
                                          Matrix(M * S1 * M.transpose())));
    const auto l = build_nslda(two_class(m0, S0, m1, S1), Pooling::equal_weight);
    const auto lt = build_nslda(two_class(Vector(M * m0 + c), Matrix(M * S0 * M.transpose()), Vector(M * m1 + c),
                                          Matrix(M * S1 * M.transpose())),
                                Pooling::equal_weight);
    for (int i = 0; i < 1000; ++i) {
      const Vector x = testing_support::random_matrix(2, 1, rng, 2.0);
      const Vector y = M * x + c;
      // The affine map shifts every class discriminant by the same log|M|.
      EXPECT_NEAR(q.boundary(x, 0), qt.boundary(y, 0), 1e-9);
      if (std::abs(q.boundary(x, 0)) > 1e-9) EXPECT_EQ(classify(q, x, 0), classify(qt, y, 0));
      const double dl = l.w[0].dot(x) + l.b[0];
      EXPECT_NEAR(dl, lt.w[0].dot(y) + lt.b[0], 1e-9);
    }
  }
}

TEST(NaiveBaseline, PoolsAcrossTimeWithEmpiricalPriors) {
  const auto sim = simulate_linear(presets::table1_model(), presets::uniform_counts(2, 5, 10), 3);
  std::vector<Matrix> blocks{sim.data.class_samples(0), sim.data.class_samples(1)};
  const auto rule = naive_baseline(blocks, BaselineKind::lda);
  const auto& lda = std::get<LinearRule<double>>(rule);
  EXPECT_TRUE(lda.time_invariant);
  Rng rng(2);
  for (int i = 0; i < 200; ++i) {
    const Vector x = testing_support::random_matrix(2, 1, rng, 5.0);
    const int first = classify(rule, x, 0);
    for (int k = 1; k <= 12; ++k) EXPECT_EQ(classify(rule, x, k), first);
  }
  const Matrix X0 = blocks[0];
  const Vector mean = X0.rowwise().mean();
  const Matrix C0 = (X0.colwise() - mean) * (X0.colwise() - mean).transpose() / (X0.cols() - 1);
  const Matrix X1 = blocks[1];
  const Vector mean1 = X1.rowwise().mean();
  const Matrix C1 = (X1.colwise() - mean1) * (X1.colwise() - mean1).transpose() / (X1.cols() - 1);
  EXPECT_LT(max_abs_diff(lda.pooled[0], Matrix(0.5 * (C0 + C1))), 1e-12);
  EXPECT_TRUE(std::holds_alternative<QuadraticRule<double>>(naive_baseline(blocks, BaselineKind::qda)));
}

TEST(NaiveBaseline, UnbalancedPriorsAreEmpirical) {
  Rng rng(7);
  std::vector<Matrix> blocks{testing_support::random_matrix(2, 30, rng), testing_support::random_matrix(2, 10, rng)};
  const auto rule = std::get<QuadraticRule<double>>(naive_baseline(blocks, BaselineKind::qda));
  EXPECT_NEAR(rule.log_prior_ratio[0], std::log(10.0 / 30.0), 1e-14);
  blocks[1] = Matrix(2, 1);
  EXPECT_THROW(naive_baseline(blocks, BaselineKind::lda), InvalidArgument);
}

TEST(NaiveBaseline, StationaryDataMatchesTimeIndexedDirection) {
  auto model = presets::table1_model();
  for (auto& c : model.classes) {
    c.A = Matrix::Identity(2, 2);
    c.Q = Matrix::Zero(2, 2);
    c.K0 = Matrix::Zero(2, 2);
  }
  const auto sim = simulate_linear(model, presets::uniform_counts(2, 3, 1000), 9);
  std::vector<Matrix> blocks{sim.data.class_samples(0), sim.data.class_samples(1)};
  const auto naive = std::get<LinearRule<double>>(naive_baseline(blocks, BaselineKind::lda));
  TimeIndexedGaussianMoments<double> m;
  for (const auto& c : model.classes) {
    MomentSequence<double> seq;
    for (int k = 0; k <= 3; ++k) seq.push_back(theoretical_moments(c, k));
    m.classes.push_back(seq);
  }
  const auto ns = build_nslda(m, Pooling::equal_weight);
  for (int k = 0; k <= 3; ++k) {
    const double cosang = naive.w[0].dot(ns.w[k]) / (naive.w[0].norm() * ns.w[k].norm());
    EXPECT_LT(std::acos(std::min(1.0, cosang)) * 180.0 / M_PI, 5.0);
  }
}
