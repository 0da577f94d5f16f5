#include "opid/logistic.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <random>

namespace opid {
namespace {

Vector random_signs(std::mt19937_64& rng, Index n) {
  Vector y(n);
  for (Index i = 0; i < n; ++i) y(i) = (rng() & 1) ? 1.0 : -1.0;
  return y;
}

TEST(TrainLogistic, ZeroFeaturesGiveZeroModel) {
  std::mt19937_64 rng(1);
  const Vector v = train_logistic(Matrix::Zero(8, 3), random_signs(rng, 8), 1.0);
  EXPECT_EQ(v, Vector::Zero(3));
}

TEST(TrainLogistic, StationaryAndNoWorseThanOrigin) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const Index n = 10 + static_cast<Index>(rng() % 40);
    const Index d = 1 + static_cast<Index>(rng() % 8);
    const Matrix x = oracle::random_matrix(rng, n, d);
    const Vector y = random_signs(rng, n);
    const double alpha = trial % 2 ? 0.1 : 5.0;
    const Vector v = train_logistic(x, y, alpha);
    EXPECT_LE(oracle::logistic_fd_gradient(x, y, alpha, v).norm(), 1e-5);
    EXPECT_LE(logistic_gradient(x, y, alpha, v).norm(), 1e-6);
    EXPECT_LE(logistic_objective(x, y, alpha, v), logistic_objective(x, y, alpha, Vector::Zero(d)));
  }
}

TEST(TrainLogistic, RestartsAgree) {
  std::mt19937_64 rng(3);
  const Matrix x = oracle::random_matrix(rng, 40, 5);
  const Vector y = random_signs(rng, 40);
  const Vector a = train_logistic(x, y, 2.0);
  LogisticOptions opt;
  opt.initial = oracle::random_matrix(rng, 5, 1, 3.0).col(0);
  const Vector b = train_logistic(x, y, 2.0, opt);
  EXPECT_LE((a - b).norm(), 1e-5);
}

TEST(TrainLogistic, SeparableDataStaysFinite) {
  Matrix x(4, 1);
  x << 1, 2, -1, -2;
  Vector y(4);
  y << 1, 1, -1, -1;
  const Vector v = train_logistic(x, y, 100.0);
  EXPECT_TRUE(v.allFinite());
  EXPECT_GT(v(0), 0.0);
}

TEST(TrainLogistic, RejectsBadInput) {
  const Matrix x = Matrix::Ones(3, 2);
  Vector y(3);
  y << 1, -1, 0;
  EXPECT_THROW(train_logistic(x, y, 1.0), SchemaError);
  y(2) = 1;
  EXPECT_THROW(train_logistic(x, y, 0.0), ParameterError);
  EXPECT_THROW(train_logistic(Matrix(0, 2), Vector(0), 1.0), SchemaError);
}

TEST(TrainOvr, TwoClassesMatchBinarySign) {
  std::mt19937_64 rng(4);
  const Matrix x = oracle::random_matrix(rng, 30, 4);
  const auto y = oracle::random_labels(rng, 30, 2);
  const auto m = train_ovr(x, y, 1.0);
  const Vector v = train_logistic(x, y.signed_column(1), 1.0);
  const auto pred = m.predict(x);
  for (Index i = 0; i < x.rows(); ++i) {
    const double s = x.row(i).dot(v);
    if (std::abs(s) > 1e-6) {
      EXPECT_EQ(pred[static_cast<std::size_t>(i)], s > 0 ? 1 : 0);
    }
  }
}

TEST(TrainOvr, EachColumnIsStationary) {
  std::mt19937_64 rng(5);
  const Matrix x = oracle::random_matrix(rng, 25, 3);
  const auto y = oracle::random_labels(rng, 25, 4);
  const auto m = train_ovr(x, y, 0.5);
  ASSERT_FALSE(m.constant_class);
  for (Index l = 0; l < 4; ++l)
    EXPECT_LE(oracle::logistic_fd_gradient(x, y.signed_column(l), 0.5, m.coef.col(l)).norm(), 1e-5);
}

TEST(TrainOvr, SingleClassIsConstant) {
  std::mt19937_64 rng(6);
  const Matrix x = oracle::random_matrix(rng, 5, 2);
  const auto m = train_ovr(x, one_hot_encode({2, 2, 2, 2, 2}, 3), 1.0);
  ASSERT_TRUE(m.constant_class);
  EXPECT_EQ(m.predict(oracle::random_matrix(rng, 4, 2)), std::vector<Index>(4, 2));
}

TEST(LogisticModel, ProbabilitiesInUnitInterval) {
  std::mt19937_64 rng(7);
  const Matrix x = oracle::random_matrix(rng, 30, 3);
  const auto m = train_ovr(x, oracle::random_labels(rng, 30, 3), 1.0);
  const Matrix p = m.probabilities(oracle::random_matrix(rng, 50, 3, 10.0));
  EXPECT_GE(p.minCoeff(), 0.0);
  EXPECT_LE(p.maxCoeff(), 1.0);
  EXPECT_THROW(m.decision(Matrix::Zero(2, 4)), SchemaError);
}

TEST(Sigmoid, StableAtExtremes) {
  EXPECT_EQ(sigmoid(0.0), 0.5);
  EXPECT_EQ(sigmoid(-1000.0), 0.0);
  EXPECT_EQ(sigmoid(1000.0), 1.0);
  EXPECT_NEAR(sigmoid(2.0) + sigmoid(-2.0), 1.0, 1e-15);
}

}  // namespace
}  // namespace opid
