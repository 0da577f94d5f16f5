#include "opid/cstage.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>

namespace opid {
namespace {

double max_abs(const Matrix& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

Matrix stacked(const CStageModel& m) {
  Matrix w(m.w_tilde.rows() + m.w_s.rows(), m.w_s.cols());
  w << m.w_tilde, m.w_s;
  return w;
}

TEST(InitStats, Examples) {
  const FeatureSchema s(2, 1, 0, 2);  // m = 4
  const auto d = init_stats(s, 2.0, 1.0, AccumulationMode::Direct);
  EXPECT_EQ(d.a, 2.0 * Matrix::Identity(4, 4));
  EXPECT_EQ(d.b, Matrix::Zero(4, 2));
  EXPECT_EQ(d.t, 0);
  const auto inv = init_stats(s, 2.0, 1.0, AccumulationMode::Inverse);
  EXPECT_EQ(inv.a, 0.5 * Matrix::Identity(4, 4));
  EXPECT_THROW(init_stats(s, 0.0, 1.0, AccumulationMode::Direct), ParameterError);
  EXPECT_THROW(init_stats(s, 1.0, -1.0, AccumulationMode::Direct), ParameterError);
}

TEST(UpdateBlock, ReproducesIncrement) {
  std::mt19937_64 rng(1);
  const FeatureSchema s(2, 3, 0, 2);
  const Batch b = oracle::random_stream(rng, s, 1, 5).front();
  auto st = init_stats(s, 1.0, 0.5, AccumulationMode::Direct);
  absorb_batch(st, b);
  const Matrix u = make_update_block(b, 0.5);
  EXPECT_EQ(u.cols(), 15);
  EXPECT_LE(max_abs(st.a - (Matrix::Identity(8, 8) + u * u.transpose())), 1e-12);
}

TEST(AbsorbBatch, LambdaZeroDecouples) {
  std::mt19937_64 rng(2);
  const FeatureSchema s(2, 3, 0, 2);
  auto st = init_stats(s, 1.0, 0.0, AccumulationMode::Direct);
  for (const auto& b : oracle::random_stream(rng, s, 3, 6)) absorb_batch(st, b);
  EXPECT_EQ(max_abs(st.a.topRightCorner(5, 3)), 0.0);
  EXPECT_EQ(max_abs(st.a.bottomLeftCorner(3, 5)), 0.0);
}

TEST(AbsorbBatch, InverseMatchesDenseInverse) {
  std::mt19937_64 rng(3);
  const FeatureSchema s(2, 3, 0, 2);
  const Batch b = oracle::random_stream(rng, s, 1, 5).front();
  auto d = init_stats(s, 1.0, 0.5, AccumulationMode::Direct);
  auto inv = init_stats(s, 1.0, 0.5, AccumulationMode::Inverse);
  absorb_batch(d, b);
  absorb_batch(inv, b);
  EXPECT_LE(max_abs(inv.a - d.a.inverse()), 1e-8);
  EXPECT_EQ(inv.b, d.b);
  EXPECT_EQ(inv.t, 1);
}

TEST(AbsorbBatch, RejectsWrongStageAndShape) {
  const FeatureSchema s(1, 2, 1, 2);
  auto st = init_stats(s, 1.0, 1.0, AccumulationMode::Direct);
  const Batch e = Batch::expand(Matrix::Zero(2, 2), Matrix::Zero(2, 1), one_hot_encode({0, 1}, 2));
  EXPECT_THROW(absorb_batch(st, e), SchemaError);
  const Batch bad = Batch::compress(Matrix::Zero(2, 2), Matrix::Zero(2, 2), one_hot_encode({0, 1}, 2));
  EXPECT_THROW(absorb_batch(st, bad), SchemaError);
  EXPECT_EQ(st.t, 0);
}

TEST(AbsorbBatch, SingleRowBatches) {
  std::mt19937_64 rng(4);
  const FeatureSchema s(1, 2, 0, 3);
  const auto stream = oracle::random_stream(rng, s, 12, 1);
  auto inv = init_stats(s, 0.5, 2.0, AccumulationMode::Inverse);
  for (const auto& b : stream) absorb_batch(inv, b);
  const auto want = oracle::batch_cstage(stream, s, 2.0, 0.5);
  EXPECT_LE(max_abs(stacked(solve_model(inv)) - stacked(want)), 1e-8);
}

TEST(SolveModel, ZeroStatsGiveZeroModel) {
  const FeatureSchema s(2, 2, 0, 2);
  for (auto mode : {AccumulationMode::Direct, AccumulationMode::Inverse}) {
    const auto m = solve_model(init_stats(s, 1.0, 1.0, mode));
    EXPECT_EQ(m.w_tilde, Matrix::Zero(4, 2));
    EXPECT_EQ(m.w_s, Matrix::Zero(2, 2));
  }
}

TEST(SolveModel, MatchesBatchOracle) {
  std::mt19937_64 rng(5);
  const FeatureSchema s(3, 4, 0, 3);
  const auto stream = oracle::random_stream(rng, s, 4, 8);
  for (auto mode : {AccumulationMode::Direct, AccumulationMode::Inverse}) {
    auto st = init_stats(s, 0.1, 1.0, mode);
    for (const auto& b : stream) absorb_batch(st, b);
    const auto got = solve_model(st);
    const auto want = oracle::batch_cstage(stream, s, 1.0, 0.1);
    EXPECT_LE(max_abs(got.w_tilde - want.w_tilde), 1e-8);
    EXPECT_LE(max_abs(got.w_s - want.w_s), 1e-8);
  }
}

TEST(SolveModel, LambdaZeroIsStandaloneRidge) {
  std::mt19937_64 rng(6);
  const FeatureSchema s(2, 3, 0, 2);
  const auto stream = oracle::random_stream(rng, s, 3, 7);
  auto st = init_stats(s, 0.3, 0.0, AccumulationMode::Direct);
  for (const auto& b : stream) absorb_batch(st, b);
  Matrix xs(21, 3), y(21, 2);
  for (int t = 0; t < 3; ++t) {
    xs.middleRows(7 * t, 7) = stream[static_cast<std::size_t>(t)].x_s;
    y.middleRows(7 * t, 7) = stream[static_cast<std::size_t>(t)].y.one_hot();
  }
  EXPECT_LE(max_abs(solve_model(st).w_s - oracle::ridge(xs, y, 0.3)), 1e-8);
}

TEST(CStageProperties, AnytimeOrderSymmetryStationarity) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const FeatureSchema s(1 + static_cast<Index>(rng() % 4), 1 + static_cast<Index>(rng() % 5), 0,
                          2 + static_cast<Index>(rng() % 3));
    const double lambda = (trial % 3 == 0) ? 0.1 : (trial % 3 == 1 ? 1.0 : 10.0);
    const double rho = trial % 2 ? 0.01 : 1.0;
    auto stream = oracle::random_stream(rng, s, 5, 1 + static_cast<Index>(rng() % 10));

    auto d = init_stats(s, rho, lambda, AccumulationMode::Direct);
    auto inv = init_stats(s, rho, lambda, AccumulationMode::Inverse);
    std::vector<Batch> prefix;
    for (const auto& b : stream) {
      absorb_batch(d, b);
      absorb_batch(inv, b);
      prefix.push_back(b);
      EXPECT_LE(max_abs(d.a - d.a.transpose()), 1e-12);
      const auto want = oracle::batch_cstage(prefix, s, lambda, rho);
      EXPECT_LE(max_abs(stacked(solve_model(d)) - stacked(want)), 1e-8);
      const Matrix wi = stacked(solve_model(inv));
      const Matrix wd = stacked(solve_model(d));
      EXPECT_LE(max_abs(wi - wd) / std::max(1.0, max_abs(wd)), 1e-6);
    }
    const auto [g1, g2] = oracle::cstage_gradient(stream, lambda, rho, solve_model(d));
    EXPECT_LE(std::max(max_abs(g1), max_abs(g2)), 1e-6);

    std::shuffle(stream.begin(), stream.end(), rng);
    auto perm = init_stats(s, rho, lambda, AccumulationMode::Direct);
    for (const auto& b : stream) absorb_batch(perm, b);
    EXPECT_LE(max_abs(perm.a - d.a), 1e-12);
    EXPECT_LE(max_abs(perm.b - d.b), 1e-12);
  }
}

TEST(CStageStats, SizeIndependentOfStreamLength) {
  std::mt19937_64 rng(8);
  const FeatureSchema s(2, 2, 0, 2);
  auto st = init_stats(s, 1.0, 1.0, AccumulationMode::Direct);
  for (const auto& b : oracle::random_stream(rng, s, 50, 20)) absorb_batch(st, b);
  EXPECT_EQ(st.a.rows(), 6);
  EXPECT_EQ(st.a.cols(), 6);
  EXPECT_EQ(st.b.rows(), 6);
  EXPECT_EQ(st.b.cols(), 2);
  EXPECT_EQ(st.t, 50);
}

TEST(Compress, Examples) {
  std::mt19937_64 rng(9);
  CStageModel m;
  m.w_s = Matrix::Zero(3, 2);
  const Matrix x = oracle::random_matrix(rng, 4, 3);
  EXPECT_EQ(compress(x, m), Matrix::Zero(4, 2));
  m.w_s = oracle::random_matrix(rng, 3, 2);
  EXPECT_EQ(compress(Matrix::Identity(3, 3), m), m.w_s);
  EXPECT_LE(max_abs(compress(x, m) - oracle::naive_matmul(x, m.w_s)), 1e-14);
  EXPECT_THROW(compress(Matrix::Zero(2, 4), m), SchemaError);
}

TEST(Snapshot, ExactRoundTripAndResume) {
  std::mt19937_64 rng(10);
  const FeatureSchema s(2, 3, 1, 3);
  const auto stream = oracle::random_stream(rng, s, 4, 6);
  for (auto mode : {AccumulationMode::Direct, AccumulationMode::Inverse}) {
    auto full = init_stats(s, 0.2, 0.7, mode);
    for (const auto& b : stream) absorb_batch(full, b);

    auto half = init_stats(s, 0.2, 0.7, mode);
    absorb_batch(half, stream[0]);
    absorb_batch(half, stream[1]);
    std::stringstream ss;
    save_stats(ss, half);
    auto resumed = load_stats(ss);
    EXPECT_EQ(resumed.a, half.a);
    EXPECT_EQ(resumed.b, half.b);
    EXPECT_EQ(resumed.rho, half.rho);
    EXPECT_EQ(resumed.lambda, half.lambda);
    EXPECT_EQ(resumed.t, 2);
    EXPECT_EQ(resumed.mode, mode);
    absorb_batch(resumed, stream[2]);
    absorb_batch(resumed, stream[3]);
    EXPECT_EQ(resumed.a, full.a);
    EXPECT_EQ(resumed.b, full.b);
  }
}

TEST(Snapshot, RejectsGarbage) {
  std::stringstream ss("not a snapshot");
  EXPECT_THROW(load_stats(ss), IoError);
}

}  // namespace
}  // namespace opid
