#include "opid/core.hpp"

#include <gtest/gtest.h>

#include <random>

namespace opid {
namespace {

TEST(OneHot, EncodesRows) {
  Matrix expect(2, 3);
  expect << 1, 0, 0, 0, 0, 1;
  EXPECT_EQ(one_hot_encode({0, 2}, 3).one_hot(), expect);

  Matrix single(1, 2);
  single << 0, 1;
  EXPECT_EQ(one_hot_encode({1}, 2).one_hot(), single);

  Matrix three(3, 2);
  three << 1, 0, 1, 0, 0, 1;
  EXPECT_EQ(one_hot_encode({0, 0, 1}, 2).one_hot(), three);
}

TEST(OneHot, RejectsOutOfRange) {
  EXPECT_THROW(one_hot_encode({0, 3}, 3), SchemaError);
  EXPECT_THROW(one_hot_encode({-1}, 2), SchemaError);
}

TEST(OneHot, RowsSumToOneProperty) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const Index c = 2 + static_cast<Index>(rng() % 6);
    const Index n = 1 + static_cast<Index>(rng() % 30);
    std::vector<Index> l(static_cast<std::size_t>(n));
    for (auto& x : l) x = static_cast<Index>(rng() % static_cast<unsigned long>(c));
    const auto y = one_hot_encode(l, c);
    for (Index i = 0; i < n; ++i) {
      EXPECT_EQ(y.one_hot().row(i).sum(), 1.0);
      for (Index j = 0; j < c; ++j) {
        const double v = y.one_hot()(i, j);
        EXPECT_TRUE(v == 0.0 || v == 1.0);
      }
    }
    EXPECT_EQ(y.labels(), l);
  }
}

TEST(LabelMatrix, SignedColumn) {
  const auto y = one_hot_encode({0, 1, 1}, 2);
  Vector expect(3);
  expect << -1, 1, 1;
  EXPECT_EQ(y.signed_column(1), expect);
}

TEST(LabelMatrix, FromOneHotRejectsNonIndicator) {
  Matrix m(1, 2);
  m << 0.5, 0.5;
  EXPECT_THROW(LabelMatrix::from_one_hot(m), SchemaError);
  m << 1, 1;
  EXPECT_THROW(LabelMatrix::from_one_hot(m), SchemaError);
}

TEST(ArgmaxDecode, Examples) {
  Matrix a(1, 2);
  a << 0.1, 0.9;
  EXPECT_EQ(argmax_decode(a), (std::vector<Index>{1}));
  a << 0.5, 0.5;
  EXPECT_EQ(argmax_decode(a), (std::vector<Index>{0}));
  Matrix b(2, 3);
  b << 3, 1, 2, 0, 0, 7;
  EXPECT_EQ(argmax_decode(b), (std::vector<Index>{0, 2}));
}

TEST(ArgmaxDecode, RejectsNonFinite) {
  Matrix a(1, 2);
  a << 0.0, std::nan("");
  EXPECT_THROW(argmax_decode(a), NumericError);
}

TEST(ArgmaxDecode, ShiftInvariantProperty) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 200; ++trial) {
    Matrix s(5, 4);
    for (Index i = 0; i < s.size(); ++i) s.data()[i] = std::round(g(rng) * 4.0) / 4.0;
    Matrix shifted = s;
    // Dyadic shifts keep the quarter-grid values exact, so ties survive.
    for (Index i = 0; i < s.rows(); ++i) shifted.row(i).array() += std::ldexp(static_cast<double>(i + 1), -3);
    EXPECT_EQ(argmax_decode(s), argmax_decode(shifted));
  }
}

Batch cbatch(Index n, Index dv, Index ds, Index c) {
  return Batch::compress(Matrix::Zero(n, dv), Matrix::Zero(n, ds),
                         one_hot_encode(std::vector<Index>(static_cast<std::size_t>(n), 0), c));
}

TEST(ValidateBatch, Examples) {
  const FeatureSchema s(2, 3, 1, 2);
  EXPECT_NO_THROW(validate_batch(cbatch(4, 2, 3, 2), s));
  EXPECT_THROW(validate_batch(cbatch(4, 3, 3, 2), s), SchemaError);

  Batch e = Batch::expand(Matrix::Zero(4, 3), Matrix::Zero(4, 1), one_hot_encode({0, 1, 0, 1}, 2));
  EXPECT_NO_THROW(validate_batch(e, s));
  e.x_v = Matrix::Zero(4, 2);
  EXPECT_THROW(validate_batch(e, s), SchemaError);
}

TEST(ValidateBatch, ReportsOffendingDimension) {
  const FeatureSchema s(2, 3, 1, 2);
  try {
    validate_batch(cbatch(4, 3, 3, 2), s);
    FAIL();
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("x_v"), std::string::npos);
  }
}

TEST(ValidateBatch, AcceptsExactlyMatchingWidthsProperty) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 300; ++trial) {
    const FeatureSchema s(static_cast<Index>(rng() % 3), 1 + static_cast<Index>(rng() % 3),
                          static_cast<Index>(rng() % 3), 2 + static_cast<Index>(rng() % 2));
    const Index dv = static_cast<Index>(rng() % 3);
    const Index ds = 1 + static_cast<Index>(rng() % 3);
    const Index c = 2 + static_cast<Index>(rng() % 2);
    const bool match = dv == s.d_v && ds == s.d_s && c == s.c;
    bool accepted = true;
    try {
      validate_batch(cbatch(3, dv, ds, c), s);
    } catch (const SchemaError&) {
      accepted = false;
    }
    EXPECT_EQ(accepted, match);
  }
}

TEST(ValidateBatch, RowMismatchAndEmpty) {
  const FeatureSchema s(1, 1, 0, 2);
  Batch b = cbatch(3, 1, 1, 2);
  b.x_v = Matrix::Zero(2, 1);
  EXPECT_THROW(validate_batch(b, s), SchemaError);
  EXPECT_THROW(validate_batch(cbatch(0, 1, 1, 2), s), SchemaError);
}

TEST(FeatureSchema, DerivedWidthsAndInvariants) {
  const FeatureSchema s(2, 3, 4, 5);
  EXPECT_EQ(s.cstage_width(), 5);
  EXPECT_EQ(s.estage_width(), 7);
  EXPECT_EQ(s.stats_dim(), 8);
  EXPECT_NO_THROW(FeatureSchema(0, 1, 0, 2));
  EXPECT_THROW(FeatureSchema(0, 0, 0, 2), SchemaError);
  EXPECT_THROW(FeatureSchema(0, 1, 0, 1), SchemaError);
}

TEST(Hyperparams, RejectsNonPositive) {
  Hyperparams h;
  EXPECT_NO_THROW(h.validate());
  h.rho = 0.0;
  EXPECT_THROW(h.validate(), ParameterError);
}

}  // namespace
}  // namespace opid
