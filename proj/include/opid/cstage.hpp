#pragma once

// One-pass compressing stage.
//
// The coupled ridge objective over (W_tilde, W_s) is quadratic, so its optimum
// is determined by a single symmetric system A [W_tilde; W_s] = B. Both A and B
// are sums of per-batch terms, which is what makes the stage one-pass. Two
// interchangeable accumulators are provided:
//
//   Direct   keeps A itself and solves once on demand (m x m Cholesky).
//   Inverse  keeps A^{-1} through a rank-3n Woodbury update per batch, so a
//            model is available at any time by a single multiply.

#include "opid/core.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <string>

namespace opid {

enum class AccumulationMode { Direct, Inverse };

inline const char* to_string(AccumulationMode m) {
  return m == AccumulationMode::Direct ? "direct" : "inverse";
}

inline AccumulationMode parse_mode(const std::string& s) {
  if (s == "direct") return AccumulationMode::Direct;
  if (s == "inverse") return AccumulationMode::Inverse;
  throw ParameterError("unknown accumulation mode '" + s + "'");
}

/// Mode picked when the caller does not choose one.
inline AccumulationMode default_mode(const FeatureSchema& s) {
  return s.stats_dim() <= 2048 ? AccumulationMode::Direct : AccumulationMode::Inverse;
}

/// Sufficient statistics of the compressing stage. Size depends only on the
/// schema, never on how many instances were absorbed.
struct CStageStats {
  AccumulationMode mode = AccumulationMode::Direct;
  FeatureSchema schema;
  double rho = 0.0;
  double lambda = 0.0;
  Matrix a;  // A in Direct mode, A^{-1} in Inverse mode; m x m
  Matrix b;  // m x c
  long long t = 0;

  Index dim() const { return schema.stats_dim(); }
};

/// U = [U1, U2, U3] with U U^T equal to the per-batch increment of A.
inline Matrix make_update_block(const Batch& batch, double lambda) {
  const Matrix xt = batch.cstage_features();
  const Matrix& xs = batch.x_s;
  const Index n = batch.rows();
  const Index wt = xt.cols();
  const Index ds = xs.cols();
  const double sl = std::sqrt(lambda);

  Matrix u = Matrix::Zero(wt + ds, 3 * n);
  u.block(0, 0, wt, n) = xt.transpose();
  u.block(wt, n, ds, n) = xs.transpose();
  u.block(0, 2 * n, wt, n) = sl * xt.transpose();
  u.block(wt, 2 * n, ds, n) = -sl * xs.transpose();
  return u;
}

inline CStageStats init_stats(const FeatureSchema& schema, double rho, double lambda,
                              AccumulationMode mode) {
  schema.validate();
  if (!(rho > 0.0) || !std::isfinite(rho))
    throw ParameterError(detail::concat("rho must be finite and > 0, got ", rho));
  // lambda = 0 is allowed: it decouples the two ridge problems.
  if (!(lambda >= 0.0) || !std::isfinite(lambda))
    throw ParameterError(detail::concat("lambda must be finite and >= 0, got ", lambda));

  CStageStats s;
  s.mode = mode;
  s.schema = schema;
  s.rho = rho;
  s.lambda = lambda;
  const Index m = schema.stats_dim();
  s.a = Matrix::Identity(m, m) * (mode == AccumulationMode::Direct ? rho : 1.0 / rho);
  s.b = Matrix::Zero(m, schema.c);
  s.t = 0;
  return s;
}

inline void absorb_batch(CStageStats& stats, const Batch& batch) {
  if (batch.stage != Stage::Compress) throw SchemaError("absorb_batch needs a C-stage batch");
  validate_batch(batch, stats.schema);

  const Matrix xt = batch.cstage_features();
  const Matrix& xs = batch.x_s;
  const Matrix& y = batch.y.one_hot();
  const Index wt = xt.cols();
  const Index ds = xs.cols();
  const double lam = stats.lambda;

  stats.b.topRows(wt).noalias() += xt.transpose() * y;
  stats.b.bottomRows(ds).noalias() += xs.transpose() * y;

  if (stats.mode == AccumulationMode::Direct) {
    const Matrix cross = xt.transpose() * xs;
    stats.a.topLeftCorner(wt, wt).noalias() += (1.0 + lam) * (xt.transpose() * xt);
    stats.a.topRightCorner(wt, ds) -= lam * cross;
    stats.a.bottomLeftCorner(ds, wt) -= lam * cross.transpose();
    stats.a.bottomRightCorner(ds, ds).noalias() += (1.0 + lam) * (xs.transpose() * xs);
    detail::symmetrize(stats.a);
  } else {
    const Matrix u = make_update_block(batch, lam);
    const Matrix ainv_u = stats.a * u;  // m x 3n
    Matrix inner = u.transpose() * ainv_u;
    inner.diagonal().array() += 1.0;
    detail::symmetrize(inner);
    Eigen::LLT<Matrix> llt(inner);
    if (llt.info() != Eigen::Success)
      throw NumericError("Woodbury inner system is not positive definite");
    stats.a.noalias() -= ainv_u * llt.solve(ainv_u.transpose());
    detail::symmetrize(stats.a);
  }
  if (!stats.a.allFinite() || !stats.b.allFinite())
    throw NumericError("non-finite sufficient statistics after absorbing batch");
  ++stats.t;
}

inline CStageModel solve_model(const CStageStats& stats) {
  Matrix w;
  if (stats.mode == AccumulationMode::Direct) {
    Eigen::LLT<Matrix> llt(stats.a);
    if (llt.info() != Eigen::Success) throw NumericError("A is not positive definite");
    w = llt.solve(stats.b);
  } else {
    w = stats.a * stats.b;
  }
  if (!w.allFinite()) throw NumericError("non-finite compressing-stage solution");
  const Index wt = stats.schema.cstage_width();
  CStageModel model;
  model.w_tilde = w.topRows(wt);
  model.w_s = w.bottomRows(stats.schema.d_s);
  return model;
}

/// Stacked representation Z = x_s * W_s.
inline Matrix compress(const Matrix& x_s, const CStageModel& model) {
  if (x_s.cols() != model.w_s.rows())
    throw SchemaError(detail::concat("x_s has width ", x_s.cols(), ", model expects ",
                                     model.w_s.rows()));
  return x_s * model.w_s;
}

// Snapshot container -------------------------------------------------------
//
// Plain text, one header line per field, matrices row-major with hexfloat
// entries so every double round-trips exactly.

namespace detail {

inline std::string hexfloat(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

inline double parse_double(const std::string& tok) {
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end == tok.c_str() || *end != '\0') throw IoError("malformed number '" + tok + "'");
  return v;
}

inline void write_matrix(std::ostream& os, const Matrix& m) {
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (j) os << ' ';
      os << hexfloat(m(i, j));
    }
    os << '\n';
  }
}

inline Matrix read_matrix(std::istream& is, Index rows, Index cols) {
  Matrix m(rows, cols);
  std::string tok;
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) {
      if (!(is >> tok)) throw IoError("truncated matrix data");
      m(i, j) = parse_double(tok);
    }
  return m;
}

inline void expect_key(std::istream& is, const std::string& key) {
  std::string tok;
  if (!(is >> tok) || tok != key)
    throw IoError("expected '" + key + "' but found '" + tok + "'");
}

template <typename T>
T read_field(std::istream& is, const std::string& key) {
  expect_key(is, key);
  T v{};
  if (!(is >> v)) throw IoError("bad value for '" + key + "'");
  return v;
}

inline double read_double_field(std::istream& is, const std::string& key) {
  expect_key(is, key);
  std::string tok;
  if (!(is >> tok)) throw IoError("missing value for '" + key + "'");
  return parse_double(tok);
}

inline void write_schema(std::ostream& os, const FeatureSchema& s) {
  os << "schema " << s.d_v << ' ' << s.d_s << ' ' << s.d_a << ' ' << s.c << '\n';
}

inline FeatureSchema read_schema(std::istream& is) {
  expect_key(is, "schema");
  Index dv = 0, ds = 0, da = 0, c = 0;
  if (!(is >> dv >> ds >> da >> c)) throw IoError("bad schema line");
  return FeatureSchema(dv, ds, da, c);
}

}  // namespace detail

inline void save_stats(std::ostream& os, const CStageStats& s) {
  os << "opid-cstage-stats 1\n";
  os << "mode " << to_string(s.mode) << '\n';
  detail::write_schema(os, s.schema);
  os << "m " << s.dim() << '\n';
  os << "c " << s.schema.c << '\n';
  os << "rho " << detail::hexfloat(s.rho) << '\n';
  os << "lambda " << detail::hexfloat(s.lambda) << '\n';
  os << "t " << s.t << '\n';
  os << "a\n";
  detail::write_matrix(os, s.a);
  os << "b\n";
  detail::write_matrix(os, s.b);
  if (!os) throw IoError("failed writing stats snapshot");
}

inline CStageStats load_stats(std::istream& is) {
  std::string magic;
  int version = 0;
  if (!(is >> magic >> version) || magic != "opid-cstage-stats" || version != 1)
    throw IoError("not a stats snapshot");
  CStageStats s;
  s.mode = parse_mode(detail::read_field<std::string>(is, "mode"));
  s.schema = detail::read_schema(is);
  const auto m = detail::read_field<Index>(is, "m");
  const auto c = detail::read_field<Index>(is, "c");
  if (m != s.schema.stats_dim() || c != s.schema.c)
    throw IoError("snapshot dimensions disagree with its schema");
  s.rho = detail::read_double_field(is, "rho");
  s.lambda = detail::read_double_field(is, "lambda");
  s.t = detail::read_field<long long>(is, "t");
  detail::expect_key(is, "a");
  s.a = detail::read_matrix(is, m, m);
  detail::expect_key(is, "b");
  s.b = detail::read_matrix(is, m, c);
  return s;
}

}  // namespace opid
