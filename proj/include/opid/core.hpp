#pragma once

// Shape-safe data model shared by both learning stages: feature schemas,
// mini-batches, one-hot label matrices and the model containers.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace opid {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// Error taxonomy. Everything derives from std::runtime_error so callers can
// catch broadly at the CLI boundary.
struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ParameterError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SolverError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

template <typename... Args>
std::string concat(const Args&... args) {
  std::ostringstream os;
  (os << ... << args);
  return os.str();
}

inline void symmetrize(Matrix& m) { m = 0.5 * (m + m.transpose()).eval(); }

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace detail

/// Partition of the feature space across the two stages.
///
/// The compressing stage sees [vanished | survived] columns, the expanding
/// stage sees [survived | augmented]. Either outer partition may be empty.
struct FeatureSchema {
  Index d_v = 0;  // vanished
  Index d_s = 1;  // survived
  Index d_a = 0;  // augmented
  Index c = 2;    // classes

  FeatureSchema() = default;
  FeatureSchema(Index vanished, Index survived, Index augmented, Index classes)
      : d_v(vanished), d_s(survived), d_a(augmented), c(classes) {
    validate();
  }

  void validate() const {
    if (d_s < 1) throw SchemaError(detail::concat("d_s must be >= 1, got ", d_s));
    if (c < 2) throw SchemaError(detail::concat("class count must be >= 2, got ", c));
    if (d_v < 0) throw SchemaError(detail::concat("d_v must be >= 0, got ", d_v));
    if (d_a < 0) throw SchemaError(detail::concat("d_a must be >= 0, got ", d_a));
  }

  Index cstage_width() const { return d_v + d_s; }
  Index estage_width() const { return d_s + d_a; }
  // Dimension of the sufficient-statistics matrix: [W_tilde; W_s] rows.
  Index stats_dim() const { return d_v + 2 * d_s; }
  // Width of the stacked expanding-stage representation [z_s | x_a].
  Index stacked_width() const { return c + d_a; }

  friend bool operator==(const FeatureSchema&, const FeatureSchema&) = default;
};

/// One-hot class membership, one row per instance.
class LabelMatrix {
 public:
  LabelMatrix() = default;

  /// Wraps an existing indicator matrix; rejects anything that is not one-hot.
  static LabelMatrix from_one_hot(Matrix m) {
    if (m.cols() < 2) throw SchemaError("label matrix needs at least 2 columns");
    for (Index i = 0; i < m.rows(); ++i) {
      int ones = 0;
      for (Index j = 0; j < m.cols(); ++j) {
        const double v = m(i, j);
        if (v == 1.0) {
          ++ones;
        } else if (v != 0.0) {
          throw SchemaError(detail::concat("label row ", i, " has non-indicator entry ", v));
        }
      }
      if (ones != 1)
        throw SchemaError(detail::concat("label row ", i, " has ", ones, " active classes"));
    }
    LabelMatrix out;
    out.one_hot_ = std::move(m);
    return out;
  }

  const Matrix& one_hot() const { return one_hot_; }
  Index rows() const { return one_hot_.rows(); }
  Index classes() const { return one_hot_.cols(); }

  Index label(Index row) const {
    Index k = 0;
    one_hot_.row(row).maxCoeff(&k);
    return k;
  }

  std::vector<Index> labels() const {
    std::vector<Index> out(static_cast<std::size_t>(rows()));
    for (Index i = 0; i < rows(); ++i) out[static_cast<std::size_t>(i)] = label(i);
    return out;
  }

  /// Class `cls` recoded as +1, every other class as -1.
  Vector signed_column(Index cls) const {
    return (2.0 * one_hot_.col(cls).array() - 1.0).matrix();
  }

  LabelMatrix select_rows(const std::vector<Index>& rows) const {
    Matrix m(static_cast<Index>(rows.size()), classes());
    for (std::size_t i = 0; i < rows.size(); ++i) m.row(static_cast<Index>(i)) = one_hot_.row(rows[i]);
    LabelMatrix out;
    out.one_hot_ = std::move(m);
    return out;
  }

 private:
  Matrix one_hot_;
};

inline LabelMatrix one_hot_encode(const std::vector<Index>& labels, Index c) {
  if (c < 2) throw SchemaError(detail::concat("class count must be >= 2, got ", c));
  Matrix m = Matrix::Zero(static_cast<Index>(labels.size()), c);
  for (std::size_t k = 0; k < labels.size(); ++k) {
    const Index l = labels[k];
    if (l < 0 || l >= c)
      throw SchemaError(detail::concat("label ", l, " at row ", k, " outside [0, ", c, ")"));
    m(static_cast<Index>(k), l) = 1.0;
  }
  return LabelMatrix::from_one_hot(std::move(m));
}

/// Per-row argmax; ties resolve to the lowest column index.
inline std::vector<Index> argmax_decode(const Matrix& scores) {
  if (scores.cols() < 2) throw SchemaError("score matrix needs at least 2 columns");
  if (!scores.allFinite()) throw NumericError("non-finite entry in score matrix");
  std::vector<Index> out(static_cast<std::size_t>(scores.rows()));
  for (Index i = 0; i < scores.rows(); ++i) {
    Index best = 0;
    for (Index j = 1; j < scores.cols(); ++j)
      if (scores(i, j) > scores(i, best)) best = j;
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

enum class Stage { Compress, Expand };

inline const char* to_string(Stage s) { return s == Stage::Compress ? "C" : "E"; }

/// A mini-batch. C-stage batches carry x_v and x_s; E-stage batches carry
/// x_s and x_a. The absent block is an empty 0x0 matrix.
struct Batch {
  Stage stage = Stage::Compress;
  Matrix x_v;
  Matrix x_s;
  Matrix x_a;
  LabelMatrix y;

  Index rows() const { return x_s.rows(); }

  static Batch compress(Matrix vanished, Matrix survived, LabelMatrix labels) {
    Batch b;
    b.stage = Stage::Compress;
    b.x_v = std::move(vanished);
    b.x_s = std::move(survived);
    b.y = std::move(labels);
    return b;
  }

  static Batch expand(Matrix survived, Matrix augmented, LabelMatrix labels) {
    Batch b;
    b.stage = Stage::Expand;
    b.x_s = std::move(survived);
    b.x_a = std::move(augmented);
    b.y = std::move(labels);
    return b;
  }

  /// [x_v, x_s]
  Matrix cstage_features() const {
    Matrix out(rows(), x_v.cols() + x_s.cols());
    out << x_v, x_s;
    return out;
  }

  /// [x_s, x_a]
  Matrix estage_features() const {
    Matrix out(rows(), x_s.cols() + x_a.cols());
    out << x_s, x_a;
    return out;
  }

  Batch select_rows(const std::vector<Index>& idx) const {
    auto take = [&](const Matrix& m) {
      if (m.rows() == 0 && m.cols() == 0) return Matrix();
      Matrix out(static_cast<Index>(idx.size()), m.cols());
      for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Index>(i)) = m.row(idx[i]);
      return out;
    };
    Batch b;
    b.stage = stage;
    b.x_v = take(x_v);
    b.x_s = take(x_s);
    b.x_a = take(x_a);
    b.y = y.select_rows(idx);
    return b;
  }
};

/// Throws SchemaError naming the first offending dimension.
inline void validate_batch(const Batch& b, const FeatureSchema& s) {
  s.validate();
  const Index n = b.x_s.rows();
  if (n < 1) throw SchemaError("batch has no rows");
  auto check_block = [&](const Matrix& m, Index width, const char* name) {
    if (m.rows() != n)
      throw SchemaError(detail::concat(name, " has ", m.rows(), " rows, expected ", n));
    if (m.cols() != width)
      throw SchemaError(detail::concat(name, " has width ", m.cols(), ", schema expects ", width));
  };
  auto check_absent = [&](const Matrix& m, const char* name) {
    if (m.rows() != 0 || m.cols() != 0)
      throw SchemaError(detail::concat(to_string(b.stage), "-stage batch must not carry ", name));
  };
  check_block(b.x_s, s.d_s, "x_s");
  if (b.stage == Stage::Compress) {
    check_block(b.x_v, s.d_v, "x_v");
    check_absent(b.x_a, "x_a");
  } else {
    check_absent(b.x_v, "x_v");
    check_block(b.x_a, s.d_a, "x_a");
  }
  if (b.y.rows() != n)
    throw SchemaError(detail::concat("labels have ", b.y.rows(), " rows, expected ", n));
  if (b.y.classes() != s.c)
    throw SchemaError(detail::concat("labels have ", b.y.classes(), " classes, schema expects ", s.c));
}

/// Compressing-stage coefficients: w_tilde over [x_v, x_s], w_s over x_s.
struct CStageModel {
  Matrix w_tilde;
  Matrix w_s;
};

/// Expanding-stage joint model. Coefficients are kept in the
/// weight-absorbed parameterization (the one with 1/w penalties).
struct EStageModel {
  Matrix v_s;    // c x c
  Matrix v_bar;  // (c + d_a) x c
  double w1 = 0.5;
  double w2 = 0.5;
};

struct Hyperparams {
  double lambda = 1.0;  // consistency weight
  double rho = 0.1;     // compressing-stage ridge
  double gamma = 1.0;   // expanding-stage ridge
  double alpha1 = 1.0;  // logistic loss weight on z_s
  double alpha2 = 1.0;  // logistic loss weight on [z_s | x_a]

  void validate() const {
    auto positive = [](double v, const char* name) {
      if (!(v > 0.0) || !std::isfinite(v))
        throw ParameterError(detail::concat(name, " must be finite and > 0, got ", v));
    };
    positive(lambda, "lambda");
    positive(rho, "rho");
    positive(gamma, "gamma");
    positive(alpha1, "alpha1");
    positive(alpha2, "alpha2");
  }
};

}  // namespace opid
