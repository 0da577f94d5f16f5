#pragma once

// Unified expanding-stage trainer.
//
// Learns V_s over z_s = x_s W_s and V_bar over z_bar = [z_s | x_a] jointly,
// with a pair of simplex weights that rescale the two ridge penalties:
//
//   f(V, w) = ||z_s V_s + z_bar V_bar - Y||^2
//             + gamma * ( ||V_s||^2 / (c w1) + ||V_bar||^2 / ((d_a + c) w2) )
//
// Minimizing over V for fixed w is one SPD solve; minimizing over w for fixed
// V has a closed form. Alternating the two is monotone in f.

#include "opid/core.hpp"
#include "opid/cstage.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

namespace opid {

struct StackedTrainSet {
  Matrix z_s;    // n x c
  Matrix z_bar;  // n x (c + d_a), first c columns equal z_s
  LabelMatrix y;

  Index rows() const { return z_s.rows(); }

  StackedTrainSet select_rows(const std::vector<Index>& idx) const {
    StackedTrainSet out;
    out.z_s.resize(static_cast<Index>(idx.size()), z_s.cols());
    out.z_bar.resize(static_cast<Index>(idx.size()), z_bar.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      out.z_s.row(static_cast<Index>(i)) = z_s.row(idx[i]);
      out.z_bar.row(static_cast<Index>(i)) = z_bar.row(idx[i]);
    }
    out.y = y.select_rows(idx);
    return out;
  }
};

inline constexpr double kWeightFloor = 1e-8;

/// Builds z_s and z_bar for an expanding-stage batch. Labels are copied when
/// present; test batches may carry an empty label matrix.
inline StackedTrainSet build_stacked(const Batch& batch, const CStageModel& cmodel) {
  if (batch.stage != Stage::Expand) throw SchemaError("build_stacked needs an E-stage batch");
  if (batch.x_a.rows() != batch.x_s.rows())
    throw SchemaError("x_s and x_a row counts differ");
  StackedTrainSet out;
  out.z_s = compress(batch.x_s, cmodel);
  out.z_bar.resize(out.z_s.rows(), out.z_s.cols() + batch.x_a.cols());
  out.z_bar << out.z_s, batch.x_a;
  out.y = batch.y;
  return out;
}

namespace detail {

inline Index augmented_width(const StackedTrainSet& d) { return d.z_bar.cols() - d.z_s.cols(); }

inline void check_stacked(const StackedTrainSet& d) {
  if (d.rows() < 1) throw SchemaError("stacked training set is empty");
  if (d.z_bar.rows() != d.rows() || d.y.rows() != d.rows())
    throw SchemaError("stacked training set row counts disagree");
  if (d.z_bar.cols() < d.z_s.cols()) throw SchemaError("z_bar narrower than z_s");
  if (d.y.classes() != d.z_s.cols())
    throw SchemaError("z_s width must equal the class count");
}

}  // namespace detail

/// Exact minimizer of f over (V_s, V_bar) with the weights held fixed, for an
/// arbitrary n x c target.
inline std::pair<Matrix, Matrix> solve_coefficients(const Matrix& z_s, const Matrix& z_bar,
                                                    const Matrix& target, double w1, double w2,
                                                    double gamma) {
  if (z_bar.rows() != z_s.rows() || target.rows() != z_s.rows())
    throw SchemaError("coefficient system row counts disagree");
  if (!(gamma > 0.0)) throw ParameterError(detail::concat("gamma must be > 0, got ", gamma));
  if (!(w1 >= 0.0) || !(w2 >= 0.0)) throw ParameterError("weights must be non-negative");
  w1 = std::clamp(w1, kWeightFloor, 1.0 - kWeightFloor);
  w2 = std::clamp(w2, kWeightFloor, 1.0 - kWeightFloor);

  const Index c = z_s.cols();
  const Index wb = z_bar.cols();
  Matrix k(z_s.rows(), c + wb);
  k << z_s, z_bar;

  Matrix gram = k.transpose() * k;
  gram.diagonal().head(c).array() += gamma / (static_cast<double>(c) * w1);
  gram.diagonal().tail(wb).array() += gamma / (static_cast<double>(wb) * w2);
  detail::symmetrize(gram);

  Eigen::LLT<Matrix> llt(gram);
  if (llt.info() != Eigen::Success) throw NumericError("coefficient system is not positive definite");
  const Matrix v = llt.solve(k.transpose() * target);
  if (!v.allFinite()) throw NumericError("non-finite coefficient solution");
  return {v.topRows(c), v.bottomRows(wb)};
}

inline std::pair<Matrix, Matrix> update_coefficients(const StackedTrainSet& data, double w1,
                                                     double w2, double gamma) {
  detail::check_stacked(data);
  return solve_coefficients(data.z_s, data.z_bar, data.y.one_hot(), w1, w2, gamma);
}

/// Closed-form weights minimizing the penalty for fixed coefficients.
inline std::pair<double, double> update_weights(const Matrix& v_s, const Matrix& v_bar,
                                                const FeatureSchema& schema) {
  const double r1 = v_s.norm() / std::sqrt(static_cast<double>(schema.c));
  const double r2 = v_bar.norm() / std::sqrt(static_cast<double>(schema.d_a + schema.c));
  const double sum = r1 + r2;
  if (!(sum > 0.0)) return {0.5, 0.5};
  const double w1 = r1 / sum;
  return {w1, 1.0 - w1};
}

/// Penalty term for given norms and weights; infinite when a zero weight
/// meets a nonzero block.
inline double weight_penalty(double norm_s, double norm_bar, const FeatureSchema& schema,
                             double w1, double w2) {
  auto term = [](double nrm, double dim, double w) {
    if (nrm == 0.0) return 0.0;
    if (w <= 0.0) return std::numeric_limits<double>::infinity();
    return nrm * nrm / (dim * w);
  };
  return term(norm_s, static_cast<double>(schema.c), w1) +
         term(norm_bar, static_cast<double>(schema.d_a + schema.c), w2);
}

inline double objective_value(const Matrix& z_s, const Matrix& z_bar, const Matrix& target,
                              const EStageModel& model, double gamma) {
  const FeatureSchema schema{0, 1, z_bar.cols() - z_s.cols(), z_s.cols()};
  const double pen =
      weight_penalty(model.v_s.norm(), model.v_bar.norm(), schema, model.w1, model.w2);
  if (!std::isfinite(pen))
    throw NumericError("zero weight paired with a nonzero coefficient block");
  const Matrix resid = z_s * model.v_s + z_bar * model.v_bar - target;
  return resid.squaredNorm() + gamma * pen;
}

inline double objective_value(const StackedTrainSet& data, const EStageModel& model,
                              double gamma) {
  detail::check_stacked(data);
  return objective_value(data.z_s, data.z_bar, data.y.one_hot(), model, gamma);
}

struct UnifiedOptions {
  double tol = 1e-6;
  int max_iter = 100;
};

struct UnifiedTrace {
  EStageModel model;
  std::vector<double> objective;  // value after each full iteration
  int iterations = 0;
  bool converged = false;
};

inline UnifiedTrace train_unified_traced(const StackedTrainSet& data, double gamma,
                                         UnifiedOptions opt = {}) {
  detail::check_stacked(data);
  if (opt.max_iter < 1) throw ParameterError("max_iter must be >= 1");
  const FeatureSchema schema{0, 1, detail::augmented_width(data), data.z_s.cols()};

  UnifiedTrace tr;
  double w1 = 0.5;
  double w2 = 0.5;
  for (int it = 0; it < opt.max_iter; ++it) {
    auto [v_s, v_bar] = update_coefficients(data, w1, w2, gamma);
    std::tie(w1, w2) = update_weights(v_s, v_bar, schema);
    tr.model = EStageModel{std::move(v_s), std::move(v_bar), w1, w2};
    const double f = objective_value(data, tr.model, gamma);
    tr.iterations = it + 1;
    if (!tr.objective.empty()) {
      const double prev = tr.objective.back();
      tr.objective.push_back(f);
      const double scale = std::max(std::abs(prev), std::numeric_limits<double>::min());
      if ((prev - f) / scale < opt.tol) {
        tr.converged = true;
        break;
      }
    } else {
      tr.objective.push_back(f);
    }
  }
  return tr;
}

inline EStageModel train_unified(const StackedTrainSet& data, double gamma,
                                 UnifiedOptions opt = {}) {
  return train_unified_traced(data, gamma, opt).model;
}

/// Coefficients in the sqrt(w)-scaled parameterization, i.e. the predictor is
/// sqrt(w1) z_s U_s + sqrt(w2) z_bar U_bar. A zero weight maps its block to 0.
inline std::pair<Matrix, Matrix> scaled_coefficients(const EStageModel& m) {
  auto scale = [](const Matrix& v, double w) {
    return w > 0.0 ? Matrix(v / std::sqrt(w)) : Matrix(Matrix::Zero(v.rows(), v.cols()));
  };
  return {scale(m.v_s, m.w1), scale(m.v_bar, m.w2)};
}

inline Matrix unified_scores(const StackedTrainSet& z, const EStageModel& m) {
  const auto [u_s, u_bar] = scaled_coefficients(m);
  if (z.z_s.cols() != u_s.rows() || z.z_bar.cols() != u_bar.rows())
    throw SchemaError("stacked representation does not match the model");
  return std::sqrt(m.w1) * (z.z_s * u_s) + std::sqrt(m.w2) * (z.z_bar * u_bar);
}

inline std::vector<Index> predict_unified(const Batch& test, const CStageModel& cmodel,
                                          const EStageModel& emodel) {
  return argmax_decode(unified_scores(build_stacked(test, cmodel), emodel));
}

// Serialization ------------------------------------------------------------

inline void save_estage_model(std::ostream& os, const EStageModel& m, const FeatureSchema& s) {
  os << "opid-estage-model 1\n";
  detail::write_schema(os, s);
  os << "v_s " << m.v_s.rows() << ' ' << m.v_s.cols() << '\n';
  detail::write_matrix(os, m.v_s);
  os << "v_bar " << m.v_bar.rows() << ' ' << m.v_bar.cols() << '\n';
  detail::write_matrix(os, m.v_bar);
  os << "w1 " << detail::hexfloat(m.w1) << '\n';
  os << "w2 " << detail::hexfloat(m.w2) << '\n';
  if (!os) throw IoError("failed writing expanding-stage model");
}

inline EStageModel load_estage_model(std::istream& is, FeatureSchema* schema_out = nullptr) {
  std::string magic;
  int version = 0;
  if (!(is >> magic >> version) || magic != "opid-estage-model" || version != 1)
    throw IoError("not an expanding-stage model");
  const FeatureSchema s = detail::read_schema(is);
  auto read_block = [&](const char* key, Index rows, Index cols) {
    detail::expect_key(is, key);
    Index r = 0, c = 0;
    if (!(is >> r >> c) || r != rows || c != cols)
      throw IoError(std::string("bad shape for ") + key);
    return detail::read_matrix(is, r, c);
  };
  EStageModel m;
  m.v_s = read_block("v_s", s.c, s.c);
  m.v_bar = read_block("v_bar", s.c + s.d_a, s.c);
  m.w1 = detail::read_double_field(is, "w1");
  m.w2 = detail::read_double_field(is, "w2");
  if (schema_out) *schema_out = s;
  return m;
}

}  // namespace opid
