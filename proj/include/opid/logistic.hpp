#pragma once

// L2-regularized logistic regression without intercept:
//
//   g(v) = 0.5 v^T v + alpha * sum_j log(1 + exp(-y_j x_j v)),  y_j in {-1, +1}
//
// Strictly convex, so a damped Newton method reaches any gradient tolerance
// in a handful of iterations for the widths used here.

#include "opid/core.hpp"

#include <cmath>
#include <optional>
#include <vector>

namespace opid {

namespace detail {

// log(1 + exp(t)) without overflow.
inline double softplus(double t) {
  return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
}

}  // namespace detail

inline double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

inline double logistic_objective(const Matrix& x, const Vector& y_pm, double alpha,
                                 const Vector& v) {
  const Vector margin = (y_pm.array() * (x * v).array()).matrix();
  double loss = 0.0;
  for (Index j = 0; j < margin.size(); ++j) loss += detail::softplus(-margin(j));
  return 0.5 * v.squaredNorm() + alpha * loss;
}

inline Vector logistic_gradient(const Matrix& x, const Vector& y_pm, double alpha,
                                const Vector& v) {
  const Vector margin = (y_pm.array() * (x * v).array()).matrix();
  Vector coef(margin.size());
  for (Index j = 0; j < margin.size(); ++j) coef(j) = -y_pm(j) * sigmoid(-margin(j));
  return v + alpha * (x.transpose() * coef);
}

struct LogisticOptions {
  double tol = 1e-6;
  int max_iter = 500;
  std::optional<Vector> initial;
};

inline Vector train_logistic(const Matrix& x, const Vector& y_pm, double alpha,
                             const LogisticOptions& opt = {}) {
  if (x.rows() < 1) throw SchemaError("logistic regression needs at least one row");
  if (y_pm.size() != x.rows()) throw SchemaError("label vector length differs from row count");
  if (!(alpha > 0.0)) throw ParameterError(detail::concat("alpha must be > 0, got ", alpha));
  for (Index j = 0; j < y_pm.size(); ++j)
    if (y_pm(j) != 1.0 && y_pm(j) != -1.0) throw SchemaError("labels must be +1 or -1");

  const Index d = x.cols();
  Vector v = opt.initial ? *opt.initial : Vector::Zero(d);
  if (v.size() != d) throw SchemaError("initial point has the wrong width");

  double f = logistic_objective(x, y_pm, alpha, v);
  for (int it = 0; it < opt.max_iter; ++it) {
    const Vector margin = (y_pm.array() * (x * v).array()).matrix();
    Vector coef(margin.size());
    Vector curv(margin.size());
    for (Index j = 0; j < margin.size(); ++j) {
      const double p = sigmoid(-margin(j));
      coef(j) = -y_pm(j) * p;
      curv(j) = p * (1.0 - p);
    }
    const Vector grad = v + alpha * (x.transpose() * coef);
    if (grad.norm() <= opt.tol) return v;

    Matrix hess = x.transpose() * (curv.asDiagonal() * x);
    hess *= alpha;
    hess.diagonal().array() += 1.0;
    Eigen::LLT<Matrix> llt(hess);
    if (llt.info() != Eigen::Success) throw SolverError("logistic Hessian factorization failed");
    const Vector step = llt.solve(grad);

    // Armijo backtracking on the Newton direction.
    const double slope = grad.dot(step);
    double t = 1.0;
    Vector cand = v - step;
    double fc = logistic_objective(x, y_pm, alpha, cand);
    while (fc > f - 1e-4 * t * slope && t > 1e-12) {
      t *= 0.5;
      cand = v - t * step;
      fc = logistic_objective(x, y_pm, alpha, cand);
    }
    if (fc > f) {
      // Round-off floor: no representable decrease left.
      if (logistic_gradient(x, y_pm, alpha, v).norm() <= opt.tol) return v;
      throw SolverError("logistic line search stalled");
    }
    v = std::move(cand);
    f = fc;
  }
  if (logistic_gradient(x, y_pm, alpha, v).norm() <= opt.tol) return v;
  throw SolverError(detail::concat("logistic solver did not reach tolerance ", opt.tol,
                                   " within ", opt.max_iter, " iterations"));
}

/// One-vs-rest model: column l scores class l against the rest. A training
/// set containing a single class degenerates to a constant classifier.
struct LogisticModel {
  Matrix coef;  // d x c
  std::optional<Index> constant_class;

  Index classes() const { return coef.cols(); }

  Matrix decision(const Matrix& x) const {
    if (x.cols() != coef.rows())
      throw SchemaError(detail::concat("input width ", x.cols(), " differs from model width ",
                                       coef.rows()));
    if (constant_class) {
      Matrix s = Matrix::Constant(x.rows(), coef.cols(), -1.0);
      s.col(*constant_class).setConstant(1.0);
      return s;
    }
    return x * coef;
  }

  /// Per-class logistic probabilities, each in (0, 1) for finite scores
  /// (a constant classifier emits 1 for its class and 0 elsewhere).
  Matrix probabilities(const Matrix& x) const {
    if (constant_class) {
      Matrix p = Matrix::Zero(x.rows(), coef.cols());
      p.col(*constant_class).setOnes();
      return p;
    }
    return decision(x).unaryExpr([](double t) { return sigmoid(t); });
  }

  std::vector<Index> predict(const Matrix& x) const { return argmax_decode(decision(x)); }
};

inline LogisticModel train_ovr(const Matrix& x, const LabelMatrix& y, double alpha,
                               const LogisticOptions& opt = {}) {
  if (y.rows() != x.rows()) throw SchemaError("label rows differ from feature rows");
  const Index c = y.classes();
  if (c < 2) throw SchemaError("one-vs-rest needs at least two classes");

  LogisticModel m;
  m.coef = Matrix::Zero(x.cols(), c);
  const Vector counts = y.one_hot().colwise().sum().transpose();
  for (Index l = 0; l < c; ++l) {
    if (counts(l) == static_cast<double>(y.rows())) {
      m.constant_class = l;
      return m;
    }
  }
  for (Index l = 0; l < c; ++l) m.coef.col(l) = train_logistic(x, y.signed_column(l), alpha, opt);
  return m;
}

}  // namespace opid
