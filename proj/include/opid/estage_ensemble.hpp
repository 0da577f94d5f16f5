#pragma once

// Ensemble expanding-stage variant: one logistic model on z_s, one on
// z_bar = [z_s | x_a], blended with a weight pair chosen by k-fold accuracy.

#include "opid/core.hpp"
#include "opid/cv.hpp"
#include "opid/estage_unified.hpp"
#include "opid/logistic.hpp"

#include <array>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

namespace opid {

/// How the two per-class outputs are blended at test time.
enum class Combination {
  Probability,  // w1 * sigma(z_s v_s) + w2 * sigma(z_bar v_bar)
  Score,        // same blend on raw decision values
};

struct EnsembleModel {
  LogisticModel f_s;
  LogisticModel f_bar;
  double w1 = 0.5;
  double w2 = 0.5;
  std::vector<double> cv_scores;  // accuracy per grid point, w1 = 0, 0.1, ..., 1
};

inline constexpr int kEnsembleGridSize = 11;

inline double ensemble_grid_w1(int i) { return static_cast<double>(i) / 10.0; }

namespace detail {

inline Matrix blend(const LogisticModel& fs, const LogisticModel& fb, const Matrix& zs,
                    const Matrix& zb, double w1, double w2, Combination how) {
  if (how == Combination::Probability) return w1 * fs.probabilities(zs) + w2 * fb.probabilities(zb);
  return w1 * fs.decision(zs) + w2 * fb.decision(zb);
}

}  // namespace detail

inline EnsembleModel train_ensemble(const StackedTrainSet& data, double alpha1, double alpha2,
                                    Index folds = 5, Combination how = Combination::Probability,
                                    const LogisticOptions& opt = {}) {
  detail::check_stacked(data);
  const Index n = data.rows();
  if (folds < 2 || folds > n)
    throw ParameterError(detail::concat("need 2 <= folds <= n, got folds=", folds, " n=", n));

  EnsembleModel m;
  m.f_s = train_ovr(data.z_s, data.y, alpha1, opt);
  m.f_bar = train_ovr(data.z_bar, data.y, alpha2, opt);

  std::array<double, kEnsembleGridSize> score{};
  for (const Fold& fold : make_folds(n, folds)) {
    const StackedTrainSet tr = data.select_rows(fold.train);
    const StackedTrainSet te = data.select_rows(fold.test);
    const LogisticModel fs = train_ovr(tr.z_s, tr.y, alpha1, opt);
    const LogisticModel fb = train_ovr(tr.z_bar, tr.y, alpha2, opt);
    const auto truth = te.y.labels();
    for (int i = 0; i < kEnsembleGridSize; ++i) {
      const double w1 = ensemble_grid_w1(i);
      score[static_cast<std::size_t>(i)] +=
          accuracy(argmax_decode(detail::blend(fs, fb, te.z_s, te.z_bar, w1, 1.0 - w1, how)), truth);
    }
  }

  // Scanning from w1 = 0 upward keeps the richer model on ties.
  int best = 0;
  for (int i = 0; i < kEnsembleGridSize; ++i) {
    score[static_cast<std::size_t>(i)] /= static_cast<double>(folds);
    if (score[static_cast<std::size_t>(i)] > score[static_cast<std::size_t>(best)]) best = i;
  }
  m.cv_scores.assign(score.begin(), score.end());
  m.w1 = ensemble_grid_w1(best);
  m.w2 = 1.0 - m.w1;
  return m;
}

inline Matrix ensemble_scores(const StackedTrainSet& z, const EnsembleModel& m,
                              Combination how = Combination::Probability) {
  return detail::blend(m.f_s, m.f_bar, z.z_s, z.z_bar, m.w1, m.w2, how);
}

inline std::vector<Index> predict_ensemble(const Batch& test, const CStageModel& cmodel,
                                           const EnsembleModel& m,
                                           Combination how = Combination::Probability) {
  return argmax_decode(ensemble_scores(build_stacked(test, cmodel), m, how));
}

// Serialization ------------------------------------------------------------

namespace detail {

inline void write_logistic(std::ostream& os, const char* key, const LogisticModel& f) {
  os << key << ' ' << f.coef.rows() << ' ' << f.coef.cols() << ' '
     << (f.constant_class ? *f.constant_class : Index{-1}) << '\n';
  write_matrix(os, f.coef);
}

inline LogisticModel read_logistic(std::istream& is, const char* key, Index rows, Index cols) {
  expect_key(is, key);
  Index r = 0, c = 0, k = 0;
  if (!(is >> r >> c >> k) || r != rows || c != cols)
    throw IoError(std::string("bad shape for ") + key);
  LogisticModel f;
  f.coef = read_matrix(is, r, c);
  if (k >= 0) f.constant_class = k;
  return f;
}

}  // namespace detail

inline void save_ensemble_model(std::ostream& os, const EnsembleModel& m, const FeatureSchema& s) {
  os << "opid-ensemble-model 1\n";
  detail::write_schema(os, s);
  detail::write_logistic(os, "f_s", m.f_s);
  detail::write_logistic(os, "f_bar", m.f_bar);
  os << "w1 " << detail::hexfloat(m.w1) << '\n';
  os << "w2 " << detail::hexfloat(m.w2) << '\n';
  if (!os) throw IoError("failed writing ensemble model");
}

inline EnsembleModel load_ensemble_model(std::istream& is, FeatureSchema* schema_out = nullptr) {
  std::string magic;
  int version = 0;
  if (!(is >> magic >> version) || magic != "opid-ensemble-model" || version != 1)
    throw IoError("not an ensemble model");
  const FeatureSchema s = detail::read_schema(is);
  EnsembleModel m;
  m.f_s = detail::read_logistic(is, "f_s", s.c, s.c);
  m.f_bar = detail::read_logistic(is, "f_bar", s.c + s.d_a, s.c);
  m.w1 = detail::read_double_field(is, "w1");
  m.w2 = detail::read_double_field(is, "w2");
  if (schema_out) *schema_out = s;
  return m;
}

}  // namespace opid
