#pragma once

#include "opid/core.hpp"

#include <utility>
#include <vector>

namespace opid {

struct Fold {
  std::vector<Index> train;
  std::vector<Index> test;
};

/// Row j goes to test fold j mod k. Callers shuffle beforehand if needed.
inline std::vector<Fold> make_folds(Index n, Index k) {
  if (k < 2) throw ParameterError(detail::concat("fold count must be >= 2, got ", k));
  if (n < k) throw ParameterError(detail::concat("fold count ", k, " exceeds row count ", n));
  std::vector<Fold> folds(static_cast<std::size_t>(k));
  for (Index j = 0; j < n; ++j)
    for (Index f = 0; f < k; ++f) {
      auto& fold = folds[static_cast<std::size_t>(f)];
      (j % k == f ? fold.test : fold.train).push_back(j);
    }
  return folds;
}

inline double accuracy(const std::vector<Index>& predicted, const std::vector<Index>& truth) {
  if (predicted.size() != truth.size()) throw SchemaError("prediction count differs from truth");
  if (truth.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hit += predicted[i] == truth[i];
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

struct CvResult {
  std::size_t best = 0;
  std::vector<double> scores;  // mean fold accuracy per grid point
};

/// Exhaustive grid search by k-fold accuracy. `fit_predict(point, train, test)`
/// trains on the train rows and returns predictions for the test rows; the
/// first grid point attaining the best mean score wins.
template <typename Point, typename FitPredict>
CvResult k_fold_cv(const std::vector<Point>& grid, const std::vector<Index>& labels, Index k,
                   FitPredict&& fit_predict) {
  if (grid.empty()) throw ParameterError("empty hyperparameter grid");
  const auto folds = make_folds(static_cast<Index>(labels.size()), k);
  CvResult r;
  r.scores.assign(grid.size(), 0.0);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double sum = 0.0;
    for (const auto& fold : folds) {
      const auto pred = fit_predict(grid[g], fold.train, fold.test);
      std::vector<Index> truth;
      truth.reserve(fold.test.size());
      for (Index j : fold.test) truth.push_back(labels[static_cast<std::size_t>(j)]);
      sum += accuracy(pred, truth);
    }
    r.scores[g] = sum / static_cast<double>(folds.size());
    if (r.scores[g] > r.scores[r.best]) r.best = g;
  }
  return r;
}

}  // namespace opid
