#pragma once

// End-to-end experiment runner: one compressing-stage pass, repeated random
// halving of the expanding-stage data, training of every requested method,
// and aggregation into a table with paired significance marks.

#include "opid/core.hpp"
#include "opid/cstage.hpp"
#include "opid/cv.hpp"
#include "opid/estage_ensemble.hpp"
#include "opid/estage_unified.hpp"
#include "opid/ingest.hpp"
#include "opid/logistic.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

namespace opid {

enum class Method { OPID, OPIDe, BaseAll, BaseS, BaseA };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::OPID: return "OPID";
    case Method::OPIDe: return "OPIDe";
    case Method::BaseAll: return "BASE_ALL";
    case Method::BaseS: return "BASE_S";
    case Method::BaseA: return "BASE_A";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  for (Method m : {Method::OPID, Method::OPIDe, Method::BaseAll, Method::BaseS, Method::BaseA})
    if (s == to_string(m)) return m;
  throw ParameterError("unknown method '" + s + "'");
}

inline const std::vector<Method>& all_methods() {
  static const std::vector<Method> v = {Method::OPID, Method::OPIDe, Method::BaseAll,
                                        Method::BaseS, Method::BaseA};
  return v;
}

// Compressing-stage pass ----------------------------------------------------

/// Absorbs every batch exactly once and returns one model per (lambda, rho)
/// pair. All accumulators share the single pass over the stream.
template <typename NextBatch>
std::vector<CStageModel> run_cstage_pass_grid(NextBatch&& next, const FeatureSchema& schema,
                                              const std::vector<std::pair<double, double>>& lambda_rho,
                                              AccumulationMode mode) {
  std::vector<CStageStats> stats;
  stats.reserve(lambda_rho.size());
  for (const auto& [lambda, rho] : lambda_rho) stats.push_back(init_stats(schema, rho, lambda, mode));
  while (std::optional<Batch> b = next())
    for (auto& s : stats) absorb_batch(s, *b);
  std::vector<CStageModel> out;
  out.reserve(stats.size());
  for (const auto& s : stats) out.push_back(solve_model(s));
  return out;
}

inline CStageModel run_cstage_pass(const std::vector<Batch>& stream, const FeatureSchema& schema,
                                   const Hyperparams& h, AccumulationMode mode) {
  std::size_t i = 0;
  auto next = [&]() -> std::optional<Batch> {
    if (i >= stream.size()) return std::nullopt;
    return stream[i++];
  };
  return run_cstage_pass_grid(next, schema, {{h.lambda, h.rho}}, mode).front();
}

inline CStageModel run_cstage_pass(StreamReader& reader, const Hyperparams& h,
                                   AccumulationMode mode) {
  return run_cstage_pass_grid([&] { return reader.next(); }, reader.manifest().schema,
                              {{h.lambda, h.rho}}, mode)
      .front();
}

// Significance --------------------------------------------------------------

enum class Significance { Better, Tie, Worse };

inline const char* to_string(Significance s) {
  switch (s) {
    case Significance::Better: return "better";
    case Significance::Tie: return "tie";
    case Significance::Worse: return "worse";
  }
  return "?";
}

/// Two-sided paired t-test of a against b at the given level.
inline Significance paired_t_test(const std::vector<double>& a, const std::vector<double>& b,
                                  double level = 0.05) {
  if (a.size() != b.size()) throw ParameterError("paired samples differ in length");
  if (a.size() < 2) throw ParameterError("paired t-test needs at least two pairs");
  const auto n = static_cast<double>(a.size());
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  const double mean = std::accumulate(d.begin(), d.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : d) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  const auto direction = mean > 0.0 ? Significance::Better : Significance::Worse;

  if (sd == 0.0) return mean == 0.0 ? Significance::Tie : direction;
  const double t = mean / (sd / std::sqrt(n));
  const boost::math::students_t dist(n - 1.0);
  const double p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
  return p < level ? direction : Significance::Tie;
}

// Results -------------------------------------------------------------------

struct MethodResult {
  Method method = Method::OPID;
  std::vector<double> accuracies;  // one per completed repeat
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for a single repeat
};

struct ResultTable {
  std::vector<MethodResult> rows;
  std::vector<int> repeat_ids;  // original index of each completed repeat
  // marks[i][j]: row i compared with row j; empty on the diagonal or with
  // fewer than two repeats.
  std::vector<std::vector<std::optional<Significance>>> marks;
  std::vector<std::string> aborted;  // one reason per aborted repeat

  /// Fills mean, std and marks from the per-repeat accuracies.
  void finalize() {
    for (auto& r : rows) {
      const auto n = static_cast<double>(r.accuracies.size());
      r.mean = r.accuracies.empty() ? 0.0
                                    : std::accumulate(r.accuracies.begin(), r.accuracies.end(), 0.0) / n;
      double ss = 0.0;
      for (double x : r.accuracies) ss += (x - r.mean) * (x - r.mean);
      r.std = r.accuracies.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    }
    marks.assign(rows.size(), std::vector<std::optional<Significance>>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < rows.size(); ++j)
        if (i != j && rows[i].accuracies.size() >= 2)
          marks[i][j] = paired_t_test(rows[i].accuracies, rows[j].accuracies);
  }

  const MethodResult* find(Method m) const {
    for (const auto& r : rows)
      if (r.method == m) return &r;
    return nullptr;
  }
};

// Experiment ----------------------------------------------------------------

struct ExperimentSpec {
  std::variant<std::filesystem::path, SynthConfig> source = SynthConfig{};
  std::vector<Method> methods = all_methods();
  std::vector<double> lambdas{1.0};
  std::vector<double> rhos{0.1};
  std::vector<double> gammas{1.0};
  std::vector<double> alphas{1.0};
  int repeats = 20;
  unsigned long long seed = 1;
  std::optional<AccumulationMode> mode;
  Index folds = 5;

  void validate() const {
    if (repeats < 1) throw ParameterError("repeats must be >= 1");
    if (folds < 2) throw ParameterError("folds must be >= 2");
    for (const auto* g : {&lambdas, &rhos, &gammas, &alphas})
      if (g->empty()) throw ParameterError("hyperparameter grids must be non-empty");
    for (double v : rhos) if (!(v > 0.0)) throw ParameterError("rho must be > 0");
    for (double v : lambdas) if (!(v >= 0.0)) throw ParameterError("lambda must be >= 0");
    for (double v : gammas) if (!(v > 0.0)) throw ParameterError("gamma must be > 0");
    for (double v : alphas) if (!(v > 0.0)) throw ParameterError("alpha must be > 0");
  }
};

namespace detail {

struct LoadedData {
  FeatureSchema schema;
  std::vector<CStageModel> cmodels;  // one per (lambda, rho) pair
  Batch pool;                        // expanding-stage train and test rows, pooled
};

inline Batch concat_rows(const Batch& a, const Batch& b) {
  Matrix xs(a.rows() + b.rows(), a.x_s.cols());
  xs << a.x_s, b.x_s;
  Matrix xa(a.rows() + b.rows(), a.x_a.cols());
  xa << a.x_a, b.x_a;
  Matrix y(a.rows() + b.rows(), a.y.classes());
  y << a.y.one_hot(), b.y.one_hot();
  return Batch::expand(std::move(xs), std::move(xa), LabelMatrix::from_one_hot(std::move(y)));
}

inline std::vector<std::pair<double, double>> lambda_rho_grid(const ExperimentSpec& spec) {
  std::vector<std::pair<double, double>> out;
  for (double l : spec.lambdas)
    for (double r : spec.rhos) out.emplace_back(l, r);
  return out;
}

inline LoadedData load(const ExperimentSpec& spec) {
  LoadedData d;
  const auto grid = lambda_rho_grid(spec);
  if (const auto* path = std::get_if<std::filesystem::path>(&spec.source)) {
    StreamReader reader(parse_manifest(*path));
    d.schema = reader.manifest().schema;
    const auto mode = spec.mode.value_or(default_mode(d.schema));
    d.cmodels = run_cstage_pass_grid([&] { return reader.next(); }, d.schema, grid, mode);
    d.pool = concat_rows(reader.estage_train(), reader.estage_test());
  } else {
    const auto st = generate_synthetic(std::get<SynthConfig>(spec.source));
    d.schema = st.schema;
    const auto mode = spec.mode.value_or(default_mode(d.schema));
    std::size_t i = 0;
    auto next = [&]() -> std::optional<Batch> {
      if (i >= st.cstage.size()) return std::nullopt;
      return st.cstage[i++];
    };
    d.cmodels = run_cstage_pass_grid(next, d.schema, grid, mode);
    d.pool = concat_rows(st.estage_train, st.estage_test);
  }
  return d;
}

inline Matrix rows_of(const Matrix& x, const std::vector<Index>& idx) {
  Matrix out(static_cast<Index>(idx.size()), x.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Index>(i)) = x.row(idx[i]);
  return out;
}

inline std::vector<Index> iota_rows(Index n) {
  std::vector<Index> v(static_cast<std::size_t>(n));
  std::iota(v.begin(), v.end(), Index{0});
  return v;
}

// Trains one method on `train` and returns test accuracy. Hyperparameter
// grids with more than one point are resolved by k-fold CV on `train`.
inline double evaluate_method(Method method, const ExperimentSpec& spec, const LoadedData& data,
                              const Batch& train, const Batch& test) {
  const auto labels = train.y.labels();
  const auto truth = test.y.labels();
  const auto all_rows = iota_rows(train.rows());

  switch (method) {
    case Method::OPID: {
      std::vector<std::pair<std::size_t, double>> grid;
      for (std::size_t k = 0; k < data.cmodels.size(); ++k)
        for (double g : spec.gammas) grid.emplace_back(k, g);
      std::size_t best = 0;
      if (grid.size() > 1) {
        best = k_fold_cv(grid, labels, spec.folds, [&](const auto& p, const auto& tr, const auto& te) {
                 const auto& cm = data.cmodels[p.first];
                 const EStageModel em = train_unified(build_stacked(train.select_rows(tr), cm), p.second);
                 return predict_unified(train.select_rows(te), cm, em);
               }).best;
      }
      const auto& cm = data.cmodels[grid[best].first];
      const EStageModel em = train_unified(build_stacked(train, cm), grid[best].second);
      return accuracy(predict_unified(test, cm, em), truth);
    }
    case Method::OPIDe: {
      std::vector<std::pair<std::size_t, double>> grid;
      for (std::size_t k = 0; k < data.cmodels.size(); ++k)
        for (double a : spec.alphas) grid.emplace_back(k, a);
      std::size_t best = 0;
      if (grid.size() > 1) {
        best = k_fold_cv(grid, labels, spec.folds, [&](const auto& p, const auto& tr, const auto& te) {
                 const auto& cm = data.cmodels[p.first];
                 const auto sub = train.select_rows(tr);
                 const EnsembleModel em = train_ensemble(build_stacked(sub, cm), p.second, p.second,
                                                         std::min<Index>(spec.folds, sub.rows()));
                 return predict_ensemble(train.select_rows(te), cm, em);
               }).best;
      }
      const auto& cm = data.cmodels[grid[best].first];
      const EnsembleModel em =
          train_ensemble(build_stacked(train, cm), grid[best].second, grid[best].second, spec.folds);
      return accuracy(predict_ensemble(test, cm, em), truth);
    }
    case Method::BaseAll:
    case Method::BaseS:
    case Method::BaseA: {
      auto features = [&](const Batch& b) -> Matrix {
        if (method == Method::BaseS) return b.x_s;
        if (method == Method::BaseA) return b.x_a;
        return b.estage_features();
      };
      const Matrix x = features(train);
      if (x.cols() == 0) throw SchemaError(std::string(to_string(method)) + " has no input features");
      std::size_t best = 0;
      if (spec.alphas.size() > 1) {
        best = k_fold_cv(spec.alphas, labels, spec.folds, [&](double a, const auto& tr, const auto& te) {
                 const LogisticModel f = train_ovr(rows_of(x, tr), train.y.select_rows(tr), a);
                 return f.predict(rows_of(x, te));
               }).best;
      }
      const LogisticModel f = train_ovr(x, train.y, spec.alphas[best]);
      return accuracy(f.predict(features(test)), truth);
    }
  }
  throw ParameterError("unhandled method");
}

}  // namespace detail

/// Row split for repeat r: a seeded shuffle, first half trains, rest tests.
inline std::pair<std::vector<Index>, std::vector<Index>> split_halves(Index n,
                                                                      unsigned long long seed,
                                                                      int repeat) {
  std::vector<Index> idx = detail::iota_rows(n);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(repeat)};
  std::mt19937_64 rng(seq);
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto half = static_cast<std::ptrdiff_t>(n / 2);
  return {std::vector<Index>(idx.begin(), idx.begin() + half),
          std::vector<Index>(idx.begin() + half, idx.end())};
}

inline ResultTable run_experiment(const ExperimentSpec& spec) {
  spec.validate();
  const detail::LoadedData data = detail::load(spec);
  if (data.pool.rows() < 2 * spec.folds)
    throw ParameterError("expanding-stage data too small for the requested folds");

  ResultTable table;
  for (Method m : spec.methods) table.rows.push_back(MethodResult{m, {}, 0.0, 0.0});

  for (int r = 0; r < spec.repeats; ++r) {
    const auto [tr, te] = split_halves(data.pool.rows(), spec.seed, r);
    const Batch train = data.pool.select_rows(tr);
    const Batch test = data.pool.select_rows(te);
    std::vector<double> acc;
    try {
      for (Method m : spec.methods) acc.push_back(detail::evaluate_method(m, spec, data, train, test));
    } catch (const std::exception& e) {
      table.aborted.push_back(detail::concat("repeat ", r, ": ", e.what()));
      continue;
    }
    table.repeat_ids.push_back(r);
    for (std::size_t i = 0; i < acc.size(); ++i) table.rows[i].accuracies.push_back(acc[i]);
  }
  table.finalize();
  return table;
}

// Reports -------------------------------------------------------------------

inline std::string format_table(const ResultTable& t) {
  std::ostringstream os;
  char buf[64];
  os << "method      accuracy (std)     ";
  for (const auto& r : t.rows) {
    std::snprintf(buf, sizeof buf, "%-10s", to_string(r.method));
    os << buf;
  }
  os << '\n';
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    std::snprintf(buf, sizeof buf, "%-10s  %.4f (%.4f)    ", to_string(r.method), r.mean, r.std);
    os << buf;
    for (std::size_t j = 0; j < t.rows.size(); ++j) {
      const auto& mk = t.marks.empty() ? std::optional<Significance>{} : t.marks[i][j];
      std::snprintf(buf, sizeof buf, "%-10s", i == j ? "-" : mk ? to_string(*mk) : "n/a");
      os << buf;
    }
    os << '\n';
  }
  os << "completed repeats: " << t.repeat_ids.size() << '\n';
  for (const auto& a : t.aborted) os << "aborted " << a << '\n';
  return os.str();
}

/// Writes report.txt (human table) and records.csv (method,repeat,accuracy).
inline void emit_report(const ResultTable& t, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "report.txt");
    if (!out) throw IoError("cannot write " + (dir / "report.txt").string());
    out << format_table(t);
    if (!out) throw IoError("failed writing report.txt");
  }
  std::ofstream out(dir / "records.csv");
  if (!out) throw IoError("cannot write " + (dir / "records.csv").string());
  out << "method,repeat,accuracy\n";
  char buf[40];
  for (const auto& r : t.rows)
    for (std::size_t k = 0; k < r.accuracies.size(); ++k) {
      std::snprintf(buf, sizeof buf, "%.17g", r.accuracies[k]);
      out << to_string(r.method) << ',' << t.repeat_ids[k] << ',' << buf << '\n';
    }
  if (!out) throw IoError("failed writing records.csv");
}

/// Rebuilds a table (means, std, marks) from a records.csv file.
inline ResultTable parse_records(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw IoError("cannot open " + p.string());
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != "method,repeat,accuracy")
    throw IoError(p.string() + ": missing records header");
  ResultTable t;
  std::map<Method, std::size_t> row_of;
  std::map<Method, std::vector<int>> repeats_of;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split(line, ',');
    if (f.size() != 3) throw IoError(detail::concat(p.string(), ":", lineno, ": expected 3 fields"));
    const Method m = parse_method(f[0]);
    if (!row_of.count(m)) {
      row_of[m] = t.rows.size();
      t.rows.push_back(MethodResult{m, {}, 0.0, 0.0});
    }
    repeats_of[m].push_back(static_cast<int>(detail::parse_index(f[1], "repeat")));
    t.rows[row_of[m]].accuracies.push_back(detail::parse_double(f[2]));
  }
  if (!t.rows.empty()) {
    t.repeat_ids = repeats_of[t.rows.front().method];
    for (const auto& r : t.rows)
      if (repeats_of[r.method] != t.repeat_ids)
        throw IoError(p.string() + ": methods cover different repeats");
  }
  t.finalize();
  return t;
}

}  // namespace opid
