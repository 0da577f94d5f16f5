#pragma once

// Batch-file ingestion driven by a feature-evolution manifest, plus a seeded
// generator for synthetic evolving-feature streams.
//
// Batch files are delimiter-separated text: one instance per line, feature
// columns first, integer class label last.
//
// Manifest keys (one `key = value` per line, '#' starts a comment):
//
//   d_v, d_s, d_a, classes           partition widths and class count
//   cstage_batches                   comma-separated file list, in stream order
//   estage_train, estage_test        expanding-stage files
//   cstage_vanished, cstage_survived column ranges `begin:end` (half-open)
//   estage_survived, estage_augmented
//   delimiter                        optional, default ','
//   scaling                          optional, `none` (default) or `first_batch`
//
// Relative paths resolve against the manifest's directory.

#include "opid/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace opid {

struct ColumnRange {
  Index begin = 0;
  Index end = 0;  // exclusive
  Index width() const { return end - begin; }
  bool overlaps(const ColumnRange& o) const { return begin < o.end && o.begin < end; }
};

enum class Scaling { None, FirstBatch };

struct StreamManifest {
  FeatureSchema schema;
  std::vector<std::filesystem::path> cstage_batches;
  std::filesystem::path estage_train;
  std::filesystem::path estage_test;
  ColumnRange cstage_vanished;
  ColumnRange cstage_survived;
  ColumnRange estage_survived;
  ColumnRange estage_augmented;
  char delimiter = ',';
  Scaling scaling = Scaling::None;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char delim) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, delim)) out.push_back(trim(cur));
  if (!s.empty() && s.back() == delim) out.emplace_back();
  return out;
}

inline Index parse_index(const std::string& v, const std::string& what) {
  char* end = nullptr;
  const long long x = std::strtoll(v.c_str(), &end, 10);
  if (v.empty() || *end != '\0') throw SchemaError("invalid integer for " + what + ": '" + v + "'");
  return static_cast<Index>(x);
}

inline ColumnRange parse_range(const std::string& v, const std::string& key) {
  const auto colon = v.find(':');
  if (colon == std::string::npos) throw SchemaError(key + ": expected begin:end, got '" + v + "'");
  ColumnRange r{parse_index(trim(v.substr(0, colon)), key), parse_index(trim(v.substr(colon + 1)), key)};
  if (r.begin < 0 || r.end < r.begin) throw SchemaError(key + ": invalid range '" + v + "'");
  return r;
}

// Counts delimiter-separated fields on the first non-blank line.
inline Index peek_column_count(const std::filesystem::path& p, char delim) {
  std::ifstream in(p);
  if (!in) throw IoError("cannot open " + p.string());
  std::string line;
  while (std::getline(in, line))
    if (!trim(line).empty()) return static_cast<Index>(split(line, delim).size());
  throw IoError(p.string() + ": file is empty");
}

inline void check_stage_ranges(const char* stage, const ColumnRange& first, Index first_width,
                               const ColumnRange& second, Index second_width) {
  if (first.width() != first_width || second.width() != second_width)
    throw SchemaError(concat(stage, "-stage column ranges have widths ", first.width(), " and ",
                             second.width(), ", schema declares ", first_width, " and ",
                             second_width));
  if (first.overlaps(second)) throw SchemaError(concat(stage, "-stage column ranges overlap"));
  const Index total = first_width + second_width;
  if (std::max(first.end, second.end) > total)
    throw SchemaError(concat(stage, "-stage column ranges exceed the ", total, " feature columns"));
}

}  // namespace detail

inline StreamManifest parse_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());

  static const std::set<std::string> known = {
      "d_v",          "d_s",           "d_a",             "classes",
      "cstage_batches", "estage_train", "estage_test",     "cstage_vanished",
      "cstage_survived", "estage_survived", "estage_augmented", "delimiter",
      "scaling"};
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw SchemaError(detail::concat(path.string(), ":", lineno, ": expected key = value"));
    const std::string key = detail::trim(line.substr(0, eq));
    if (!known.count(key))
      throw SchemaError(detail::concat(path.string(), ":", lineno, ": unknown key '", key, "'"));
    if (!kv.emplace(key, detail::trim(line.substr(eq + 1))).second)
      throw SchemaError(detail::concat(path.string(), ":", lineno, ": duplicate key '", key, "'"));
  }
  auto need = [&](const std::string& key) -> const std::string& {
    const auto it = kv.find(key);
    if (it == kv.end()) throw SchemaError("manifest is missing key '" + key + "'");
    return it->second;
  };

  StreamManifest m;
  m.schema = FeatureSchema(detail::parse_index(need("d_v"), "d_v"),
                           detail::parse_index(need("d_s"), "d_s"),
                           detail::parse_index(need("d_a"), "d_a"),
                           detail::parse_index(need("classes"), "classes"));
  const auto base = path.parent_path();
  auto resolve = [&](const std::string& f) {
    std::filesystem::path p(f);
    return p.is_absolute() ? p : base / p;
  };
  for (const auto& f : detail::split(need("cstage_batches"), ','))
    if (!f.empty()) m.cstage_batches.push_back(resolve(f));
  if (m.cstage_batches.empty()) throw SchemaError("manifest lists no C-stage batches");
  m.estage_train = resolve(need("estage_train"));
  m.estage_test = resolve(need("estage_test"));
  m.cstage_vanished = detail::parse_range(need("cstage_vanished"), "cstage_vanished");
  m.cstage_survived = detail::parse_range(need("cstage_survived"), "cstage_survived");
  m.estage_survived = detail::parse_range(need("estage_survived"), "estage_survived");
  m.estage_augmented = detail::parse_range(need("estage_augmented"), "estage_augmented");
  if (auto it = kv.find("delimiter"); it != kv.end()) {
    const std::string d = it->second == "tab" ? "\t" : it->second;
    if (d.size() != 1) throw SchemaError("delimiter must be a single character or 'tab'");
    m.delimiter = d[0];
  }
  if (auto it = kv.find("scaling"); it != kv.end()) {
    if (it->second == "none") m.scaling = Scaling::None;
    else if (it->second == "first_batch") m.scaling = Scaling::FirstBatch;
    else throw SchemaError("scaling must be 'none' or 'first_batch'");
  }

  const auto& s = m.schema;
  detail::check_stage_ranges("C", m.cstage_vanished, s.d_v, m.cstage_survived, s.d_s);
  detail::check_stage_ranges("E", m.estage_survived, s.d_s, m.estage_augmented, s.d_a);

  for (const auto& f : m.cstage_batches) {
    if (!std::filesystem::exists(f)) throw IoError("missing C-stage file " + f.string());
    const Index cols = detail::peek_column_count(f, m.delimiter);
    if (cols != s.cstage_width() + 1)
      throw SchemaError(detail::concat(f.string(), ": ", cols, " columns, expected ",
                                       s.cstage_width() + 1));
  }
  for (const auto& f : {m.estage_train, m.estage_test}) {
    if (!std::filesystem::exists(f)) throw IoError("missing E-stage file " + f.string());
    const Index cols = detail::peek_column_count(f, m.delimiter);
    if (cols != s.estage_width() + 1)
      throw SchemaError(detail::concat(f.string(), ": ", cols, " columns, expected ",
                                       s.estage_width() + 1));
  }
  return m;
}

/// Raw table: feature matrix plus integer labels, exactly as stored.
struct RawTable {
  Matrix x;
  std::vector<Index> labels;
};

inline RawTable read_table(const std::filesystem::path& p, char delim, Index features, Index c) {
  std::ifstream in(p);
  if (!in) throw IoError("cannot open " + p.string());
  std::vector<double> values;
  RawTable t;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split(line, delim);
    auto where = [&] { return detail::concat(p.string(), ":", lineno, ": "); };
    if (static_cast<Index>(fields.size()) != features + 1)
      throw SchemaError(detail::concat(where(), fields.size(), " fields, expected ", features + 1));
    for (Index j = 0; j < features; ++j) {
      const std::string& f = fields[static_cast<std::size_t>(j)];
      char* end = nullptr;
      const double v = std::strtod(f.c_str(), &end);
      if (f.empty() || *end != '\0' || !std::isfinite(v))
        throw SchemaError(detail::concat(where(), "bad feature value '", f, "' in column ", j));
      values.push_back(v);
    }
    const std::string& lab = fields.back();
    char* end = nullptr;
    const long long l = std::strtoll(lab.c_str(), &end, 10);
    if (lab.empty() || *end != '\0') throw SchemaError(where() + "bad label '" + lab + "'");
    if (l < 0 || l >= c) throw SchemaError(detail::concat(where(), "label ", l, " outside [0, ", c, ")"));
    t.labels.push_back(static_cast<Index>(l));
  }
  if (t.labels.empty()) throw IoError(p.string() + ": file is empty");
  const auto n = static_cast<Index>(t.labels.size());
  t.x = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      values.data(), n, features);
  return t;
}

namespace detail {

inline Matrix columns(const Matrix& x, const ColumnRange& r) {
  return x.middleCols(r.begin, r.width());
}

// Per-column affine map to zero mean / unit variance; constant columns only
// get centered.
struct Affine {
  Vector shift;
  Vector scale;

  static Affine fit(const Matrix& x) {
    Affine a;
    a.shift = x.colwise().mean().transpose();
    a.scale = Vector::Ones(x.cols());
    if (x.rows() > 1) {
      for (Index j = 0; j < x.cols(); ++j) {
        const double var = (x.col(j).array() - a.shift(j)).square().sum() /
                           static_cast<double>(x.rows() - 1);
        if (var > 0.0) a.scale(j) = 1.0 / std::sqrt(var);
      }
    }
    return a;
  }

  Matrix apply(const Matrix& x) const {
    return ((x.rowwise() - shift.transpose()).array().rowwise() * scale.transpose().array()).matrix();
  }
};

}  // namespace detail

/// Reads the stream described by a manifest. C-stage batches come out one at
/// a time; only the current batch is held in memory.
class StreamReader {
 public:
  explicit StreamReader(StreamManifest m) : m_(std::move(m)) {}

  const StreamManifest& manifest() const { return m_; }
  std::size_t batches_read() const { return next_; }

  std::optional<Batch> next() {
    if (next_ >= m_.cstage_batches.size()) return std::nullopt;
    Batch b = read_cstage(m_.cstage_batches[next_]);
    if (m_.scaling == Scaling::FirstBatch) {
      if (!cstage_affine_) fit_cstage(b);
      b.x_v = vanished_affine_->apply(b.x_v);
      b.x_s = cstage_affine_->apply(b.x_s);
    }
    ++next_;
    return b;
  }

  Batch estage_train() { return read_estage(m_.estage_train); }
  Batch estage_test() { return read_estage(m_.estage_test); }

 private:
  Batch read_cstage(const std::filesystem::path& p) const {
    const auto& s = m_.schema;
    RawTable t = read_table(p, m_.delimiter, s.cstage_width(), s.c);
    return Batch::compress(detail::columns(t.x, m_.cstage_vanished),
                           detail::columns(t.x, m_.cstage_survived), one_hot_encode(t.labels, s.c));
  }

  void fit_cstage(const Batch& first) {
    vanished_affine_ = detail::Affine::fit(first.x_v);
    cstage_affine_ = detail::Affine::fit(first.x_s);
  }

  Batch read_estage(const std::filesystem::path& p) {
    const auto& s = m_.schema;
    RawTable t = read_table(p, m_.delimiter, s.estage_width(), s.c);
    Batch b = Batch::expand(detail::columns(t.x, m_.estage_survived),
                            detail::columns(t.x, m_.estage_augmented), one_hot_encode(t.labels, s.c));
    if (m_.scaling == Scaling::FirstBatch) {
      // Survived columns reuse the C-stage map; augmented columns are fitted
      // on the expanding-stage training file.
      if (!cstage_affine_) fit_cstage(read_cstage(m_.cstage_batches.front()));
      if (!augmented_affine_)
        augmented_affine_ = detail::Affine::fit(
            detail::columns(read_table(m_.estage_train, m_.delimiter, s.estage_width(), s.c).x,
                            m_.estage_augmented));
      b.x_s = cstage_affine_->apply(b.x_s);
      b.x_a = augmented_affine_->apply(b.x_a);
    }
    return b;
  }

  StreamManifest m_;
  std::size_t next_ = 0;
  std::optional<detail::Affine> vanished_affine_;
  std::optional<detail::Affine> cstage_affine_;
  std::optional<detail::Affine> augmented_affine_;
};

/// Writes a batch in stage column order ([x_v, x_s] or [x_s, x_a]) followed
/// by the label. %.17g keeps every double exact on re-read.
inline void write_batch_file(const std::filesystem::path& p, const Batch& b, char delim = ',') {
  std::ofstream out(p);
  if (!out) throw IoError("cannot write " + p.string());
  const Matrix x = b.stage == Stage::Compress ? b.cstage_features() : b.estage_features();
  char buf[40];
  for (Index i = 0; i < x.rows(); ++i) {
    for (Index j = 0; j < x.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", x(i, j));
      out << buf << delim;
    }
    out << b.y.label(i) << '\n';
  }
  if (!out) throw IoError("failed writing " + p.string());
}

inline void write_manifest(const std::filesystem::path& p, const StreamManifest& m) {
  std::ofstream out(p);
  if (!out) throw IoError("cannot write " + p.string());
  const auto base = p.parent_path();
  auto rel = [&](const std::filesystem::path& f) {
    return base.empty() ? f.generic_string() : f.lexically_relative(base).generic_string();
  };
  auto range = [](const ColumnRange& r) { return detail::concat(r.begin, ":", r.end); };
  const auto& s = m.schema;
  out << "d_v = " << s.d_v << "\nd_s = " << s.d_s << "\nd_a = " << s.d_a
      << "\nclasses = " << s.c << "\ncstage_batches = ";
  for (std::size_t i = 0; i < m.cstage_batches.size(); ++i)
    out << (i ? ", " : "") << rel(m.cstage_batches[i]);
  out << "\nestage_train = " << rel(m.estage_train) << "\nestage_test = " << rel(m.estage_test)
      << "\ncstage_vanished = " << range(m.cstage_vanished)
      << "\ncstage_survived = " << range(m.cstage_survived)
      << "\nestage_survived = " << range(m.estage_survived)
      << "\nestage_augmented = " << range(m.estage_augmented) << '\n';
  if (m.delimiter != ',') out << "delimiter = " << (m.delimiter == '\t' ? std::string("tab") : std::string(1, m.delimiter)) << '\n';
  if (m.scaling == Scaling::FirstBatch) out << "scaling = first_batch\n";
  if (!out) throw IoError("failed writing " + p.string());
}

// Synthetic streams --------------------------------------------------------

struct SynthConfig {
  FeatureSchema schema{25, 50, 25, 3};
  Index batches = 10;         // T1
  Index n_per_batch = 60;     // rows per C-stage batch
  Index n_estage = 60;        // rows in each of the E-stage train and test batches
  double separation = 1.0;    // scale of class-mean offsets
  double noise = 1.0;         // per-feature Gaussian noise
  double signal_v = 1.0;      // fraction of informative vanished features
  double signal_s = 1.0;      // ... survived
  double signal_a = 1.0;      // ... augmented
  unsigned long long seed = 1;

  void validate() const {
    schema.validate();
    if (batches < 1 || n_per_batch < 1 || n_estage < 1)
      throw ParameterError("synthetic batch counts and sizes must be >= 1");
    if (!(separation >= 0.0) || !(noise >= 0.0)) throw ParameterError("separation and noise must be >= 0");
    for (double f : {signal_v, signal_s, signal_a})
      if (!(f >= 0.0 && f <= 1.0)) throw ParameterError("signal fractions must lie in [0, 1]");
  }
};

struct SyntheticStream {
  FeatureSchema schema;
  std::vector<Batch> cstage;
  Batch estage_train;
  Batch estage_test;
};

/// Gaussian class-conditional features. Each partition has a fraction of
/// informative columns whose class means are drawn once per stream; the rest
/// have mean zero. Survived columns share their means across both stages.
inline SyntheticStream generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  const auto& s = cfg.schema;
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const Index total = s.d_v + s.d_s + s.d_a;  // layout: [v | s | a]
  Matrix means = Matrix::Zero(s.c, total);
  auto informative = [&](Index offset, Index width, double frac) {
    const auto k = static_cast<Index>(std::llround(frac * static_cast<double>(width)));
    for (Index l = 0; l < s.c; ++l)
      for (Index j = 0; j < k; ++j) means(l, offset + j) = cfg.separation * gauss(rng);
  };
  informative(0, s.d_v, cfg.signal_v);
  informative(s.d_v, s.d_s, cfg.signal_s);
  informative(s.d_v + s.d_s, s.d_a, cfg.signal_a);

  auto sample = [&](Index n) {
    std::vector<Index> labels(static_cast<std::size_t>(n));
    for (Index k = 0; k < n; ++k) labels[static_cast<std::size_t>(k)] = k % s.c;
    std::shuffle(labels.begin(), labels.end(), rng);
    Matrix x(n, total);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < total; ++j)
        x(i, j) = means(labels[static_cast<std::size_t>(i)], j) + cfg.noise * gauss(rng);
    return std::pair{std::move(x), one_hot_encode(labels, s.c)};
  };

  SyntheticStream out;
  out.schema = s;
  for (Index t = 0; t < cfg.batches; ++t) {
    auto [x, y] = sample(cfg.n_per_batch);
    out.cstage.push_back(
        Batch::compress(x.leftCols(s.d_v), x.middleCols(s.d_v, s.d_s), std::move(y)));
  }
  for (Batch* b : {&out.estage_train, &out.estage_test}) {
    auto [x, y] = sample(cfg.n_estage);
    *b = Batch::expand(x.middleCols(s.d_v, s.d_s), x.rightCols(s.d_a), std::move(y));
  }
  return out;
}

/// Writes a synthetic stream as batch files plus a manifest in `dir`.
inline StreamManifest write_stream(const std::filesystem::path& dir, const SyntheticStream& st) {
  std::filesystem::create_directories(dir);
  StreamManifest m;
  m.schema = st.schema;
  for (std::size_t t = 0; t < st.cstage.size(); ++t) {
    char name[32];
    std::snprintf(name, sizeof name, "cstage_%03zu.csv", t);
    m.cstage_batches.push_back(dir / name);
    write_batch_file(m.cstage_batches.back(), st.cstage[t]);
  }
  m.estage_train = dir / "estage_train.csv";
  m.estage_test = dir / "estage_test.csv";
  write_batch_file(m.estage_train, st.estage_train);
  write_batch_file(m.estage_test, st.estage_test);
  const auto& s = st.schema;
  m.cstage_vanished = {0, s.d_v};
  m.cstage_survived = {s.d_v, s.d_v + s.d_s};
  m.estage_survived = {0, s.d_s};
  m.estage_augmented = {s.d_s, s.d_s + s.d_a};
  write_manifest(dir / "manifest.txt", m);
  return m;
}

}  // namespace opid
