#ifndef SNAPVOTE_DATASET_HPP_
#define SNAPVOTE_DATASET_HPP_

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "snapvote/binary_io.hpp"
#include "snapvote/errors.hpp"
#include "snapvote/matrix.hpp"
#include "snapvote/rng.hpp"

namespace snapvote {

enum class SplitTag { labeled_train, unlabeled, test, valid };

/// Maps raw label values (as written in the files) to ids 0..K-1 in
/// ascending value order.
struct LabelMapping {
  std::vector<double> values;

  std::size_t classes() const { return values.size(); }

  std::uint32_t id_of(double raw) const {
    auto it = std::lower_bound(values.begin(), values.end(), raw);
    if (it == values.end() || *it != raw)
      throw InvalidInput("label value " + io::format_double(raw) + " is not in the training label set");
    return static_cast<std::uint32_t>(it - values.begin());
  }

  static LabelMapping from_raw(const std::vector<double>& raw) {
    LabelMapping m{raw};
    std::sort(m.values.begin(), m.values.end());
    m.values.erase(std::unique(m.values.begin(), m.values.end()), m.values.end());
    return m;
  }

  bool operator==(const LabelMapping&) const = default;
};

struct Dataset {
  Matrix features;
  std::optional<LabelVector> labels;
  LabelMapping mapping;
  SplitTag tag = SplitTag::unlabeled;

  std::size_t size() const { return features.rows(); }
  std::size_t classes() const { return labels ? labels->classes : mapping.classes(); }
};

enum class LabelSource { none, last_column, separate_file };

struct CsvSchema {
  LabelSource labels = LabelSource::none;
  std::filesystem::path label_file;  // separate_file only
};

namespace detail {

inline double parse_cell(std::string_view cell, std::size_t row, std::size_t col) {
  while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t')) cell.remove_prefix(1);
  while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t' || cell.back() == '\r')) cell.remove_suffix(1);
  double v = 0.0;
  const char* first = cell.data();
  if (!cell.empty() && cell.front() == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, cell.data() + cell.size(), v);
  if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v))
    throw InvalidInput("row " + std::to_string(row) + ", column " + std::to_string(col) +
                       ": not a finite decimal number: '" + std::string(cell) + "'");
  return v;
}

/// Rows of comma-separated numbers; blank lines are skipped. Row indices
/// in errors are 0-based data rows.
inline std::vector<std::vector<double>> read_numeric_rows(const std::filesystem::path& path) {
  auto in = io::open_in(path, false);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::vector<double> row;
    std::size_t start = 0;
    for (;;) {
      const std::size_t comma = line.find(',', start);
      const std::string_view cell =
          std::string_view(line).substr(start, comma == std::string::npos ? std::string::npos : comma - start);
      row.push_back(parse_cell(cell, rows.size(), row.size()));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (rows.empty()) width = row.size();
    if (row.size() != width)
      throw InvalidInput("row " + std::to_string(rows.size()) + " has " + std::to_string(row.size()) +
                         " columns, expected " + std::to_string(width) + " (" + path.string() + ")");
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace detail

/// Raw label column of a one-value-per-line file.
inline std::vector<double> read_label_values(const std::filesystem::path& path) {
  std::vector<double> out;
  for (const auto& row : detail::read_numeric_rows(path)) {
    if (row.size() != 1) throw InvalidInput("label file '" + path.string() + "' must have one column");
    out.push_back(row[0]);
  }
  return out;
}

inline LabelVector map_labels(const std::vector<double>& raw, const LabelMapping& mapping) {
  std::vector<std::uint32_t> ids;
  ids.reserve(raw.size());
  for (double v : raw) ids.push_back(mapping.id_of(v));
  return LabelVector(std::move(ids), std::max<std::size_t>(mapping.classes(), 2));
}

/// Loads a CSV of decimal numbers. With labels, the label ids are assigned
/// from the file's own label values unless `mapping` is given (e.g. to
/// load a validation or answer-key file consistently with training).
inline Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema, SplitTag tag,
                        const LabelMapping* mapping = nullptr) {
  auto rows = detail::read_numeric_rows(path);
  Dataset ds;
  ds.tag = tag;
  std::vector<double> raw_labels;
  if (schema.labels == LabelSource::last_column) {
    for (auto& row : rows) {
      if (row.size() < 2) throw InvalidInput("'" + path.string() + "' needs a feature column and a label column");
      raw_labels.push_back(row.back());
      row.pop_back();
    }
  } else if (schema.labels == LabelSource::separate_file) {
    raw_labels = read_label_values(schema.label_file);
    if (raw_labels.size() != rows.size())
      throw InvalidInput("label file '" + schema.label_file.string() + "' has " + std::to_string(raw_labels.size()) +
                         " labels for " + std::to_string(rows.size()) + " rows");
  }
  const std::size_t cols = rows.empty() ? 0 : rows.front().size();
  ds.features = Matrix(rows.size(), cols);
  for (std::size_t i = 0; i < rows.size(); ++i) std::copy(rows[i].begin(), rows[i].end(), ds.features.row(i).begin());
  if (schema.labels != LabelSource::none) {
    ds.mapping = mapping ? *mapping : LabelMapping::from_raw(raw_labels);
    ds.labels = map_labels(raw_labels, ds.mapping);
  }
  return ds;
}

/// Writes rows at 17 significant digits; labels (raw values) go in a last
/// column when given.
inline void save_csv(const std::filesystem::path& path, const Matrix& features,
                     const std::vector<double>* raw_labels = nullptr) {
  detail::require(!raw_labels || raw_labels->size() == features.rows(), "label count does not match rows");
  auto out = io::open_out(path, false);
  for (std::size_t i = 0; i < features.rows(); ++i) {
    auto row = features.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j) out << ',';
      out << io::format_double(row[j]);
    }
    if (raw_labels) out << (row.empty() ? "" : ",") << io::format_double((*raw_labels)[i]);
    out << '\n';
  }
}

inline void save_label_file(const std::filesystem::path& path, const std::vector<double>& raw_labels) {
  auto out = io::open_out(path, false);
  for (double v : raw_labels) out << io::format_double(v) << '\n';
}

inline std::vector<double> raw_labels(const LabelVector& labels, const LabelMapping& mapping) {
  std::vector<double> out;
  for (auto id : labels.labels) out.push_back(mapping.values.at(id));
  return out;
}

struct TrainValidSplit {
  Dataset train;
  Dataset valid;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> valid_indices;
};

/// Seeded shuffle split: the first floor(fraction * n) shuffled rows train,
/// the rest validate.
inline TrainValidSplit split_train_valid(const Dataset& ds, double fraction, std::uint64_t seed) {
  detail::require(ds.labels.has_value(), "cannot split an unlabeled dataset into train/valid");
  detail::require(fraction > 0.0 && fraction < 1.0, "train fraction must lie in (0, 1)");
  const std::size_t n = ds.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));
  const auto n_train = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
  TrainValidSplit out;
  out.train_indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.valid_indices.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  auto subset = [&](const std::vector<std::size_t>& idx, SplitTag tag) {
    Dataset d;
    d.features = gather_rows(ds.features, idx);
    d.labels = ds.labels->gather(idx);
    d.mapping = ds.mapping;
    d.tag = tag;
    return d;
  };
  out.train = subset(out.train_indices, SplitTag::labeled_train);
  out.valid = subset(out.valid_indices, SplitTag::valid);
  return out;
}

/// Gaussian class blobs in a low-dimensional latent space, pushed through a
/// random linear map plus a sigmoid squash, with isotropic observation
/// noise on top. The unlabeled pool is drawn from the same class mixture.
struct SyntheticConfig {
  std::size_t classes = 9;
  std::size_t dim = 128;
  std::size_t latent_dim = 4;
  std::size_t labeled = 100;
  std::size_t unlabeled = 10000;
  std::size_t test = 2000;
  double separation = 2.0;  // spread of the class centres (latent units)
  double noise = 0.5;       // observation noise std
  std::uint64_t seed = 1;

  bool operator==(const SyntheticConfig&) const = default;
};

struct SyntheticData {
  Dataset labeled;
  Dataset unlabeled;
  Dataset test;  // features only
  LabelVector test_labels;
};

inline SyntheticData generate_synthetic(const SyntheticConfig& cfg) {
  detail::require(cfg.classes >= 2, "synthetic data needs at least 2 classes");
  detail::require(cfg.dim >= 1 && cfg.latent_dim >= 1, "synthetic dimensions must be positive");
  detail::require(cfg.labeled >= 1, "synthetic data needs labeled examples");
  Rng rng(cfg.seed);
  Matrix centres(cfg.classes, cfg.latent_dim);
  for (double& v : centres.values()) v = cfg.separation * rng.normal();
  Matrix projection(cfg.latent_dim, cfg.dim);
  const double scale = 2.0 / std::sqrt(static_cast<double>(cfg.latent_dim));
  for (double& v : projection.values()) v = scale * rng.normal();

  auto draw = [&](std::size_t n, std::vector<std::uint32_t>& labels) {
    Matrix x(n, cfg.dim);
    std::vector<double> z(cfg.latent_dim);
    labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = static_cast<std::uint32_t>(rng.below(cfg.classes));
      labels[i] = c;
      for (std::size_t k = 0; k < cfg.latent_dim; ++k) z[k] = centres(c, k) + rng.normal();
      for (std::size_t j = 0; j < cfg.dim; ++j) {
        double a = 0.0;
        for (std::size_t k = 0; k < cfg.latent_dim; ++k) a += z[k] * projection(k, j);
        x(i, j) = 1.0 / (1.0 + std::exp(-a)) + cfg.noise * rng.normal();
      }
    }
    return x;
  };

  LabelMapping mapping;
  for (std::size_t c = 0; c < cfg.classes; ++c) mapping.values.push_back(static_cast<double>(c));

  SyntheticData out;
  std::vector<std::uint32_t> labels;
  out.labeled.features = draw(cfg.labeled, labels);
  out.labeled.labels = LabelVector(labels, cfg.classes);
  out.labeled.mapping = mapping;
  out.labeled.tag = SplitTag::labeled_train;
  out.unlabeled.features = draw(cfg.unlabeled, labels);
  out.unlabeled.tag = SplitTag::unlabeled;
  out.test.features = draw(cfg.test, labels);
  out.test.tag = SplitTag::test;
  out.test.mapping = mapping;
  out.test_labels = LabelVector(labels, cfg.classes);
  return out;
}

}  // namespace snapvote

#endif  // SNAPVOTE_DATASET_HPP_
