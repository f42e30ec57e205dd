#ifndef SNAPVOTE_MATRIX_HPP_
#define SNAPVOTE_MATRIX_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "snapvote/errors.hpp"

namespace snapvote {

/// Dense row-major matrix of doubles. Rows are examples, columns are
/// features or classes.
class Matrix {
 public:
  Matrix() = default;

  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    detail::require(data_.size() == rows_ * cols_,
                    "matrix payload has " + std::to_string(data_.size()) + " entries, expected " +
                        std::to_string(rows_ * cols_));
  }

  Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& row : rows) {
      detail::require(row.size() == cols_, "ragged matrix literal");
      data_.insert(data_.end(), row.begin(), row.end());
    }
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  bool operator==(const Matrix&) const = default;

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  std::string shape() const { return std::to_string(rows_) + "x" + std::to_string(cols_); }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// a * b
inline Matrix matmul(const Matrix& a, const Matrix& b) {
  detail::require(a.cols() == b.rows(), "matmul: " + a.shape() + " * " + b.shape());
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto dst = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto src = b.row(k);
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += aik * src[j];
    }
  }
  return out;
}

/// a^T * b
inline Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  detail::require(a.rows() == b.rows(), "matmul_tn: " + a.shape() + "^T * " + b.shape());
  Matrix out(a.cols(), b.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto arow = a.row(r);
    auto brow = b.row(r);
    for (std::size_t i = 0; i < arow.size(); ++i) {
      const double ai = arow[i];
      if (ai == 0.0) continue;
      auto dst = out.row(i);
      for (std::size_t j = 0; j < brow.size(); ++j) dst[j] += ai * brow[j];
    }
  }
  return out;
}

/// a * b^T
inline Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  detail::require(a.cols() == b.cols(), "matmul_nt: " + a.shape() + " * " + b.shape() + "^T");
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto arow = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      auto brow = b.row(j);
      double acc = 0.0;
      for (std::size_t k = 0; k < arow.size(); ++k) acc += arow[k] * brow[k];
      out(i, j) = acc;
    }
  }
  return out;
}

inline Matrix transpose(const Matrix& m) {
  Matrix out(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(j, i) = m(i, j);
  return out;
}

/// Adds a 1 x cols bias row to every row of m.
inline void add_row_vector(Matrix& m, const Matrix& bias) {
  detail::require(bias.rows() == 1 && bias.cols() == m.cols(),
                  "bias " + bias.shape() + " does not broadcast over " + m.shape());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto dst = m.row(i);
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += bias(0, j);
  }
}

inline Matrix column_sums(const Matrix& m) {
  Matrix out(1, m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto src = m.row(i);
    for (std::size_t j = 0; j < src.size(); ++j) out(0, j) += src[j];
  }
  return out;
}

/// Rows of m picked by index, in the given order.
inline Matrix gather_rows(const Matrix& m, std::span<const std::size_t> indices) {
  Matrix out(indices.size(), m.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    detail::require(indices[i] < m.rows(), "row index out of range");
    std::copy_n(m.row(indices[i]).begin(), m.cols(), out.row(i).begin());
  }
  return out;
}

/// Per-row index of the largest entry; the lowest index wins ties.
inline std::vector<std::uint32_t> argmax_rows(const Matrix& m) {
  std::vector<std::uint32_t> out(m.rows(), 0);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    std::size_t best = 0;
    for (std::size_t j = 1; j < r.size(); ++j)
      if (r[j] > r[best]) best = j;
    out[i] = static_cast<std::uint32_t>(best);
  }
  return out;
}

inline bool is_row_stochastic(const Matrix& m, double tolerance) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double sum = 0.0;
    for (double v : m.row(i)) {
      if (!(v >= 0.0)) return false;
      sum += v;
    }
    if (std::abs(sum - 1.0) > tolerance) return false;
  }
  return true;
}

/// Class ids in [0, classes).
struct LabelVector {
  std::vector<std::uint32_t> labels;
  std::size_t classes = 0;

  LabelVector() = default;
  LabelVector(std::vector<std::uint32_t> ids, std::size_t k) : labels(std::move(ids)), classes(k) {
    detail::require(classes >= 2, "label vector needs at least 2 classes");
    for (std::size_t i = 0; i < labels.size(); ++i)
      detail::require(labels[i] < classes, "label " + std::to_string(labels[i]) + " at index " +
                                               std::to_string(i) + " is not below " +
                                               std::to_string(classes));
  }

  std::size_t size() const noexcept { return labels.size(); }
  std::uint32_t operator[](std::size_t i) const { return labels[i]; }
  bool operator==(const LabelVector&) const = default;

  LabelVector gather(std::span<const std::size_t> indices) const {
    LabelVector out;
    out.classes = classes;
    out.labels.reserve(indices.size());
    for (std::size_t i : indices) out.labels.push_back(labels.at(i));
    return out;
  }
};

}  // namespace snapvote

#endif  // SNAPVOTE_MATRIX_HPP_
