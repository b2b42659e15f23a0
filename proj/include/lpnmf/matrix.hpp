#pragma once

// Dense row-major matrix of doubles with optional row/column names.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lpnmf/error.hpp"

namespace lpnmf {

using Vector = std::vector<double>;
using Names = std::vector<std::string>;

class Matrix {
 public:
  Matrix() = default;

  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw ValidationError("matrix data length " +
                            std::to_string(data_.size()) + " does not match " +
                            shape_string(rows_, cols_));
    }
  }

  // Literal construction, mostly for tests: Matrix::from_rows({{1, 2}, {3, 4}}).
  static Matrix from_rows(
      std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw ValidationError("ragged matrix literal");
      data.insert(data.end(), row.begin(), row.end());
    }
    return Matrix(r, c, std::move(data));
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  static Matrix column(std::span<const double> v) {
    return Matrix(v.size(), 1, std::vector<double>(v.begin(), v.end()));
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double operator()(std::size_t i, std::size_t j) const noexcept {
    return data_[i * cols_ + j];
  }
  double& operator()(std::size_t i, std::size_t j) noexcept {
    return data_[i * cols_ + j];
  }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }

  std::span<const double> row(std::size_t i) const noexcept {
    return {data_.data() + i * cols_, cols_};
  }
  std::span<double> row(std::size_t i) noexcept {
    return {data_.data() + i * cols_, cols_};
  }

  Vector col(std::size_t j) const {
    Vector out(rows_);
    for (std::size_t i = 0; i < rows_; ++i) out[i] = (*this)(i, j);
    return out;
  }

  void set_col(std::size_t j, std::span<const double> v) {
    for (std::size_t i = 0; i < rows_; ++i) (*this)(i, j) = v[i];
  }

  const Names& row_names() const noexcept { return row_names_; }
  const Names& col_names() const noexcept { return col_names_; }
  bool has_row_names() const noexcept { return !row_names_.empty(); }
  bool has_col_names() const noexcept { return !col_names_.empty(); }

  // An empty list clears the names.
  void set_row_names(Names names) {
    if (!names.empty() && names.size() != rows_) {
      throw ValidationError("row name count " + std::to_string(names.size()) +
                            " does not match " + std::to_string(rows_) +
                            " rows");
    }
    row_names_ = std::move(names);
  }
  void set_col_names(Names names) {
    if (!names.empty() && names.size() != cols_) {
      throw ValidationError("column name count " +
                            std::to_string(names.size()) +
                            " does not match " + std::to_string(cols_) +
                            " columns");
    }
    col_names_ = std::move(names);
  }

  bool all_finite() const noexcept {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  std::string shape() const { return shape_string(rows_, cols_); }

  // Numeric equality only; names are metadata.
  friend bool operator==(const Matrix& a, const Matrix& b) noexcept {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

  static std::string shape_string(std::size_t r, std::size_t c) {
    return std::to_string(r) + "x" + std::to_string(c);
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
  Names row_names_;
  Names col_names_;
};

inline Matrix multiply(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ValidationError("cannot multiply " + a.shape() + " by " + b.shape());
  }
  Matrix out(a.rows(), b.cols());
  // i-k-j order keeps the inner loop contiguous in both b and out.
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out_row = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto b_row = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += aik * b_row[j];
    }
  }
  out.set_row_names(a.row_names());
  out.set_col_names(b.col_names());
  return out;
}

inline Matrix transpose(const Matrix& m) {
  Matrix out(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(j, i) = m(i, j);
  out.set_row_names(m.col_names());
  out.set_col_names(m.row_names());
  return out;
}

// Sum of squared entries.
inline double frobenius_sq(const Matrix& m) noexcept {
  double s = 0.0;
  for (double v : m.data()) s += v * v;
  return s;
}

inline Matrix subtract(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ValidationError("cannot subtract " + b.shape() + " from " +
                          a.shape());
  }
  Matrix out = a;
  auto od = out.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] -= bd[i];
  return out;
}

// ||x - p * a^T||_F^2 without materialising the product.
inline double residual_sq(const Matrix& x, const Matrix& p, const Matrix& a) {
  if (p.cols() != a.cols() || x.rows() != p.rows() || x.cols() != a.rows()) {
    throw ValidationError("residual shapes disagree: x " + x.shape() + ", p " +
                          p.shape() + ", a " + a.shape());
  }
  const std::size_t k = p.cols();
  double s = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto pi = p.row(i);
    for (std::size_t j = 0; j < x.cols(); ++j) {
      auto aj = a.row(j);
      double v = x(i, j);
      for (std::size_t c = 0; c < k; ++c) v -= pi[c] * aj[c];
      s += v * v;
    }
  }
  return s;
}

// Columns of m selected by index, in the given order; names follow.
inline Matrix select_cols(const Matrix& m, std::span<const std::size_t> idx) {
  Matrix out(m.rows(), idx.size());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < idx.size(); ++j) out(i, j) = m(i, idx[j]);
  out.set_row_names(m.row_names());
  if (m.has_col_names()) {
    Names names;
    names.reserve(idx.size());
    for (auto j : idx) names.push_back(m.col_names()[j]);
    out.set_col_names(std::move(names));
  }
  return out;
}

inline Matrix select_rows(const Matrix& m, std::span<const std::size_t> idx) {
  Matrix out(idx.size(), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    auto src = m.row(idx[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  out.set_col_names(m.col_names());
  if (m.has_row_names()) {
    Names names;
    names.reserve(idx.size());
    for (auto i : idx) names.push_back(m.row_names()[i]);
    out.set_row_names(std::move(names));
  }
  return out;
}

}  // namespace lpnmf
