// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace grace {

/// Dense row-major matrix of doubles. Activations are stored one token per
/// row (tokens x features).
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {values_.data() + r * cols_, cols_}; }

  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }
  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  void fill(double v);
  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

// a (m x k) * b (k x n)
Matrix matmul(const Matrix& a, const Matrix& b);
// a (m x k) * b^T, b is (n x k)
Matrix matmul_bt(const Matrix& a, const Matrix& b);
// c += a * b
void matmul_acc(const Matrix& a, const Matrix& b, Matrix& c);
// c += a^T * b, a is (k x m), b is (k x n)
void matmul_at_acc(const Matrix& a, const Matrix& b, Matrix& c);
// c += a * b^T
void matmul_bt_acc(const Matrix& a, const Matrix& b, Matrix& c);

Matrix transpose(const Matrix& m);
void add_inplace(Matrix& dst, const Matrix& src, double alpha = 1.0);
void add_row_broadcast(Matrix& dst, const Matrix& row_vec);
// dst(1 x cols) += column sums of src
void add_col_sums(Matrix& dst, const Matrix& src);

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> idx);
void scatter_add_rows(Matrix& dst, std::span<const std::size_t> idx, const Matrix& src);
Matrix slice_cols(const Matrix& m, std::size_t begin, std::size_t count);
void add_into_cols(Matrix& dst, std::size_t begin, const Matrix& src);

double max_abs_diff(const Matrix& a, const Matrix& b);
double frobenius(const Matrix& m);
bool all_finite(const Matrix& m);

}  // namespace grace
