// SPDX-License-Identifier: Apache-2.0
#include "grace/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "grace/simd.hpp"

namespace grace {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(std::string("matrix shape mismatch: ") + what);
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  require(values_.size() == rows * cols, "value count");
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  Matrix m(r, c);
  std::size_t i = 0;
  for (const auto& row : rows) {
    require(row.size() == c, "ragged rows");
    std::copy(row.begin(), row.end(), m.row(i++).begin());
  }
  return m;
}

void Matrix::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  matmul_acc(a, b, c);
  return c;
}

Matrix matmul_bt(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.rows());
  matmul_bt_acc(a, b, c);
  return c;
}

void matmul_acc(const Matrix& a, const Matrix& b, Matrix& c) {
  require(a.cols() == b.rows() && c.rows() == a.rows() && c.cols() == b.cols(), "matmul");
  const auto& k = simd::active();
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* ci = c.data() + i * n;
    const double* ai = a.data() + i * a.cols();
    for (std::size_t p = 0; p < a.cols(); ++p) {
      if (ai[p] != 0.0) k.axpy(ai[p], b.data() + p * n, ci, n);
    }
  }
}

void matmul_at_acc(const Matrix& a, const Matrix& b, Matrix& c) {
  require(a.rows() == b.rows() && c.rows() == a.cols() && c.cols() == b.cols(), "matmul_at");
  const auto& k = simd::active();
  const std::size_t n = b.cols();
  for (std::size_t p = 0; p < a.rows(); ++p) {
    const double* ap = a.data() + p * a.cols();
    const double* bp = b.data() + p * n;
    for (std::size_t i = 0; i < a.cols(); ++i) {
      if (ap[i] != 0.0) k.axpy(ap[i], bp, c.data() + i * n, n);
    }
  }
}

void matmul_bt_acc(const Matrix& a, const Matrix& b, Matrix& c) {
  require(a.cols() == b.cols() && c.rows() == a.rows() && c.cols() == b.rows(), "matmul_bt");
  const auto& k = simd::active();
  const std::size_t d = a.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* ai = a.data() + i * d;
    for (std::size_t j = 0; j < b.rows(); ++j) c(i, j) += k.dot(ai, b.data() + j * d, d);
  }
}

Matrix transpose(const Matrix& m) {
  Matrix t(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
  return t;
}

void add_inplace(Matrix& dst, const Matrix& src, double alpha) {
  require(dst.same_shape(src), "add_inplace");
  simd::axpy(alpha, src.data(), dst.data(), dst.size());
}

void add_row_broadcast(Matrix& dst, const Matrix& row_vec) {
  require(row_vec.rows() == 1 && row_vec.cols() == dst.cols(), "add_row_broadcast");
  for (std::size_t i = 0; i < dst.rows(); ++i) simd::axpy(1.0, row_vec.data(), dst.row(i).data(), dst.cols());
}

void add_col_sums(Matrix& dst, const Matrix& src) {
  require(dst.rows() == 1 && dst.cols() == src.cols(), "add_col_sums");
  for (std::size_t i = 0; i < src.rows(); ++i) simd::axpy(1.0, src.row(i).data(), dst.data(), dst.cols());
}

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> idx) {
  Matrix out(idx.size(), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    require(idx[i] < m.rows(), "gather index");
    std::copy_n(m.row(idx[i]).data(), m.cols(), out.row(i).data());
  }
  return out;
}

void scatter_add_rows(Matrix& dst, std::span<const std::size_t> idx, const Matrix& src) {
  require(src.rows() == idx.size() && src.cols() == dst.cols(), "scatter_add_rows");
  for (std::size_t i = 0; i < idx.size(); ++i) simd::axpy(1.0, src.row(i).data(), dst.row(idx[i]).data(), dst.cols());
}

Matrix slice_cols(const Matrix& m, std::size_t begin, std::size_t count) {
  require(begin + count <= m.cols(), "slice_cols");
  Matrix out(m.rows(), count);
  for (std::size_t i = 0; i < m.rows(); ++i) std::copy_n(m.row(i).data() + begin, count, out.row(i).data());
  return out;
}

void add_into_cols(Matrix& dst, std::size_t begin, const Matrix& src) {
  require(src.rows() == dst.rows() && begin + src.cols() <= dst.cols(), "add_into_cols");
  for (std::size_t i = 0; i < dst.rows(); ++i) simd::axpy(1.0, src.row(i).data(), dst.row(i).data() + begin, src.cols());
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require(a.same_shape(b), "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  return m;
}

double frobenius(const Matrix& m) { return std::sqrt(simd::dot(m.data(), m.data(), m.size())); }

bool all_finite(const Matrix& m) {
  return std::all_of(m.values().begin(), m.values().end(), [](double v) { return std::isfinite(v); });
}

}  // namespace grace
