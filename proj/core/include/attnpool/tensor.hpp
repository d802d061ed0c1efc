#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "attnpool/instrument.hpp"

namespace attnpool {

// Dimensions of a dense tensor. Every dim is >= 1.
class Shape {
 public:
  Shape() : dims_{1, 1} {}
  Shape(std::initializer_list<std::size_t> dims);
  explicit Shape(std::vector<std::size_t> dims);

  std::size_t ndim() const noexcept { return dims_.size(); }
  std::size_t operator[](std::size_t i) const { return dims_.at(i); }
  const std::vector<std::size_t>& dims() const noexcept { return dims_; }
  std::size_t numel() const noexcept;

  std::string to_string() const;  // "[n, f]"

  friend bool operator==(const Shape&, const Shape&) = default;

 private:
  std::vector<std::size_t> dims_;
};

// Dense row-major tensor of doubles. Most operations treat it as a 2-D
// matrix; a 1-D shape [n] behaves as an n x 1 column. Higher ranks are
// storage only (dataset bundles) and must be sliced before arithmetic.
class Matrix {
 public:
  using Buffer = std::vector<double, CountingAllocator<double>>;

  Matrix() : Matrix(Shape{1, 1}) {}
  explicit Matrix(Shape shape, double fill = 0.0);
  // Throws ShapeError on a length mismatch and ValidationError on a
  // non-finite entry.
  Matrix(Shape shape, std::span<const double> values);
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0) : Matrix(Shape{rows, cols}, fill) {}

  static Matrix zeros(std::size_t rows, std::size_t cols) { return Matrix(rows, cols); }
  static Matrix ones(std::size_t rows, std::size_t cols) { return Matrix(rows, cols, 1.0); }
  static Matrix identity(std::size_t n);
  static Matrix column(std::span<const double> values);
  static Matrix column(std::initializer_list<double> values);
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t rows() const;
  std::size_t cols() const;
  bool is_column() const { return cols() == 1; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> data() noexcept { return {data_.data(), data_.size()}; }
  std::span<const double> data() const noexcept { return {data_.data(), data_.size()}; }
  std::span<const double> row(std::size_t r) const { return data().subspan(r * cols(), cols()); }

  // Same elements, new shape; numel must match.
  Matrix reshaped(Shape shape) const;
  // Slice k of a rank-3 tensor [m, a, b] as an a x b matrix.
  Matrix slice(std::size_t k) const;

  bool all_finite() const noexcept;

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  void cache_cols();

  Shape shape_;
  std::size_t cols_ = 1;
  Buffer data_;
};

// C = A * B, accumulated left to right over the inner index.
Matrix matmul(const Matrix& a, const Matrix& b);
// C = A^T * B without materializing A^T.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
// out += A^T * B. out must already be (A.cols x B.cols).
void accumulate_matmul_tn(const Matrix& a, const Matrix& b, Matrix& out);

Matrix transpose(const Matrix& a);
double trace(const Matrix& a);

Matrix elementwise_mul(const Matrix& u, const Matrix& v);
Matrix add(const Matrix& a, const Matrix& b);
Matrix subtract(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double alpha);

// Sum of a .* b over all entries; equals trace(A B^T) for same-shape A, B.
double frobenius_dot(const Matrix& a, const Matrix& b);
double sum(const Matrix& a);
Matrix column_of(const Matrix& a, std::size_t c);
Matrix outer(const Matrix& u, const Matrix& v);

// Largest |a - b| / (1 + |b|) across entries; shapes must agree.
double max_rel_diff(const Matrix& a, const Matrix& b);

}  // namespace attnpool
