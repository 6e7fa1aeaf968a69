#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace segzsl {

/// Dense row-major matrix of doubles. Batches store one sample per row.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> row(std::size_t r) & { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const& { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) && = delete;

  std::span<double> values() & { return data_; }
  std::span<const double> values() const& { return data_; }
  // A span into a temporary would dangle.
  std::span<const double> values() && = delete;

  void fill(double v);
  bool all_finite() const;

  bool operator==(const Matrix& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Products. Suffix names the transposed operand: matmul_tn = Aᵀ·B, matmul_nt = A·Bᵀ.
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix matmul_tn(const Matrix& a, const Matrix& b);
Matrix matmul_nt(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& a);
Matrix hconcat(const Matrix& left, const Matrix& right);
Matrix vconcat(const Matrix& top, const Matrix& bottom);
Matrix slice_cols(const Matrix& a, std::size_t begin, std::size_t count);
Matrix gather_rows(const Matrix& a, std::span<const std::size_t> indices);

void add_inplace(Matrix& target, const Matrix& other, double scale = 1.0);
void scale_inplace(Matrix& target, double scale);
/// Adds a 1×cols row vector to every row.
void add_row_broadcast(Matrix& target, const Matrix& row);
/// Column sums as a 1×cols matrix.
Matrix column_sums(const Matrix& a);
Matrix column_means(const Matrix& a);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);
double max_abs_diff(const Matrix& a, const Matrix& b);

/// Solves S·X = B for symmetric positive-definite S by Cholesky factorization.
Matrix cholesky_solve(const Matrix& spd, const Matrix& rhs);

}  // namespace segzsl
