#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace voila {

// Dense row-major matrix of doubles. Rows are tokens everywhere in this
// library, so a linear map is `x * W` with W of shape (in x out).
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);

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
  const std::vector<double>& data() const noexcept { return data_; }

  std::string shape_string() const;

  bool operator==(const Matrix& other) const = default;

  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(double s);

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(Matrix a, double s);

Matrix matmul(const Matrix& a, const Matrix& b);
// a^T * b without materializing the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
// a * b^T without materializing the transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& m);

Matrix hadamard(const Matrix& a, const Matrix& b);

// Adds a 1 x cols row vector to every row.
Matrix add_row_vector(Matrix m, const Matrix& row_vec);
// 1 x cols sum over rows.
Matrix column_sums(const Matrix& m);

// Numerically stable: each row is shifted by its maximum before exp.
Matrix softmax_rows(const Matrix& m);

constexpr double kLayerNormEps = 1e-5;

// Per-row standardization then `gain * x + bias`; gain and bias are 1 x cols.
Matrix layer_norm(const Matrix& m, const Matrix& gain, const Matrix& bias,
                  double eps = kLayerNormEps);

// Exact GELU, x * Phi(x).
double gelu(double x);
double gelu_derivative(double x);
Matrix gelu(const Matrix& m);

// Stacks b below a.
Matrix concat_rows(const Matrix& a, const Matrix& b);
// Rows [begin, end).
Matrix slice_rows(const Matrix& m, std::size_t begin, std::size_t end);
// Columns [begin, end).
Matrix slice_cols(const Matrix& m, std::size_t begin, std::size_t end);
// Writes `block` into columns starting at `begin`.
void assign_cols(Matrix& m, std::size_t begin, const Matrix& block);

bool all_finite(const Matrix& m);
double max_abs_diff(const Matrix& a, const Matrix& b);

}  // namespace voila
