#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace gbatc {

// Dense row-major matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  static Matrix identity(std::size_t n);

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::vector<double> column(std::size_t c) const;
  Matrix transposed() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

Matrix multiply(const Matrix& a, const Matrix& b);

struct SymmetricEigen {
  std::vector<double> values;  // non-increasing
  Matrix vectors;              // column k pairs with values[k]
};

// Cyclic Jacobi eigensolver for a symmetric matrix. Eigenpairs are sorted by
// descending eigenvalue (stable with respect to the Jacobi output order) and
// each eigenvector is signed so its first entry with |v| > 1e-12 is positive.
SymmetricEigen symmetric_eigen(Matrix a);

// Accumulates sum_i v_i v_i^T over row vectors of length n.
Matrix outer_product_sum(std::span<const double> rows, std::size_t n);

// Gauss-Jordan inverse with partial pivoting; returns false if singular.
bool invert(const Matrix& a, Matrix& inverse);

}  // namespace gbatc
