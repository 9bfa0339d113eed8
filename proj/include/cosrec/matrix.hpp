#pragma once

#include <cstddef>
#include <vector>

#include "cosrec/alloc_tracker.hpp"

namespace cosrec {

// Dense row-major float64 matrix; the sole numeric carrier in the library.
// Zero-sized dimensions are rejected at construction; a default-constructed
// Matrix is an empty placeholder that every operation rejects.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return rows_ * cols_; }
  bool empty() const { return rows_ == 0; }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  double* row(std::size_t i) { return data_.data() + i * cols_; }
  const double* row(std::size_t i) const { return data_.data() + i * cols_; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  void fill(double v);

  friend bool operator==(const Matrix& a, const Matrix& b);

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double, TrackedAllocator<double>> data_;
};

// Allocates a matrix exempt from transient-byte tracking; used for buffers
// that outlive the call that created them (kernel outputs, caches).
inline Matrix make_result(std::size_t rows, std::size_t cols) {
  AllocTracker::Pause pause;
  return Matrix(rows, cols);
}

constexpr std::size_t kGemmBlock = 32;

// C = A * B (and transposed variants); accumulation in float64, cache-blocked
// loops, no auxiliary buffers.
Matrix gemm(const Matrix& a, const Matrix& b, std::size_t block = kGemmBlock);
Matrix gemm_nt(const Matrix& a, const Matrix& b, std::size_t block = kGemmBlock);  // A * B^T
Matrix gemm_tn(const Matrix& a, const Matrix& b, std::size_t block = kGemmBlock);  // A^T * B

void gemm_into(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate = false,
               std::size_t block = kGemmBlock);
void gemm_nt_into(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate = false,
                  std::size_t block = kGemmBlock);
void gemm_tn_into(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate = false,
                  std::size_t block = kGemmBlock);

// Each row divided by sqrt(sum of squares + eps); eps > 0 guards zero rows.
Matrix row_l2_normalize(const Matrix& m, double eps);

// Row-wise softmax with per-row max subtraction. Non-finite input -> NumericError.
Matrix softmax_rows(const Matrix& m);
void softmax_rows_inplace(Matrix& m);

double elu(double x, double alpha);
double elu_prime(double x, double alpha);
double gelu(double x);        // tanh approximation
double gelu_prime(double x);

Matrix transpose(const Matrix& m);
void scale_inplace(Matrix& m, double c);
void add_inplace(Matrix& dst, const Matrix& src, double scale = 1.0);  // dst += scale*src
void hadamard_inplace(Matrix& dst, const Matrix& src);                 // dst *= src elementwise
double dot_all(const Matrix& a, const Matrix& b);  // sum of elementwise products
double sum_squares(const Matrix& m);

void require_same_shape(const Matrix& a, const Matrix& b, const char* what);
void require_nonempty(const Matrix& m, const char* what);

}  // namespace cosrec
