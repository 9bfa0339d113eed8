#include "cosrec/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cosrec/errors.hpp"

namespace cosrec {

Matrix::Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols) {
  if (rows == 0 || cols == 0) throw ShapeError("matrix dimensions must be >= 1");
  data_.assign(rows * cols, 0.0);
}

void Matrix::fill(double v) {
  std::fill(data_.begin(), data_.end(), v);
}

bool operator==(const Matrix& a, const Matrix& b) {
  return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
}

void require_nonempty(const Matrix& m, const char* what) {
  if (m.empty()) throw ShapeError(std::string(what) + ": empty matrix");
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(what) + ": shape mismatch");
}

void gemm_into(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate, std::size_t block) {
  require_nonempty(a, "gemm");
  require_nonempty(b, "gemm");
  if (a.cols() != b.rows()) throw ShapeError("gemm: inner dimensions differ");
  if (out.rows() != a.rows() || out.cols() != b.cols()) throw ShapeError("gemm: bad output shape");
  if (block == 0) block = kGemmBlock;
  if (!accumulate) out.fill(0.0);
  const std::size_t r = a.rows(), k = a.cols(), c = b.cols();
  for (std::size_t i0 = 0; i0 < r; i0 += block) {
    const std::size_t i1 = std::min(i0 + block, r);
    for (std::size_t k0 = 0; k0 < k; k0 += block) {
      const std::size_t k1 = std::min(k0 + block, k);
      for (std::size_t j0 = 0; j0 < c; j0 += block) {
        const std::size_t j1 = std::min(j0 + block, c);
        for (std::size_t i = i0; i < i1; ++i) {
          double* orow = out.row(i);
          for (std::size_t kk = k0; kk < k1; ++kk) {
            const double av = a(i, kk);
            const double* brow = b.row(kk);
            for (std::size_t j = j0; j < j1; ++j) orow[j] += av * brow[j];
          }
        }
      }
    }
  }
}

void gemm_nt_into(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate,
                  std::size_t block) {
  require_nonempty(a, "gemm_nt");
  require_nonempty(b, "gemm_nt");
  if (a.cols() != b.cols()) throw ShapeError("gemm_nt: inner dimensions differ");
  if (out.rows() != a.rows() || out.cols() != b.rows())
    throw ShapeError("gemm_nt: bad output shape");
  if (block == 0) block = kGemmBlock;
  if (!accumulate) out.fill(0.0);
  const std::size_t r = a.rows(), k = a.cols(), c = b.rows();
  for (std::size_t i0 = 0; i0 < r; i0 += block) {
    const std::size_t i1 = std::min(i0 + block, r);
    for (std::size_t j0 = 0; j0 < c; j0 += block) {
      const std::size_t j1 = std::min(j0 + block, c);
      for (std::size_t i = i0; i < i1; ++i) {
        const double* arow = a.row(i);
        double* orow = out.row(i);
        for (std::size_t j = j0; j < j1; ++j) {
          const double* brow = b.row(j);
          double acc = 0.0;
          for (std::size_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
          orow[j] += acc;
        }
      }
    }
  }
}

void gemm_tn_into(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate,
                  std::size_t block) {
  require_nonempty(a, "gemm_tn");
  require_nonempty(b, "gemm_tn");
  if (a.rows() != b.rows()) throw ShapeError("gemm_tn: inner dimensions differ");
  if (out.rows() != a.cols() || out.cols() != b.cols())
    throw ShapeError("gemm_tn: bad output shape");
  if (block == 0) block = kGemmBlock;
  if (!accumulate) out.fill(0.0);
  const std::size_t r = a.cols(), k = a.rows(), c = b.cols();
  for (std::size_t k0 = 0; k0 < k; k0 += block) {
    const std::size_t k1 = std::min(k0 + block, k);
    for (std::size_t i = 0; i < r; ++i) {
      double* orow = out.row(i);
      for (std::size_t kk = k0; kk < k1; ++kk) {
        const double av = a(kk, i);
        const double* brow = b.row(kk);
        for (std::size_t j = 0; j < c; ++j) orow[j] += av * brow[j];
      }
    }
  }
}

Matrix gemm(const Matrix& a, const Matrix& b, std::size_t block) {
  require_nonempty(a, "gemm");
  require_nonempty(b, "gemm");
  if (a.cols() != b.rows()) throw ShapeError("gemm: inner dimensions differ");
  Matrix out(a.rows(), b.cols());
  gemm_into(a, b, out, true, block);
  return out;
}

Matrix gemm_nt(const Matrix& a, const Matrix& b, std::size_t block) {
  require_nonempty(a, "gemm_nt");
  require_nonempty(b, "gemm_nt");
  if (a.cols() != b.cols()) throw ShapeError("gemm_nt: inner dimensions differ");
  Matrix out(a.rows(), b.rows());
  gemm_nt_into(a, b, out, true, block);
  return out;
}

Matrix gemm_tn(const Matrix& a, const Matrix& b, std::size_t block) {
  require_nonempty(a, "gemm_tn");
  require_nonempty(b, "gemm_tn");
  if (a.rows() != b.rows()) throw ShapeError("gemm_tn: inner dimensions differ");
  Matrix out(a.cols(), b.cols());
  gemm_tn_into(a, b, out, true, block);
  return out;
}

Matrix row_l2_normalize(const Matrix& m, double eps) {
  require_nonempty(m, "row_l2_normalize");
  if (!(eps > 0.0)) throw UsageError("row_l2_normalize: eps must be > 0");
  Matrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double* src = m.row(i);
    double ss = 0.0;
    for (std::size_t j = 0; j < m.cols(); ++j) ss += src[j] * src[j];
    const double inv = 1.0 / std::sqrt(ss + eps);
    double* dst = out.row(i);
    for (std::size_t j = 0; j < m.cols(); ++j) dst[j] = src[j] * inv;
  }
  return out;
}

void softmax_rows_inplace(Matrix& m) {
  require_nonempty(m, "softmax_rows");
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double* row = m.row(i);
    double mx = row[0];
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (!std::isfinite(row[j])) throw NumericError("softmax_rows: non-finite input");
      mx = std::max(mx, row[j]);
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < m.cols(); ++j) {
      row[j] = std::exp(row[j] - mx);
      sum += row[j];
    }
    const double inv = 1.0 / sum;
    for (std::size_t j = 0; j < m.cols(); ++j) row[j] *= inv;
  }
}

Matrix softmax_rows(const Matrix& m) {
  Matrix out = m;
  softmax_rows_inplace(out);
  return out;
}

double elu(double x, double alpha) {
  return x > 0.0 ? x : alpha * (std::exp(x) - 1.0);
}

double elu_prime(double x, double alpha) {
  return x > 0.0 ? 1.0 : alpha * std::exp(x);
}

namespace {
constexpr double kGeluScale = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluCubic = 0.044715;
}  // namespace

double gelu(double x) {
  const double u = kGeluScale * (x + kGeluCubic * x * x * x);
  return 0.5 * x * (1.0 + std::tanh(u));
}

double gelu_prime(double x) {
  const double u = kGeluScale * (x + kGeluCubic * x * x * x);
  const double t = std::tanh(u);
  const double du = kGeluScale * (1.0 + 3.0 * kGeluCubic * x * x);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

Matrix transpose(const Matrix& m) {
  require_nonempty(m, "transpose");
  Matrix out(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(j, i) = m(i, j);
  return out;
}

void scale_inplace(Matrix& m, double c) {
  double* p = m.data();
  for (std::size_t i = 0; i < m.size(); ++i) p[i] *= c;
}

void add_inplace(Matrix& dst, const Matrix& src, double scale) {
  require_same_shape(dst, src, "add_inplace");
  double* d = dst.data();
  const double* s = src.data();
  for (std::size_t i = 0; i < dst.size(); ++i) d[i] += scale * s[i];
}

void hadamard_inplace(Matrix& dst, const Matrix& src) {
  require_same_shape(dst, src, "hadamard_inplace");
  double* d = dst.data();
  const double* s = src.data();
  for (std::size_t i = 0; i < dst.size(); ++i) d[i] *= s[i];
}

double dot_all(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "dot_all");
  double acc = 0.0;
  const double* pa = a.data();
  const double* pb = b.data();
  for (std::size_t i = 0; i < a.size(); ++i) acc += pa[i] * pb[i];
  return acc;
}

double sum_squares(const Matrix& m) {
  double acc = 0.0;
  const double* p = m.data();
  for (std::size_t i = 0; i < m.size(); ++i) acc += p[i] * p[i];
  return acc;
}

}  // namespace cosrec
