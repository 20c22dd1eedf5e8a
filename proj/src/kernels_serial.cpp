#include "grft/kernels.hpp"

namespace grft::kernels::serial {

void matmul(const Matrix& a, const Matrix& b, Matrix& out) {
  const std::size_t n = a.rows(), inner = a.cols(), m = b.cols();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double acc = 0.0;
      for (std::size_t r = 0; r < inner; ++r) acc += a(i, r) * b(r, j);
      out(i, j) = acc;
    }
  }
}

void matmul_tn(const Matrix& a, const Matrix& b, Matrix& out) {
  const std::size_t n = a.cols(), inner = a.rows(), m = b.cols();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double acc = 0.0;
      for (std::size_t r = 0; r < inner; ++r) acc += a(r, i) * b(r, j);
      out(i, j) = acc;
    }
  }
}

void matmul_nt(const Matrix& a, const Matrix& b, Matrix& out) {
  const std::size_t n = a.rows(), inner = a.cols(), m = b.rows();
  for (std::size_t i = 0; i < n; ++i) {
    const auto ai = a.row(i);
    for (std::size_t j = 0; j < m; ++j) {
      const auto bj = b.row(j);
      double acc = 0.0;
      for (std::size_t r = 0; r < inner; ++r) acc += ai[r] * bj[r];
      out(i, j) = acc;
    }
  }
}

void row_sq_sums(const Matrix& a, std::span<double> out) {
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double acc = 0.0;
    for (double v : a.row(i)) acc += v * v;
    out[i] = acc;
  }
}

void col_sq_sums(const Matrix& a, std::span<double> out) {
  for (std::size_t j = 0; j < a.cols(); ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) acc += a(i, j) * a(i, j);
    out[j] = acc;
  }
}

}  // namespace grft::kernels::serial
