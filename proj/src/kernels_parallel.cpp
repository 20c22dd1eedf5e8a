#include "grft/kernels.hpp"

#include <cstdint>

namespace grft::kernels {

bool parallel_enabled() noexcept {
#ifdef GRFT_HAVE_OPENMP
  return true;
#else
  return false;
#endif
}

namespace parallel {

// Loop indices are signed for OpenMP 2.x compatibility on some toolchains.
using idx_t = std::int64_t;

void matmul(const Matrix& a, const Matrix& b, Matrix& out) {
  const idx_t n = static_cast<idx_t>(a.rows());
  const std::size_t inner = a.cols(), m = b.cols();
#pragma omp parallel for schedule(static)
  for (idx_t i = 0; i < n; ++i) {
    const auto row = static_cast<std::size_t>(i);
    for (std::size_t j = 0; j < m; ++j) {
      double acc = 0.0;
      for (std::size_t r = 0; r < inner; ++r) acc += a(row, r) * b(r, j);
      out(row, j) = acc;
    }
  }
}

void matmul_tn(const Matrix& a, const Matrix& b, Matrix& out) {
  const idx_t n = static_cast<idx_t>(a.cols());
  const std::size_t inner = a.rows(), m = b.cols();
#pragma omp parallel for schedule(static)
  for (idx_t i = 0; i < n; ++i) {
    const auto col = static_cast<std::size_t>(i);
    for (std::size_t j = 0; j < m; ++j) {
      double acc = 0.0;
      for (std::size_t r = 0; r < inner; ++r) acc += a(r, col) * b(r, j);
      out(col, j) = acc;
    }
  }
}

void matmul_nt(const Matrix& a, const Matrix& b, Matrix& out) {
  const idx_t n = static_cast<idx_t>(a.rows());
  const std::size_t inner = a.cols(), m = b.rows();
#pragma omp parallel for schedule(static)
  for (idx_t i = 0; i < n; ++i) {
    const auto ai = a.row(static_cast<std::size_t>(i));
    for (std::size_t j = 0; j < m; ++j) {
      const auto bj = b.row(j);
      double acc = 0.0;
      for (std::size_t r = 0; r < inner; ++r) acc += ai[r] * bj[r];
      out(static_cast<std::size_t>(i), j) = acc;
    }
  }
}

void row_sq_sums(const Matrix& a, std::span<double> out) {
  const idx_t n = static_cast<idx_t>(a.rows());
#pragma omp parallel for schedule(static)
  for (idx_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (double v : a.row(static_cast<std::size_t>(i))) acc += v * v;
    out[static_cast<std::size_t>(i)] = acc;
  }
}

void col_sq_sums(const Matrix& a, std::span<double> out) {
  const idx_t n = static_cast<idx_t>(a.cols());
  const std::size_t rows = a.rows();
#pragma omp parallel for schedule(static)
  for (idx_t j = 0; j < n; ++j) {
    const auto col = static_cast<std::size_t>(j);
    double acc = 0.0;
    for (std::size_t i = 0; i < rows; ++i) acc += a(i, col) * a(i, col);
    out[col] = acc;
  }
}

}  // namespace parallel
}  // namespace grft::kernels
