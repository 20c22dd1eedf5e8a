#pragma once

#include <span>

#include "grft/matrix.hpp"

// Dense kernels in two flavours with identical arithmetic. Every output entry
// is accumulated from 0.0 with the inner index ascending, so the parallel
// kernels (which only split the independent output rows/columns across
// threads) are bitwise equal to the serial ones.
//
// Shapes are not checked here; callers in numeric.hpp validate.

namespace grft::kernels {

namespace serial {

// out = a * b
void matmul(const Matrix& a, const Matrix& b, Matrix& out);
// out = a^T * b
void matmul_tn(const Matrix& a, const Matrix& b, Matrix& out);
// out = a * b^T
void matmul_nt(const Matrix& a, const Matrix& b, Matrix& out);
// out[i] = sum_j a(i,j)^2
void row_sq_sums(const Matrix& a, std::span<double> out);
// out[j] = sum_i a(i,j)^2
void col_sq_sums(const Matrix& a, std::span<double> out);

}  // namespace serial

namespace parallel {

void matmul(const Matrix& a, const Matrix& b, Matrix& out);
void matmul_tn(const Matrix& a, const Matrix& b, Matrix& out);
void matmul_nt(const Matrix& a, const Matrix& b, Matrix& out);
void row_sq_sums(const Matrix& a, std::span<double> out);
void col_sq_sums(const Matrix& a, std::span<double> out);

}  // namespace parallel

// True when the library was built with OpenMP.
bool parallel_enabled() noexcept;

// Work (multiply-adds) above which the dispatching wrappers use the parallel
// kernels.
inline constexpr std::size_t kParallelThreshold = 1u << 16;

}  // namespace grft::kernels
