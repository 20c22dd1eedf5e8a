#pragma once

#include <functional>
#include <span>
#include <string_view>

#include "grft/matrix.hpp"

namespace grft {

// Products. Accumulation runs over the inner index in ascending order, and
// the result does not depend on whether the parallel kernels were chosen.
Matrix matmul(const Matrix& a, const Matrix& b);
// a^T * b
Matrix matmul_tn(const Matrix& a, const Matrix& b);
// a * b^T
Matrix matmul_nt(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& a);

// Sum of squares, row-major order.
double frobenius_sq(const Matrix& a);
// Frobenius inner product, row-major order.
double inner(const Matrix& a, const Matrix& b);
Matrix elementwise_mul(const Matrix& a, const Matrix& b);

bool all_finite(std::span<const double> values) noexcept;
// Throws NumericError naming `what` if any entry is NaN or infinite.
void require_finite(std::span<const double> values, std::string_view what);

using MatrixFunction = std::function<double(const Matrix&)>;

// Central differences (f(x + h e_ij) - f(x - h e_ij)) / 2h for every entry.
Matrix finite_diff_grad(const MatrixFunction& f, const Matrix& at, double h);

}  // namespace grft
