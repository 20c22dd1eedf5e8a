#include "grft/numeric.hpp"

#include <cmath>
#include <string>

#include "grft/error.hpp"
#include "grft/kernels.hpp"

namespace grft {

namespace {

std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

bool use_parallel(std::size_t n, std::size_t inner, std::size_t m) {
  return kernels::parallel_enabled() && n * inner * m >= kernels::kParallelThreshold;
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows())
    throw ShapeError("matmul: " + shape_str(a) + " * " + shape_str(b));
  Matrix out(a.rows(), b.cols());
  if (use_parallel(a.rows(), a.cols(), b.cols()))
    kernels::parallel::matmul(a, b, out);
  else
    kernels::serial::matmul(a, b, out);
  require_finite(out.data(), "matmul");
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows())
    throw ShapeError("matmul_tn: " + shape_str(a) + "^T * " + shape_str(b));
  Matrix out(a.cols(), b.cols());
  if (use_parallel(a.cols(), a.rows(), b.cols()))
    kernels::parallel::matmul_tn(a, b, out);
  else
    kernels::serial::matmul_tn(a, b, out);
  require_finite(out.data(), "matmul_tn");
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols())
    throw ShapeError("matmul_nt: " + shape_str(a) + " * " + shape_str(b) + "^T");
  Matrix out(a.rows(), b.rows());
  if (use_parallel(a.rows(), a.cols(), b.rows()))
    kernels::parallel::matmul_nt(a, b, out);
  else
    kernels::serial::matmul_nt(a, b, out);
  require_finite(out.data(), "matmul_nt");
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

double frobenius_sq(const Matrix& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += v * v;
  return acc;
}

double inner(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw ShapeError("inner: " + shape_str(a) + " vs " + shape_str(b));
  const auto x = a.data();
  const auto y = b.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * y[i];
  return acc;
}

Matrix elementwise_mul(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b))
    throw ShapeError("elementwise_mul: " + shape_str(a) + " vs " + shape_str(b));
  Matrix out(a.rows(), a.cols());
  const auto x = a.data();
  const auto y = b.data();
  auto z = out.data();
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = x[i] * y[i];
  require_finite(out.data(), "elementwise_mul");
  return out;
}

bool all_finite(std::span<const double> values) noexcept {
  for (double v : values)
    if (!std::isfinite(v)) return false;
  return true;
}

void require_finite(std::span<const double> values, std::string_view what) {
  if (!all_finite(values)) throw NumericError(std::string(what) + ": non-finite value");
}

Matrix finite_diff_grad(const MatrixFunction& f, const Matrix& at, double h) {
  if (!(h > 0.0)) throw ConfigError("finite_diff_grad: step must be positive");
  Matrix grad(at.rows(), at.cols());
  Matrix probe = at;
  for (std::size_t i = 0; i < at.rows(); ++i) {
    for (std::size_t j = 0; j < at.cols(); ++j) {
      const double x0 = at(i, j);
      probe(i, j) = x0 + h;
      const double up = f(probe);
      probe(i, j) = x0 - h;
      const double down = f(probe);
      probe(i, j) = x0;
      if (!std::isfinite(up) || !std::isfinite(down))
        throw NumericError("finite_diff_grad: non-finite function value");
      grad(i, j) = (up - down) / (2.0 * h);
    }
  }
  return grad;
}

}  // namespace grft
