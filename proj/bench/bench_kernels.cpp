// Serial reference kernels vs their OpenMP counterparts.

#include <benchmark/benchmark.h>

#include "grft/kernels.hpp"
#include "grft/losses.hpp"
#include "grft/rng.hpp"

namespace {

grft::Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  grft::Matrix m(rows, cols);
  grft::Rng rng(seed);
  for (double& v : m.data()) v = rng.normal();
  return m;
}

template <void (*Kernel)(const grft::Matrix&, const grft::Matrix&, grft::Matrix&)>
void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_matrix(n, n, 1), b = random_matrix(n, n, 2);
  grft::Matrix out(n, n);
  for (auto _ : state) {
    Kernel(a, b, out);
    benchmark::DoNotOptimize(out.data().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(n * n * n));
}

template <void (*Kernel)(const grft::Matrix&, std::span<double>)>
void BM_SqSums(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto h = random_matrix(n, n, 3);
  std::vector<double> out(n);
  for (auto _ : state) {
    Kernel(h, out);
    benchmark::DoNotOptimize(out.data());
  }
}

void BM_SclLoss(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto f = random_matrix(n, 32, 4);
  grft::Labels y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = i % 4;
  for (auto _ : state) benchmark::DoNotOptimize(grft::scl_loss(f, y, 0.1).loss);
}

}  // namespace

BENCHMARK(BM_Matmul<grft::kernels::serial::matmul>)->Name("matmul/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_Matmul<grft::kernels::parallel::matmul>)->Name("matmul/parallel")->Arg(64)->Arg(256);
BENCHMARK(BM_Matmul<grft::kernels::serial::matmul_nt>)->Name("matmul_nt/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_Matmul<grft::kernels::parallel::matmul_nt>)->Name("matmul_nt/parallel")->Arg(64)->Arg(256);
BENCHMARK(BM_SqSums<grft::kernels::serial::row_sq_sums>)->Name("row_scores/serial")->Arg(768);
BENCHMARK(BM_SqSums<grft::kernels::parallel::row_sq_sums>)->Name("row_scores/parallel")->Arg(768);
BENCHMARK(BM_SqSums<grft::kernels::serial::col_sq_sums>)->Name("col_scores/serial")->Arg(768);
BENCHMARK(BM_SqSums<grft::kernels::parallel::col_sq_sums>)->Name("col_scores/parallel")->Arg(768);
BENCHMARK(BM_SclLoss)->Name("scl_loss")->Arg(256)->Arg(800);

BENCHMARK_MAIN();
