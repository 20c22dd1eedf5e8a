#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "grft/losses.hpp"
#include "grft/matrix.hpp"
#include "grft/model.hpp"

namespace grft {

struct Dataset {
  Matrix x;  // samples x dim
  Labels y;
  std::size_t num_classes = 0;

  std::size_t size() const noexcept { return y.size(); }
  std::size_t dim() const noexcept { return x.cols(); }
  Dataset subset(std::span<const std::size_t> indices) const;
};

void validate(const Dataset& data);

// Domain shift applied to the source class means to obtain target means:
// a rotation by `rotation` radians in each of floor(dim/2) random orthogonal
// planes, then a per-class offset of length `offset` in a random direction.
struct ShiftConfig {
  double rotation = 0.0;
  double offset = 0.0;
};

struct TaskConfig {
  std::size_t dim = 16;
  std::size_t classes = 4;
  std::size_t per_class = 200;       // source and target-train samples per class
  std::size_t test_per_class = 200;  // target-test samples per class
  double noise_sigma = 0.3;
  ShiftConfig shift;
};

struct TaskPair {
  Dataset source;
  Dataset target_train;
  Dataset target_test;
  ShiftConfig shift;
  Matrix source_means;  // classes x dim, unit rows
  Matrix target_means;
};

// Isotropic Gaussian clusters around unit-norm random means.
TaskPair gen_task(const TaskConfig& cfg, std::uint64_t seed);

// Seeded permutation cut into n contiguous parts; the first (size mod n)
// parts hold one extra sample.
std::vector<Dataset> partition_subsets(const Dataset& data, std::size_t n, std::uint64_t seed);

// SCL loss of a whole dataset at fixed parameters, divided by its size.
double mean_scl_loss(const ModelParams& model, const Dataset& data, double tau);

struct SubsetChoice {
  std::size_t index = 0;
  std::vector<double> losses;  // per subset, mean_scl_loss
};

// Index of the subset with the smallest mean SCL loss (ties to the lower
// index). Parameters are only read.
SubsetChoice select_mask_subset(const ModelParams& pre, std::span<const Dataset> subsets,
                                double tau);

// CSV with header y,x0,...,x{d-1}.
void write_dataset_csv(const Dataset& data, const std::filesystem::path& path);
// num_classes is max label + 1 unless a larger value is given.
Dataset read_dataset_csv(const std::filesystem::path& path, std::size_t num_classes = 0);

}  // namespace grft
