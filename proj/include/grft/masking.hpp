#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "grft/losses.hpp"
#include "grft/matrix.hpp"
#include "grft/model.hpp"

namespace grft {

// How a maskable layer is selected from its gradient.
enum class MaskVariant { row, col, sparse, full };

std::string_view to_string(MaskVariant v) noexcept;
MaskVariant parse_variant(std::string_view name);

using IndexSet = std::vector<std::size_t>;

struct RowIndices {
  IndexSet indices;
};
struct ColIndices {
  IndexSet indices;
};
struct SparsePerNeuron {
  std::vector<IndexSet> per_row;
};
struct DenseBits {
  std::vector<std::uint8_t> bits;  // row-major 0/1
};
struct FullMask {};

using MaskSelection = std::variant<RowIndices, ColIndices, SparsePerNeuron, DenseBits, FullMask>;

// Which entries of one weight matrix (and its bias) may be updated.
class LayerMask {
 public:
  // Validates bounds and strict ordering of indices.
  LayerMask(std::size_t rows, std::size_t cols, MaskSelection selection);

  static LayerMask full(std::size_t rows, std::size_t cols) { return {rows, cols, FullMask{}}; }
  static LayerMask none(std::size_t rows, std::size_t cols) { return {rows, cols, RowIndices{}}; }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  const MaskSelection& selection() const noexcept { return selection_; }
  // "row" | "col" | "sparse" | "dense" | "full"
  std::string_view kind() const noexcept;

  bool selects(std::size_t i, std::size_t j) const;
  // Row-selected (or row-touching) neurons train their bias; column
  // selections leave every bias frozen.
  bool bias_trainable(std::size_t i) const;
  std::size_t selected_weights() const;
  std::size_t trainable_biases() const;

  friend bool operator==(const LayerMask& a, const LayerMask& b);

 private:
  std::size_t rows_;
  std::size_t cols_;
  MaskSelection selection_;
};

struct GradientMaskSet {
  std::vector<LayerMask> layers;

  bool aligned_with(const ModelParams& model) const noexcept;
  friend bool operator==(const GradientMaskSet&, const GradientMaskSet&) = default;
};

// S_i = sum_j h_ij^2 (j ascending).
std::vector<double> row_scores(const Matrix& h);
// S_j = sum_i h_ij^2 (i ascending).
std::vector<double> col_scores(const Matrix& h);

// The k largest scores, ties to the lower index, returned ascending.
IndexSet topk_indices(std::span<const double> scores, std::size_t k);

LayerMask build_mask(const Matrix& h, std::size_t k, MaskVariant variant);

Matrix to_dense(const LayerMask& mask);

// ||h - h (.) M||^2
double mask_objective(const Matrix& h, const LayerMask& mask);
// ||h (.) M||^2
double retained_energy(const Matrix& h, const LayerMask& mask);

// Exhaustive search over k-subsets of rows in lexicographic order, keeping
// the first minimizer of mask_objective. At most kBruteForceMaxRows rows.
inline constexpr std::size_t kBruteForceMaxRows = 20;
IndexSet brute_force_best_rows(const Matrix& h, std::size_t k);
IndexSet brute_force_best_cols(const Matrix& h, std::size_t k);

// Bits to store the selection: indices take ceil(log2(extent)) bits each,
// dense masks one bit per entry, full masks nothing.
std::uint64_t storage_bits(const LayerMask& mask);
std::uint64_t storage_bits(const GradientMaskSet& masks);
std::uint64_t ceil_log2(std::uint64_t n) noexcept;

// Throws ConfigError naming the first layer that cannot supply k rows/cols.
void validate_k(const ModelParams& model, std::size_t k, MaskVariant variant);

struct MaskData {
  const Matrix& x;
  std::span<const std::size_t> labels;
};

// Mean SCL gradient per layer at `pre` (one pass over the whole subset),
// averaged over its samples.
GradientSet scl_gradient(const ModelParams& pre, const MaskData& data, double tau);

// Masks from the SCL gradient at the pretrained weights. Non-head layers get
// build_mask(k, variant); the head is always Full. variant=full gives all Full.
GradientMaskSet compute_mask_set(const ModelParams& pre, const MaskData& data, std::size_t k,
                                 MaskVariant variant, double tau);

// Head-only selection (linear probe).
GradientMaskSet head_only_masks(const ModelParams& model);
GradientMaskSet full_masks(const ModelParams& model);

// (selected weights + trainable biases) / all parameters.
double trainable_fraction(const ModelParams& model, const GradientMaskSet& masks);
std::size_t trainable_count(const ModelParams& model, const GradientMaskSet& masks);

}  // namespace grft
