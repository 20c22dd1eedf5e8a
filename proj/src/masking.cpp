#include "grft/masking.hpp"

#include <algorithm>
#include <bit>
#include <numeric>
#include <string>

#include "grft/error.hpp"
#include "grft/kernels.hpp"
#include "grft/numeric.hpp"

namespace grft {

std::string_view to_string(MaskVariant v) noexcept {
  switch (v) {
    case MaskVariant::row: return "row";
    case MaskVariant::col: return "col";
    case MaskVariant::sparse: return "sparse";
    case MaskVariant::full: return "full";
  }
  return "full";
}

MaskVariant parse_variant(std::string_view name) {
  if (name == "row") return MaskVariant::row;
  if (name == "col") return MaskVariant::col;
  if (name == "sparse") return MaskVariant::sparse;
  if (name == "full") return MaskVariant::full;
  throw ConfigError("unknown mask variant '" + std::string(name) + "'");
}

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

void check_indices(const IndexSet& idx, std::size_t bound, std::string_view what) {
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= bound)
      throw InputError(std::string(what) + ": index " + std::to_string(idx[i]) +
                       " out of range " + std::to_string(bound));
    if (i > 0 && idx[i] <= idx[i - 1])
      throw InputError(std::string(what) + ": indices must be strictly increasing");
  }
}

}  // namespace

LayerMask::LayerMask(std::size_t rows, std::size_t cols, MaskSelection selection)
    : rows_(rows), cols_(cols), selection_(std::move(selection)) {
  std::visit(overloaded{
                 [&](const RowIndices& s) { check_indices(s.indices, rows_, "row mask"); },
                 [&](const ColIndices& s) { check_indices(s.indices, cols_, "col mask"); },
                 [&](const SparsePerNeuron& s) {
                   if (s.per_row.size() != rows_)
                     throw InputError("sparse mask: need one index list per row");
                   for (const auto& r : s.per_row) check_indices(r, cols_, "sparse mask");
                 },
                 [&](const DenseBits& s) {
                   if (s.bits.size() != rows_ * cols_)
                     throw InputError("dense mask: bit count does not match shape");
                   for (auto b : s.bits)
                     if (b > 1) throw InputError("dense mask: entries must be 0 or 1");
                 },
                 [](const FullMask&) {},
             },
             selection_);
}

std::string_view LayerMask::kind() const noexcept {
  return std::visit(overloaded{
                        [](const RowIndices&) { return std::string_view("row"); },
                        [](const ColIndices&) { return std::string_view("col"); },
                        [](const SparsePerNeuron&) { return std::string_view("sparse"); },
                        [](const DenseBits&) { return std::string_view("dense"); },
                        [](const FullMask&) { return std::string_view("full"); },
                    },
                    selection_);
}

bool LayerMask::selects(std::size_t i, std::size_t j) const {
  return std::visit(
      overloaded{
          [&](const RowIndices& s) { return std::binary_search(s.indices.begin(), s.indices.end(), i); },
          [&](const ColIndices& s) { return std::binary_search(s.indices.begin(), s.indices.end(), j); },
          [&](const SparsePerNeuron& s) {
            const auto& r = s.per_row[i];
            return std::binary_search(r.begin(), r.end(), j);
          },
          [&](const DenseBits& s) { return s.bits[i * cols_ + j] != 0; },
          [](const FullMask&) { return true; },
      },
      selection_);
}

bool LayerMask::bias_trainable(std::size_t i) const {
  return std::visit(
      overloaded{
          [&](const RowIndices& s) { return std::binary_search(s.indices.begin(), s.indices.end(), i); },
          [](const ColIndices&) { return false; },
          [&](const SparsePerNeuron& s) { return !s.per_row[i].empty(); },
          [&](const DenseBits& s) {
            const auto* row = s.bits.data() + i * cols_;
            return std::any_of(row, row + cols_, [](std::uint8_t b) { return b != 0; });
          },
          [](const FullMask&) { return true; },
      },
      selection_);
}

std::size_t LayerMask::selected_weights() const {
  return std::visit(
      overloaded{
          [&](const RowIndices& s) { return s.indices.size() * cols_; },
          [&](const ColIndices& s) { return s.indices.size() * rows_; },
          [](const SparsePerNeuron& s) {
            std::size_t n = 0;
            for (const auto& r : s.per_row) n += r.size();
            return n;
          },
          [](const DenseBits& s) {
            return static_cast<std::size_t>(std::count(s.bits.begin(), s.bits.end(), 1));
          },
          [&](const FullMask&) { return rows_ * cols_; },
      },
      selection_);
}

std::size_t LayerMask::trainable_biases() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < rows_; ++i) n += bias_trainable(i) ? 1 : 0;
  return n;
}

bool operator==(const LayerMask& a, const LayerMask& b) {
  if (a.rows_ != b.rows_ || a.cols_ != b.cols_ || a.selection_.index() != b.selection_.index())
    return false;
  return std::visit(
      overloaded{
          [&](const RowIndices& s) { return s.indices == std::get<RowIndices>(b.selection_).indices; },
          [&](const ColIndices& s) { return s.indices == std::get<ColIndices>(b.selection_).indices; },
          [&](const SparsePerNeuron& s) {
            return s.per_row == std::get<SparsePerNeuron>(b.selection_).per_row;
          },
          [&](const DenseBits& s) { return s.bits == std::get<DenseBits>(b.selection_).bits; },
          [](const FullMask&) { return true; },
      },
      a.selection_);
}

bool GradientMaskSet::aligned_with(const ModelParams& model) const noexcept {
  if (layers.size() != model.layers.size()) return false;
  for (std::size_t l = 0; l < layers.size(); ++l)
    if (layers[l].rows() != model.layers[l].weight.rows() ||
        layers[l].cols() != model.layers[l].weight.cols())
      return false;
  return true;
}

std::vector<double> row_scores(const Matrix& h) {
  std::vector<double> s(h.rows());
  if (kernels::parallel_enabled() && h.size() >= kernels::kParallelThreshold)
    kernels::parallel::row_sq_sums(h, s);
  else
    kernels::serial::row_sq_sums(h, s);
  return s;
}

std::vector<double> col_scores(const Matrix& h) {
  std::vector<double> s(h.cols());
  if (kernels::parallel_enabled() && h.size() >= kernels::kParallelThreshold)
    kernels::parallel::col_sq_sums(h, s);
  else
    kernels::serial::col_sq_sums(h, s);
  return s;
}

IndexSet topk_indices(std::span<const double> scores, std::size_t k) {
  if (k < 1 || k > scores.size())
    throw ConfigError("topk: k=" + std::to_string(k) + " outside [1, " +
                      std::to_string(scores.size()) + "]");
  IndexSet order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  order.resize(k);
  std::sort(order.begin(), order.end());
  return order;
}

LayerMask build_mask(const Matrix& h, std::size_t k, MaskVariant variant) {
  switch (variant) {
    case MaskVariant::row:
      return {h.rows(), h.cols(), RowIndices{topk_indices(row_scores(h), k)}};
    case MaskVariant::col:
      return {h.rows(), h.cols(), ColIndices{topk_indices(col_scores(h), k)}};
    case MaskVariant::sparse: {
      SparsePerNeuron sel;
      sel.per_row.reserve(h.rows());
      std::vector<double> mag(h.cols());
      for (std::size_t i = 0; i < h.rows(); ++i) {
        const auto row = h.row(i);
        for (std::size_t j = 0; j < row.size(); ++j) mag[j] = std::abs(row[j]);
        sel.per_row.push_back(topk_indices(mag, k));
      }
      return {h.rows(), h.cols(), std::move(sel)};
    }
    case MaskVariant::full:
      return LayerMask::full(h.rows(), h.cols());
  }
  throw ConfigError("build_mask: unknown variant");
}

Matrix to_dense(const LayerMask& mask) {
  Matrix m(mask.rows(), mask.cols());
  std::visit(overloaded{
                 [&](const RowIndices& s) {
                   for (auto i : s.indices)
                     for (double& v : m.row(i)) v = 1.0;
                 },
                 [&](const ColIndices& s) {
                   for (std::size_t i = 0; i < m.rows(); ++i)
                     for (auto j : s.indices) m(i, j) = 1.0;
                 },
                 [&](const SparsePerNeuron& s) {
                   for (std::size_t i = 0; i < m.rows(); ++i)
                     for (auto j : s.per_row[i]) m(i, j) = 1.0;
                 },
                 [&](const DenseBits& s) {
                   auto d = m.data();
                   for (std::size_t i = 0; i < d.size(); ++i) d[i] = s.bits[i];
                 },
                 [&](const FullMask&) {
                   for (double& v : m.data()) v = 1.0;
                 },
             },
             mask.selection());
  return m;
}

namespace {

void check_mask_shape(const Matrix& h, const LayerMask& mask, std::string_view what) {
  if (h.rows() != mask.rows() || h.cols() != mask.cols())
    throw ShapeError(std::string(what) + ": gradient " + std::to_string(h.rows()) + "x" +
                     std::to_string(h.cols()) + " vs mask " + std::to_string(mask.rows()) + "x" +
                     std::to_string(mask.cols()));
}

}  // namespace

double mask_objective(const Matrix& h, const LayerMask& mask) {
  check_mask_shape(h, mask, "mask_objective");
  const Matrix m = to_dense(mask);
  const auto hv = h.data();
  const auto mv = m.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < hv.size(); ++i) {
    const double r = hv[i] - hv[i] * mv[i];
    acc += r * r;
  }
  return acc;
}

double retained_energy(const Matrix& h, const LayerMask& mask) {
  check_mask_shape(h, mask, "retained_energy");
  return frobenius_sq(elementwise_mul(h, to_dense(mask)));
}

IndexSet brute_force_best_rows(const Matrix& h, std::size_t k) {
  const std::size_t n = h.rows();
  if (n > kBruteForceMaxRows)
    throw GuardError("brute_force_best_rows: " + std::to_string(n) + " rows exceeds " +
                     std::to_string(kBruteForceMaxRows));
  if (k < 1 || k > n)
    throw ConfigError("brute_force_best_rows: k=" + std::to_string(k) + " outside [1, " +
                      std::to_string(n) + "]");
  IndexSet current(k);
  std::iota(current.begin(), current.end(), std::size_t{0});
  IndexSet best = current;
  double best_value = mask_objective(h, LayerMask(n, h.cols(), RowIndices{current}));
  while (true) {
    // next combination in lexicographic order
    std::size_t pos = k;
    while (pos > 0 && current[pos - 1] == n - k + pos - 1) --pos;
    if (pos == 0) break;
    ++current[pos - 1];
    for (std::size_t i = pos; i < k; ++i) current[i] = current[i - 1] + 1;
    const double value = mask_objective(h, LayerMask(n, h.cols(), RowIndices{current}));
    if (value < best_value) {
      best_value = value;
      best = current;
    }
  }
  return best;
}

IndexSet brute_force_best_cols(const Matrix& h, std::size_t k) {
  return brute_force_best_rows(transpose(h), k);
}

std::uint64_t ceil_log2(std::uint64_t n) noexcept {
  return n <= 1 ? 0 : static_cast<std::uint64_t>(std::bit_width(n - 1));
}

std::uint64_t storage_bits(const LayerMask& mask) {
  const std::uint64_t rows = mask.rows(), cols = mask.cols();
  return std::visit(overloaded{
                        [&](const RowIndices& s) { return s.indices.size() * ceil_log2(rows); },
                        [&](const ColIndices& s) { return s.indices.size() * ceil_log2(cols); },
                        [&](const SparsePerNeuron& s) {
                          std::uint64_t n = 0;
                          for (const auto& r : s.per_row) n += r.size();
                          return n * ceil_log2(cols);
                        },
                        [&](const DenseBits&) { return rows * cols; },
                        [](const FullMask&) { return std::uint64_t{0}; },
                    },
                    mask.selection());
}

std::uint64_t storage_bits(const GradientMaskSet& masks) {
  std::uint64_t total = 0;
  for (const auto& m : masks.layers) total += storage_bits(m);
  return total;
}

void validate_k(const ModelParams& model, std::size_t k, MaskVariant variant) {
  if (variant == MaskVariant::full) return;
  for (std::size_t l = 0; l + 1 < model.layers.size(); ++l) {
    const auto& w = model.layers[l].weight;
    const bool by_rows = variant == MaskVariant::row;
    const std::size_t extent = by_rows ? w.rows() : w.cols();
    if (k < 1 || k > extent)
      throw ConfigError("k=" + std::to_string(k) + " invalid for layer " + std::to_string(l) +
                        " (" + std::string(to_string(model.layers[l].role)) + ", " +
                        std::to_string(w.rows()) + "x" + std::to_string(w.cols()) + "): needs 1 <= k <= " +
                        (by_rows ? "rows=" : "cols=") + std::to_string(extent));
  }
}

GradientSet scl_gradient(const ModelParams& pre, const MaskData& data, double tau) {
  if (data.x.rows() == 0) throw InputError("mask data is empty");
  auto fwd = forward(pre, data.x);
  auto scl = scl_loss(fwd.features, data.labels, tau);
  auto grads = backward_from_features(pre, fwd.cache, scl.grad);
  const double inv_n = 1.0 / static_cast<double>(data.x.rows());
  for (auto& g : grads.layers) {
    for (double& v : g.weight.data()) v *= inv_n;
    for (double& v : g.bias) v *= inv_n;
  }
  return grads;
}

GradientMaskSet compute_mask_set(const ModelParams& pre, const MaskData& data, std::size_t k,
                                 MaskVariant variant, double tau) {
  validate(pre);
  if (variant == MaskVariant::full) return full_masks(pre);
  validate_k(pre, k, variant);
  const auto grads = scl_gradient(pre, data, tau);
  GradientMaskSet masks;
  for (std::size_t l = 0; l < pre.layers.size(); ++l) {
    if (pre.layers[l].role == Role::head)
      masks.layers.push_back(LayerMask::full(pre.layers[l].weight.rows(), pre.layers[l].weight.cols()));
    else
      masks.layers.push_back(build_mask(grads.layers[l].weight, k, variant));
  }
  return masks;
}

GradientMaskSet head_only_masks(const ModelParams& model) {
  GradientMaskSet masks;
  for (const auto& l : model.layers)
    masks.layers.push_back(l.role == Role::head ? LayerMask::full(l.weight.rows(), l.weight.cols())
                                                : LayerMask::none(l.weight.rows(), l.weight.cols()));
  return masks;
}

GradientMaskSet full_masks(const ModelParams& model) {
  GradientMaskSet masks;
  for (const auto& l : model.layers)
    masks.layers.push_back(LayerMask::full(l.weight.rows(), l.weight.cols()));
  return masks;
}

std::size_t trainable_count(const ModelParams& model, const GradientMaskSet& masks) {
  if (!masks.aligned_with(model)) throw ShapeError("trainable_fraction: masks not aligned with model");
  std::size_t n = 0;
  for (const auto& m : masks.layers) n += m.selected_weights() + m.trainable_biases();
  return n;
}

double trainable_fraction(const ModelParams& model, const GradientMaskSet& masks) {
  return static_cast<double>(trainable_count(model, masks)) /
         static_cast<double>(model.parameter_count());
}

}  // namespace grft
