#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "grft/matrix.hpp"
#include "grft/model.hpp"

namespace grft {

using Labels = std::vector<std::size_t>;

struct LossGrad {
  double loss = 0.0;
  Matrix grad;
};

// Mean over the batch of -log softmax(logits)[label].
LossGrad cross_entropy(const Matrix& logits, std::span<const std::size_t> labels);

// Norm floor used when L2-normalizing feature rows: z = f / max(|f|, eps).
inline constexpr double kFeatureNormEps = 1e-12;

// Supervised contrastive loss summed over anchors,
//   sum_i -1/|P(i)| sum_{p in P(i)} log( exp(z_i.z_p/tau) / sum_{a != i} exp(z_i.z_a/tau) )
// on row-normalized features. Anchors without a positive contribute 0. The
// gradient is with respect to the raw (unnormalized) feature rows.
LossGrad scl_loss(const Matrix& features, std::span<const std::size_t> labels, double tau);

enum class NormKind { l2, l1, none };

std::string_view to_string(NormKind norm) noexcept;
NormKind parse_norm(std::string_view name);

// Layers pulled toward the pretrained snapshot: the `last_l` non-head layers
// nearest the head, plus optionally the embedding and head layers.
struct RegularSet {
  std::size_t last_l = 0;
  bool include_embedding = false;
  bool include_head = false;

  bool contains(const ModelParams& model, std::size_t layer) const;
};

struct RegConfig {
  double lambda = 0.0;
  NormKind norm = NormKind::l2;
  RegularSet set;

  bool active() const noexcept { return norm != NormKind::none && lambda != 0.0; }
};

void validate(const RegConfig& cfg, const ModelParams& model);

struct RegPenalty {
  double loss = 0.0;
  GradientSet grad;
};

// lambda * sum_{l in R} ||W^l - W_pre^l|| over weights and biases, squared
// Frobenius for l2 and absolute sum for l1 (sign(0) = 0).
RegPenalty reg_penalty(const ModelParams& model, const ModelParams& pre, const RegConfig& cfg);

struct Batch {
  const Matrix& x;
  std::span<const std::size_t> labels;
};

struct CombinedLoss {
  double loss_r = 0.0;   // cross entropy + penalty
  double cross = 0.0;    // cross entropy alone
  GradientSet grad;
};

// L_R = cross_entropy + reg_penalty with the exact summed gradient.
CombinedLoss combined_grad(const ModelParams& model, const ModelParams& pre, const Batch& batch,
                           const RegConfig& cfg);

}  // namespace grft
