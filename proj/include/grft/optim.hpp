#pragma once

#include <cstdint>

#include "grft/masking.hpp"
#include "grft/model.hpp"

namespace grft {

struct OptimConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double base_lr = 1e-3;
  std::size_t warmup_epochs = 0;
  std::size_t total_epochs = 1;
};

void validate(const OptimConfig& cfg);

// Linear warmup from 0 to base_lr over warmup_epochs, then a half cosine
// down to 0 at total_epochs.
double cosine_warmup_lr(std::size_t epoch, const OptimConfig& cfg);

struct AdamState {
  GradientSet m;
  GradientSet v;
  std::uint64_t t = 0;

  static AdamState zeros_like(const ModelParams& model);
};

// One Adam step on the masked gradient g (.) M:
//   m = b1 m + (1-b1) g,  v = b2 v + (1-b2) g^2
//   W -= lr * m_hat / sqrt(v_hat + eps)
// Entries outside the mask are skipped outright, so W, m and v keep their
// exact bits there. Bias entries follow LayerMask::bias_trainable. Throws
// NumericError before touching anything if the gradient is not finite.
void masked_adam_step(ModelParams& model, AdamState& state, const GradientSet& grad,
                      const GradientMaskSet& masks, double lr, const OptimConfig& cfg);

// Unmasked Adam with the same update formula.
void adam_step(ModelParams& model, AdamState& state, const GradientSet& grad, double lr,
               const OptimConfig& cfg);

}  // namespace grft
