#include "grft/optim.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "grft/error.hpp"
#include "grft/numeric.hpp"

namespace grft {

void validate(const OptimConfig& cfg) {
  if (!(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0)) throw ConfigError("optim.beta1 must be in [0, 1)");
  if (!(cfg.beta2 >= 0.0 && cfg.beta2 < 1.0)) throw ConfigError("optim.beta2 must be in [0, 1)");
  if (!(cfg.epsilon > 0.0) || !std::isfinite(cfg.epsilon))
    throw ConfigError("optim.epsilon must be positive");
  if (!(cfg.base_lr > 0.0) || !std::isfinite(cfg.base_lr))
    throw ConfigError("optim.lr must be positive");
  if (cfg.warmup_epochs >= cfg.total_epochs)
    throw ConfigError("optim.warmup_epochs (" + std::to_string(cfg.warmup_epochs) +
                      ") must be below epochs (" + std::to_string(cfg.total_epochs) + ")");
}

double cosine_warmup_lr(std::size_t epoch, const OptimConfig& cfg) {
  if (epoch > cfg.total_epochs)
    throw ConfigError("cosine_warmup_lr: epoch " + std::to_string(epoch) + " beyond " +
                      std::to_string(cfg.total_epochs));
  const auto e = static_cast<double>(epoch);
  const auto w = static_cast<double>(cfg.warmup_epochs);
  const auto t = static_cast<double>(cfg.total_epochs);
  if (epoch < cfg.warmup_epochs) return cfg.base_lr * e / w;
  return cfg.base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * (e - w) / (t - w)));
}

AdamState AdamState::zeros_like(const ModelParams& model) {
  return {GradientSet::zeros_like(model), GradientSet::zeros_like(model), 0};
}

namespace {

struct StepConstants {
  double b1, b2, c1, c2, eps, lr;
};

inline void update_entry(double& w, double& m, double& v, double g, const StepConstants& k) {
  m = k.b1 * m + (1.0 - k.b1) * g;
  v = k.b2 * v + (1.0 - k.b2) * g * g;
  const double m_hat = m / k.c1;
  const double v_hat = v / k.c2;
  w -= k.lr * m_hat / std::sqrt(v_hat + k.eps);
}

void check_step_inputs(const ModelParams& model, const AdamState& state, const GradientSet& grad) {
  if (!grad.same_shape(model) || !state.m.same_shape(model) || !state.v.same_shape(model))
    throw ShapeError("adam: gradient/state shapes do not mirror the model");
  for (std::size_t l = 0; l < grad.layers.size(); ++l) {
    if (!all_finite(grad.layers[l].weight.data()) || !all_finite(grad.layers[l].bias))
      throw NumericError("adam: non-finite gradient at layer " + std::to_string(l));
  }
}

StepConstants constants(std::uint64_t t, double lr, const OptimConfig& cfg) {
  const auto tt = static_cast<double>(t);
  return {cfg.beta1, cfg.beta2, 1.0 - std::pow(cfg.beta1, tt), 1.0 - std::pow(cfg.beta2, tt),
          cfg.epsilon, lr};
}

}  // namespace

void masked_adam_step(ModelParams& model, AdamState& state, const GradientSet& grad,
                      const GradientMaskSet& masks, double lr, const OptimConfig& cfg) {
  check_step_inputs(model, state, grad);
  if (!masks.aligned_with(model)) throw ShapeError("adam: masks not aligned with model");
  state.t += 1;
  const auto k = constants(state.t, lr, cfg);
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    auto& layer = model.layers[l];
    const auto& mask = masks.layers[l];
    const auto& g = grad.layers[l];
    auto& m = state.m.layers[l];
    auto& v = state.v.layers[l];
    for (std::size_t i = 0; i < layer.weight.rows(); ++i) {
      for (std::size_t j = 0; j < layer.weight.cols(); ++j) {
        if (!mask.selects(i, j)) continue;
        update_entry(layer.weight(i, j), m.weight(i, j), v.weight(i, j), g.weight(i, j), k);
      }
      if (mask.bias_trainable(i)) update_entry(layer.bias[i], m.bias[i], v.bias[i], g.bias[i], k);
    }
  }
}

void adam_step(ModelParams& model, AdamState& state, const GradientSet& grad, double lr,
               const OptimConfig& cfg) {
  check_step_inputs(model, state, grad);
  state.t += 1;
  const auto k = constants(state.t, lr, cfg);
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    auto& layer = model.layers[l];
    const auto& g = grad.layers[l];
    auto& m = state.m.layers[l];
    auto& v = state.v.layers[l];
    auto w = layer.weight.data();
    const auto gw = g.weight.data();
    auto mw = m.weight.data();
    auto vw = v.weight.data();
    for (std::size_t i = 0; i < w.size(); ++i) update_entry(w[i], mw[i], vw[i], gw[i], k);
    for (std::size_t i = 0; i < layer.bias.size(); ++i)
      update_entry(layer.bias[i], m.bias[i], v.bias[i], g.bias[i], k);
  }
}

}  // namespace grft
