#include "grft/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "grft/error.hpp"
#include "grft/numeric.hpp"

namespace grft {

LossGrad cross_entropy(const Matrix& logits, std::span<const std::size_t> labels) {
  const std::size_t n = logits.rows(), classes = logits.cols();
  if (labels.size() != n)
    throw InputError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(n) + " rows");
  if (n == 0) throw InputError("cross_entropy: empty batch");
  LossGrad out{0.0, Matrix(n, classes)};
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] >= classes)
      throw InputError("cross_entropy: label " + std::to_string(labels[i]) + " out of range [0, " +
                       std::to_string(classes) + ")");
    const auto row = logits.row(i);
    const double mx = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (double v : row) sum += std::exp(v - mx);
    const double log_z = mx + std::log(sum);
    out.loss += log_z - row[labels[i]];
    auto g = out.grad.row(i);
    for (std::size_t c = 0; c < classes; ++c) g[c] = std::exp(row[c] - log_z) * inv_n;
    g[labels[i]] -= inv_n;
  }
  out.loss *= inv_n;
  if (!std::isfinite(out.loss)) throw NumericError("cross_entropy: non-finite loss");
  return out;
}

namespace {

double sorted_sum(std::vector<double>& values) {
  std::sort(values.begin(), values.end());
  double acc = 0.0;
  for (double v : values) acc += v;
  return acc;
}

}  // namespace

LossGrad scl_loss(const Matrix& features, std::span<const std::size_t> labels, double tau) {
  const std::size_t n = features.rows(), d = features.cols();
  if (!(tau > 0.0) || !std::isfinite(tau))
    throw ConfigError("scl_loss: temperature must be positive, got " + std::to_string(tau));
  if (n < 2) throw InputError("scl_loss: batch needs at least 2 samples");
  if (labels.size() != n) throw InputError("scl_loss: label count mismatch");

  Matrix z(n, d);
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    double sq = 0.0;
    for (double v : features.row(i)) sq += v * v;
    norms[i] = std::max(std::sqrt(sq), kFeatureNormEps);
    auto zi = z.row(i);
    const auto fi = features.row(i);
    for (std::size_t k = 0; k < d; ++k) zi[k] = fi[k] / norms[i];
  }
  const Matrix sim = matmul_nt(z, z);

  // coeff(i, a) = dL/d sim(i, a). Every reduction below sums its terms in
  // sorted order, so permuting the batch leaves the loss bit-identical.
  Matrix coeff(n, n);
  std::vector<double> anchor_terms;
  std::vector<double> terms;
  std::vector<double> pos_terms;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t positives = 0;
    for (std::size_t a = 0; a < n; ++a)
      if (a != i && labels[a] == labels[i]) ++positives;
    if (positives == 0) continue;

    double mx = -INFINITY;
    for (std::size_t a = 0; a < n; ++a)
      if (a != i) mx = std::max(mx, sim(i, a) / tau);
    terms.clear();
    for (std::size_t a = 0; a < n; ++a)
      if (a != i) terms.push_back(std::exp(sim(i, a) / tau - mx));
    const double log_z = mx + std::log(sorted_sum(terms));

    const double inv_p = 1.0 / static_cast<double>(positives);
    pos_terms.clear();
    for (std::size_t a = 0; a < n; ++a) {
      if (a == i) continue;
      const double p = std::exp(sim(i, a) / tau - log_z);
      const bool positive = labels[a] == labels[i];
      if (positive) pos_terms.push_back(sim(i, a) / tau - log_z);
      coeff(i, a) = (p - (positive ? inv_p : 0.0)) / tau;
    }
    anchor_terms.push_back(-inv_p * sorted_sum(pos_terms));
  }
  const double loss = sorted_sum(anchor_terms);

  // d sim(i,a) / dz: sim is symmetric in use, so dZ = (C + C^T) Z.
  Matrix sym(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < n; ++a) sym(i, a) = coeff(i, a) + coeff(a, i);
  const Matrix dz = matmul(sym, z);

  LossGrad out{loss, Matrix(n, d)};
  for (std::size_t i = 0; i < n; ++i) {
    const auto zi = z.row(i);
    const auto gi = dz.row(i);
    auto fi = out.grad.row(i);
    if (norms[i] > kFeatureNormEps) {
      double proj = 0.0;
      for (std::size_t k = 0; k < d; ++k) proj += zi[k] * gi[k];
      for (std::size_t k = 0; k < d; ++k) fi[k] = (gi[k] - zi[k] * proj) / norms[i];
    } else {
      for (std::size_t k = 0; k < d; ++k) fi[k] = gi[k] / norms[i];
    }
  }
  if (!std::isfinite(out.loss)) throw NumericError("scl_loss: non-finite loss");
  require_finite(out.grad.data(), "scl_loss");
  return out;
}

std::string_view to_string(NormKind norm) noexcept {
  switch (norm) {
    case NormKind::l2: return "l2";
    case NormKind::l1: return "l1";
    case NormKind::none: return "none";
  }
  return "none";
}

NormKind parse_norm(std::string_view name) {
  if (name == "l2") return NormKind::l2;
  if (name == "l1") return NormKind::l1;
  if (name == "none") return NormKind::none;
  throw ConfigError("unknown norm '" + std::string(name) + "'");
}

bool RegularSet::contains(const ModelParams& model, std::size_t layer) const {
  const auto& l = model.layers.at(layer);
  if (l.role == Role::head) return include_head;
  if (l.role == Role::embedding && include_embedding) return true;
  // non-head layers occupy indices [0, head_index)
  const std::size_t body = model.head_index();
  return layer + last_l >= body;
}

void validate(const RegConfig& cfg, const ModelParams& model) {
  if (!std::isfinite(cfg.lambda) || cfg.lambda < 0.0)
    throw ConfigError("reg.lambda must be finite and >= 0");
  if (cfg.set.last_l > model.layers.size())
    throw ConfigError("reg.last_l=" + std::to_string(cfg.set.last_l) + " exceeds layer count " +
                      std::to_string(model.layers.size()));
}

namespace {

void check_same_shape(const ModelParams& a, const ModelParams& b) {
  if (a.layers.size() != b.layers.size()) throw ShapeError("reg_penalty: layer count mismatch");
  for (std::size_t l = 0; l < a.layers.size(); ++l)
    if (!a.layers[l].weight.same_shape(b.layers[l].weight) ||
        a.layers[l].bias.size() != b.layers[l].bias.size())
      throw ShapeError("reg_penalty: shape mismatch at layer " + std::to_string(l));
}

// Adds the penalty of one parameter block; returns its unscaled norm value.
double accumulate_block(std::span<const double> w, std::span<const double> w0,
                        std::span<double> g, const RegConfig& cfg) {
  double acc = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double diff = w[i] - w0[i];
    if (cfg.norm == NormKind::l2) {
      acc += diff * diff;
      g[i] = 2.0 * cfg.lambda * diff;
    } else {
      acc += std::abs(diff);
      g[i] = diff > 0.0 ? cfg.lambda : (diff < 0.0 ? -cfg.lambda : 0.0);
    }
  }
  return acc;
}

}  // namespace

RegPenalty reg_penalty(const ModelParams& model, const ModelParams& pre, const RegConfig& cfg) {
  check_same_shape(model, pre);
  RegPenalty out{0.0, GradientSet::zeros_like(model)};
  if (!cfg.active()) return out;
  validate(cfg, model);
  double total = 0.0;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    if (!cfg.set.contains(model, l)) continue;
    auto& g = out.grad.layers[l];
    total += accumulate_block(model.layers[l].weight.data(), pre.layers[l].weight.data(),
                              g.weight.data(), cfg);
    total += accumulate_block(model.layers[l].bias, pre.layers[l].bias, g.bias, cfg);
  }
  out.loss = cfg.lambda * total;
  return out;
}

CombinedLoss combined_grad(const ModelParams& model, const ModelParams& pre, const Batch& batch,
                           const RegConfig& cfg) {
  auto fwd = forward(model, batch.x);
  auto ce = cross_entropy(fwd.logits, batch.labels);
  CombinedLoss out{ce.loss, ce.loss, backward_from_logits(model, fwd.cache, ce.grad)};
  if (cfg.active()) {
    auto reg = reg_penalty(model, pre, cfg);
    out.loss_r += reg.loss;
    out.grad += reg.grad;
  }
  if (!std::isfinite(out.loss_r)) throw NumericError("combined_grad: non-finite loss");
  return out;
}

}  // namespace grft
