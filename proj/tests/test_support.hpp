#pragma once

// Generators and independent reference implementations shared by the unit
// and acceptance suites. Nothing here calls into the code path it checks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "grft/losses.hpp"
#include "grft/matrix.hpp"
#include "grft/model.hpp"
#include "grft/rng.hpp"

namespace grft::testing {

inline Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = scale * rng.normal();
  return m;
}

inline Labels random_labels(std::size_t n, std::size_t classes, Rng& rng) {
  Labels y(n);
  for (auto& v : y) v = rng.below(classes);
  return y;
}

// |a - b| / max(|a|, |b|, floor); the floor keeps entries that are zero up to
// finite-difference noise from dominating.
inline double rel_err(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline double max_rel_err(const Matrix& a, const Matrix& b, double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, rel_err(a.data()[i], b.data()[i], floor));
  return worst;
}

// Smallest |pre-activation| over ReLU layers; finite differences are only
// trustworthy when every unit is well away from the kink.
inline double relu_margin(const ModelParams& model, const Matrix& x) {
  double margin = INFINITY;
  Matrix h = x;
  for (const auto& layer : model.layers) {
    Matrix next(h.rows(), layer.out_dim());
    for (std::size_t i = 0; i < h.rows(); ++i)
      for (std::size_t o = 0; o < layer.out_dim(); ++o) {
        double acc = layer.bias[o];
        for (std::size_t k = 0; k < layer.in_dim(); ++k) acc += h(i, k) * layer.weight(o, k);
        if (layer.activation == Activation::relu) {
          margin = std::min(margin, std::abs(acc));
          acc = std::max(acc, 0.0);
        }
        next(i, o) = acc;
      }
    h = std::move(next);
  }
  return margin;
}

// Random small MLP with random biases so ReLU units are mixed on/off.
inline ModelParams random_model(const std::vector<std::size_t>& dims, Rng& rng) {
  ModelParams m = init_model(dims, rng.next_u64());
  for (auto& l : m.layers)
    for (double& b : l.bias) b = 0.3 * rng.normal();
  return m;
}

// Plain-loop supervised contrastive loss straight from the definition: no
// max-shift, no matrix products, sets built explicitly.
inline double reference_scl(const Matrix& features, const Labels& y, double tau) {
  const std::size_t n = features.rows(), d = features.cols();
  std::vector<std::vector<double>> z(n, std::vector<double>(d));
  for (std::size_t i = 0; i < n; ++i) {
    double norm = 0.0;
    for (std::size_t k = 0; k < d; ++k) norm += features(i, k) * features(i, k);
    norm = std::sqrt(norm);
    for (std::size_t k = 0; k < d; ++k) z[i][k] = features(i, k) / norm;
  }
  auto dot = [&](std::size_t a, std::size_t b) {
    double s = 0.0;
    for (std::size_t k = 0; k < d; ++k) s += z[a][k] * z[b][k];
    return s;
  };
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::size_t> positives, anchors;
    for (std::size_t a = 0; a < n; ++a) {
      if (a == i) continue;
      anchors.push_back(a);
      if (y[a] == y[i]) positives.push_back(a);
    }
    if (positives.empty()) continue;
    double denom = 0.0;
    for (auto a : anchors) denom += std::exp(dot(i, a) / tau);
    double inner = 0.0;
    for (auto p : positives) inner += std::log(std::exp(dot(i, p) / tau) / denom);
    total += -inner / static_cast<double>(positives.size());
  }
  return total;
}

// Scalar Adam as written in the optimizer pseudocode, eps inside the root.
struct ReferenceAdam {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double m = 0.0, v = 0.0;
  long t = 0;

  double step(double w, double g, double lr) {
    ++t;
    m = beta1 * m + (1.0 - beta1) * g;
    v = beta2 * v + (1.0 - beta2) * g * g;
    const double m_hat = m / (1.0 - std::pow(beta1, static_cast<double>(t)));
    const double v_hat = v / (1.0 - std::pow(beta2, static_cast<double>(t)));
    return w - lr * m_hat / std::sqrt(v_hat + eps);
  }
};

}  // namespace grft::testing
