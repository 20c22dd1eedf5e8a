#include "grft/model.hpp"

#include <bit>
#include <cmath>
#include <string>

#include "grft/error.hpp"
#include "grft/numeric.hpp"
#include "grft/rng.hpp"

namespace grft {

std::string_view to_string(Role role) noexcept {
  switch (role) {
    case Role::embedding: return "embedding";
    case Role::hidden: return "hidden";
    case Role::head: return "head";
  }
  return "hidden";
}

Role parse_role(std::string_view name) {
  if (name == "embedding") return Role::embedding;
  if (name == "hidden") return Role::hidden;
  if (name == "head") return Role::head;
  throw ConfigError("unknown layer role '" + std::string(name) + "'");
}

std::vector<std::size_t> ModelParams::dims() const {
  std::vector<std::size_t> d;
  if (layers.empty()) return d;
  d.push_back(input_dim());
  for (const auto& l : layers) d.push_back(l.out_dim());
  return d;
}

std::vector<Role> ModelParams::roles() const {
  std::vector<Role> r;
  for (const auto& l : layers) r.push_back(l.role);
  return r;
}

std::size_t ModelParams::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.parameter_count();
  return n;
}

void validate(const ModelParams& model) {
  if (model.layers.empty()) throw ConfigError("model has no layers");
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const auto& l = model.layers[i];
    const std::string name = "layer " + std::to_string(i);
    if (l.bias.size() != l.out_dim())
      throw ShapeError(name + ": bias length " + std::to_string(l.bias.size()) +
                       " != rows " + std::to_string(l.out_dim()));
    if (i > 0 && l.in_dim() != model.layers[i - 1].out_dim())
      throw ShapeError(name + ": input width " + std::to_string(l.in_dim()) +
                       " does not chain with previous output " +
                       std::to_string(model.layers[i - 1].out_dim()));
    const bool last = i + 1 == model.layers.size();
    if (last != (l.role == Role::head))
      throw ConfigError(name + ": exactly the last layer must have role head");
    if (l.role == Role::embedding && i != 0)
      throw ConfigError(name + ": only the first layer may have role embedding");
  }
}

std::vector<Role> default_roles(std::size_t num_layers) {
  std::vector<Role> roles(num_layers, Role::hidden);
  if (num_layers == 0) return roles;
  if (num_layers >= 2) roles.front() = Role::embedding;
  roles.back() = Role::head;
  return roles;
}

namespace {

Layer make_layer(std::size_t in, std::size_t out, Role role, std::uint64_t seed) {
  Layer layer;
  layer.weight = Matrix(out, in);
  layer.bias.assign(out, 0.0);
  layer.role = role;
  layer.activation = role == Role::head ? Activation::identity : Activation::relu;
  const double bound = std::sqrt(1.0 / static_cast<double>(in));
  Rng rng(seed);
  for (double& w : layer.weight.data()) w = rng.uniform(-bound, bound);
  return layer;
}

}  // namespace

ModelParams init_model(std::span<const std::size_t> dims, std::span<const Role> roles,
                       std::uint64_t seed) {
  if (dims.size() < 2) throw ConfigError("init_model: dims needs at least two entries");
  if (roles.size() + 1 != dims.size())
    throw ConfigError("init_model: " + std::to_string(roles.size()) + " roles for " +
                      std::to_string(dims.size() - 1) + " layers");
  for (std::size_t d : dims)
    if (d == 0) throw ConfigError("init_model: zero-width layer");
  ModelParams model;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i)
    model.layers.push_back(make_layer(dims[i], dims[i + 1], roles[i], Rng::derive(seed, i)));
  validate(model);
  return model;
}

ModelParams init_model(std::span<const std::size_t> dims, std::uint64_t seed) {
  const auto roles = default_roles(dims.size() < 2 ? 0 : dims.size() - 1);
  return init_model(dims, roles, seed);
}

void reinit_head(ModelParams& model, std::size_t classes, std::uint64_t seed) {
  if (classes == 0) throw ConfigError("reinit_head: zero classes");
  auto& head = model.layers.back();
  head = make_layer(head.in_dim(), classes, Role::head, seed);
}

std::uint64_t fingerprint(const ModelParams& model) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](double v) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xFF;
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& l : model.layers) {
    mix(static_cast<double>(l.weight.rows()));
    mix(static_cast<double>(l.weight.cols()));
    for (double v : l.weight.data()) mix(v);
    for (double v : l.bias) mix(v);
  }
  return h;
}

GradientSet GradientSet::zeros_like(const ModelParams& model) {
  GradientSet g;
  g.layers.reserve(model.layers.size());
  for (const auto& l : model.layers)
    g.layers.push_back({Matrix(l.weight.rows(), l.weight.cols()),
                        std::vector<double>(l.bias.size(), 0.0)});
  return g;
}

GradientSet& GradientSet::operator+=(const GradientSet& other) {
  if (other.layers.size() != layers.size()) throw ShapeError("GradientSet: layer count mismatch");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto& a = layers[l];
    const auto& b = other.layers[l];
    if (!a.weight.same_shape(b.weight) || a.bias.size() != b.bias.size())
      throw ShapeError("GradientSet: shape mismatch at layer " + std::to_string(l));
    auto w = a.weight.data();
    const auto v = b.weight.data();
    for (std::size_t i = 0; i < w.size(); ++i) w[i] += v[i];
    for (std::size_t i = 0; i < a.bias.size(); ++i) a.bias[i] += b.bias[i];
  }
  return *this;
}

bool GradientSet::same_shape(const ModelParams& model) const noexcept {
  if (layers.size() != model.layers.size()) return false;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (!layers[l].weight.same_shape(model.layers[l].weight)) return false;
    if (layers[l].bias.size() != model.layers[l].bias.size()) return false;
  }
  return true;
}

namespace {

Matrix activate(const Matrix& pre, Activation act) {
  if (act == Activation::identity) return pre;
  Matrix out = pre;
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return out;
}

}  // namespace

ForwardResult forward(const ModelParams& model, const Matrix& x_batch) {
  if (model.layers.empty()) throw ConfigError("forward: empty model");
  if (x_batch.cols() != model.input_dim())
    throw ShapeError("forward: batch width " + std::to_string(x_batch.cols()) +
                     " != model input " + std::to_string(model.input_dim()));
  ForwardResult result;
  auto& cache = result.cache;
  cache.model_fingerprint = fingerprint(model);
  Matrix h = x_batch;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& layer = model.layers[l];
    if (l + 1 == model.layers.size()) result.features = h;
    Matrix pre = matmul_nt(h, layer.weight);
    for (std::size_t i = 0; i < pre.rows(); ++i) {
      auto row = pre.row(i);
      for (std::size_t j = 0; j < row.size(); ++j) row[j] += layer.bias[j];
    }
    require_finite(pre.data(), "forward");
    cache.inputs.push_back(std::move(h));
    h = activate(pre, layer.activation);
    cache.pre_activations.push_back(std::move(pre));
  }
  result.logits = std::move(h);
  return result;
}

namespace {

void check_cache(const ModelParams& model, const ForwardCache& cache) {
  if (cache.inputs.size() != model.layers.size() ||
      cache.pre_activations.size() != model.layers.size() ||
      cache.model_fingerprint != fingerprint(model))
    throw StateError("backward: cache does not belong to these parameters");
}

// Backpropagates d_out (gradient w.r.t. the activated output of layer `top`)
// down to layer 0.
GradientSet backward_from(const ModelParams& model, const ForwardCache& cache, std::size_t top,
                          Matrix d_out) {
  GradientSet grads = GradientSet::zeros_like(model);
  for (std::size_t step = 0; step <= top; ++step) {
    const std::size_t l = top - step;
    const auto& layer = model.layers[l];
    const auto& pre = cache.pre_activations[l];
    if (!d_out.same_shape(pre))
      throw ShapeError("backward: upstream gradient shape mismatch at layer " + std::to_string(l));
    Matrix d_pre = std::move(d_out);
    if (layer.activation == Activation::relu) {
      auto d = d_pre.data();
      const auto p = pre.data();
      for (std::size_t i = 0; i < d.size(); ++i)
        if (!(p[i] > 0.0)) d[i] = 0.0;
    }
    grads.layers[l].weight = matmul_tn(d_pre, cache.inputs[l]);
    auto& db = grads.layers[l].bias;
    for (std::size_t i = 0; i < d_pre.rows(); ++i) {
      const auto row = d_pre.row(i);
      for (std::size_t j = 0; j < row.size(); ++j) db[j] += row[j];
    }
    if (l > 0) d_out = matmul(d_pre, layer.weight);
  }
  return grads;
}

}  // namespace

GradientSet backward_from_logits(const ModelParams& model, const ForwardCache& cache,
                                 const Matrix& d_logits) {
  check_cache(model, cache);
  require_finite(d_logits.data(), "backward");
  return backward_from(model, cache, model.layers.size() - 1, d_logits);
}

GradientSet backward_from_features(const ModelParams& model, const ForwardCache& cache,
                                   const Matrix& d_features) {
  check_cache(model, cache);
  require_finite(d_features.data(), "backward");
  if (model.layers.size() < 2) {
    if (d_features.rows() != cache.inputs.front().rows() ||
        d_features.cols() != model.input_dim())
      throw ShapeError("backward: feature gradient shape mismatch");
    return GradientSet::zeros_like(model);
  }
  return backward_from(model, cache, model.layers.size() - 2, d_features);
}

}  // namespace grft
