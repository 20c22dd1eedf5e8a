#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "grft/matrix.hpp"

namespace grft {

enum class Role { embedding, hidden, head };
enum class Activation { relu, identity };

std::string_view to_string(Role role) noexcept;
Role parse_role(std::string_view name);

// Fully connected layer computing act(x W^T + b); weight is out x in.
struct Layer {
  Matrix weight;
  std::vector<double> bias;
  Role role = Role::hidden;
  Activation activation = Activation::relu;

  std::size_t out_dim() const noexcept { return weight.rows(); }
  std::size_t in_dim() const noexcept { return weight.cols(); }
  std::size_t parameter_count() const noexcept { return weight.size() + bias.size(); }
};

struct ModelParams {
  std::vector<Layer> layers;

  std::size_t input_dim() const noexcept { return layers.front().in_dim(); }
  std::size_t output_dim() const noexcept { return layers.back().out_dim(); }
  // Width of the penultimate activation (the input to the head).
  std::size_t feature_dim() const noexcept { return layers.back().in_dim(); }
  std::vector<std::size_t> dims() const;
  std::vector<Role> roles() const;
  std::size_t parameter_count() const noexcept;
  std::size_t head_index() const noexcept { return layers.size() - 1; }
};

// Checks dimension chaining, bias lengths and role placement.
void validate(const ModelParams& model);

// head last, embedding first when there are at least two layers, hidden between.
std::vector<Role> default_roles(std::size_t num_layers);

// Uniform init on [-sqrt(1/fan_in), sqrt(1/fan_in)], zero biases. Head layers
// use the identity activation, all others ReLU.
ModelParams init_model(std::span<const std::size_t> dims, std::span<const Role> roles,
                       std::uint64_t seed);
ModelParams init_model(std::span<const std::size_t> dims, std::uint64_t seed);

// Replaces the head with a freshly initialized one of `classes` outputs.
void reinit_head(ModelParams& model, std::size_t classes, std::uint64_t seed);

// FNV-1a over the bit patterns of every parameter.
std::uint64_t fingerprint(const ModelParams& model) noexcept;

struct LayerGrad {
  Matrix weight;
  std::vector<double> bias;
};

struct GradientSet {
  std::vector<LayerGrad> layers;

  static GradientSet zeros_like(const ModelParams& model);
  GradientSet& operator+=(const GradientSet& other);
  bool same_shape(const ModelParams& model) const noexcept;
};

struct ForwardCache {
  std::vector<Matrix> inputs;          // input to each layer
  std::vector<Matrix> pre_activations;  // x W^T + b of each layer
  std::uint64_t model_fingerprint = 0;
};

struct ForwardResult {
  Matrix logits;
  Matrix features;
  ForwardCache cache;
};

ForwardResult forward(const ModelParams& model, const Matrix& x_batch);

// Exact gradients of an upstream loss. The cache must come from forward() on
// the same parameters, otherwise StateError.
GradientSet backward_from_logits(const ModelParams& model, const ForwardCache& cache,
                                 const Matrix& d_logits);
// Head gradients are zero: the loss only sees the penultimate activation.
GradientSet backward_from_features(const ModelParams& model, const ForwardCache& cache,
                                   const Matrix& d_features);

}  // namespace grft
