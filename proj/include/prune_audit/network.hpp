/* Copyright 2026 The prune-audit Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "prune_audit/rng.hpp"
#include "prune_audit/tensor.hpp"

namespace prune_audit {

struct Conv2d {
  std::size_t out_channels = 0;
  std::size_t kernel_h = 0;
  std::size_t kernel_w = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;
  friend bool operator==(const Conv2d&, const Conv2d&) = default;
};

// Non-overlapping pooling window (stride == size).
struct MaxPool2d {
  std::size_t size = 2;
  friend bool operator==(const MaxPool2d&, const MaxPool2d&) = default;
};

struct ReLU {
  friend bool operator==(const ReLU&, const ReLU&) = default;
};

struct Flatten {
  friend bool operator==(const Flatten&, const Flatten&) = default;
};

struct FullyConnected {
  std::size_t out_features = 0;
  friend bool operator==(const FullyConnected&, const FullyConnected&) = default;
};

using LayerSpec = std::variant<Conv2d, MaxPool2d, ReLU, Flatten, FullyConnected>;

struct FeatureShape {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  bool flat = false;

  std::size_t size() const { return channels * height * width; }
  friend bool operator==(const FeatureShape&, const FeatureShape&) = default;
};

struct NetworkSpec {
  FeatureShape input{1, 28, 28, false};
  std::vector<LayerSpec> layers;
  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

inline bool is_weighted(const LayerSpec& layer) {
  return std::holds_alternative<Conv2d>(layer) || std::holds_alternative<FullyConnected>(layer);
}

std::string layer_name(const LayerSpec& layer);
std::string describe(const NetworkSpec& spec);

// Activation shapes: element 0 is the input, element i+1 the output of layer i.
// Throws ShapeError naming the first layer that cannot be applied.
std::vector<FeatureShape> infer_shapes(const NetworkSpec& spec);

// Indices into spec.layers of the Conv2d/FullyConnected layers, in order.
std::vector<std::size_t> weighted_layers(const NetworkSpec& spec);

// Weighted layers except the final (output) one.
std::vector<std::size_t> prunable_layers(const NetworkSpec& spec);

std::size_t num_classes(const NetworkSpec& spec);

struct ParamShapes {
  std::vector<std::size_t> weight;  // empty for parameter-free layers
  std::vector<std::size_t> bias;
};

std::vector<ParamShapes> param_shapes(const NetworkSpec& spec);

// Trainable scalars (weights + biases).
std::size_t param_count(const NetworkSpec& spec);

// Number of output units of a weighted layer (filters or neurons).
std::size_t layer_width(const LayerSpec& layer);

template <typename T>
struct LayerParams {
  Tensor<T> weight;
  Tensor<T> bias;
  friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

template <typename T>
struct Network {
  NetworkSpec spec;
  std::vector<LayerParams<T>> params;
  std::uint64_t rng_seed = 0;

  template <typename U>
  Network<U> cast() const {
    Network<U> out{spec, {}, rng_seed};
    out.params.reserve(params.size());
    for (const auto& p : params) {
      LayerParams<U> q;
      if (!p.weight.empty()) q.weight = p.weight.template cast<U>();
      if (!p.bias.empty()) q.bias = p.bias.template cast<U>();
      out.params.push_back(std::move(q));
    }
    return out;
  }

  friend bool operator==(const Network&, const Network&) = default;
};

template <typename T>
using Gradients = std::vector<LayerParams<T>>;

template <typename T>
Network<T> zero_network(const NetworkSpec& spec) {
  Network<T> net{spec, {}, 0};
  for (const auto& shapes : param_shapes(spec)) {
    LayerParams<T> p;
    if (!shapes.weight.empty()) {
      p.weight = Tensor<T>(shapes.weight);
      p.bias = Tensor<T>(shapes.bias);
    }
    net.params.push_back(std::move(p));
  }
  return net;
}

// Kaiming-uniform (fan-in, ReLU gain) weights and zero biases.
template <typename T>
Network<T> init_network(const NetworkSpec& spec, std::uint64_t seed) {
  Network<T> net = zero_network<T>(spec);
  net.rng_seed = seed;
  Rng rng(seed);
  for (auto& p : net.params) {
    if (p.weight.empty()) continue;
    const std::size_t fan_in = p.weight.size() / p.weight.dim(0);
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (T& w : p.weight.values()) w = static_cast<T>(uniform(rng, -bound, bound));
  }
  return net;
}

// Throws ShapeError if the parameter tensors disagree with the network spec.
template <typename T>
void check_params(const Network<T>& net) {
  const auto shapes = param_shapes(net.spec);
  if (net.params.size() != shapes.size()) {
    throw Error("network has " + std::to_string(net.params.size()) + " parameter slots for " +
                std::to_string(shapes.size()) + " layers");
  }
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const auto& p = net.params[i];
    const bool weighted = !shapes[i].weight.empty();
    if (weighted && (p.weight.shape() != shapes[i].weight || p.bias.shape() != shapes[i].bias)) {
      throw ShapeError(i, "parameter shape " + shape_string(p.weight.shape()) + " expected " +
                              shape_string(shapes[i].weight));
    }
    if (!weighted && (!p.weight.empty() || !p.bias.empty())) {
      throw ShapeError(i, "parameter-free layer carries parameters");
    }
  }
}

}  // namespace prune_audit
