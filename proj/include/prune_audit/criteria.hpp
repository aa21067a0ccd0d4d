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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "prune_audit/engine.hpp"
#include "prune_audit/pruning.hpp"

namespace prune_audit {

// Non-negative importance per unit. `layers` holds spec layer indices.
struct ImportanceScores {
  std::vector<std::size_t> layers;
  std::vector<std::vector<double>> scores;
};

// "layer_id,unit_id,score" rows; layer_id is the prunable-layer id (L0 = first conv).
std::string scores_to_csv(const ImportanceScores& s);

// Sum of |w| over each filter's (or neuron's) weights, bias excluded, for
// every prunable layer.
ImportanceScores score_l1_filters(const Network<float>& net);

// First-order Taylor saliency |g_i * w_i| for every weight of every weighted
// layer, with g the gradient of the batch-mean loss.
template <typename T>
ImportanceScores score_taylor1_weights(const Network<T>& net, const Tensor<T>& batch, std::span<const int> labels) {
  const auto lg = backward(net, batch, labels);
  ImportanceScores out;
  for (std::size_t i : weighted_layers(net.spec)) {
    const auto& w = net.params[i].weight.values();
    const auto& g = lg.grads[i].weight.values();
    std::vector<double> s(w.size());
    for (std::size_t k = 0; k < w.size(); ++k) s[k] = std::abs(static_cast<double>(g[k]) * static_cast<double>(w[k]));
    out.layers.push_back(i);
    out.scores.push_back(std::move(s));
  }
  return out;
}

// Filter-level Taylor score: the per-weight saliencies summed over each unit
// of every prunable layer.
template <typename T>
ImportanceScores score_taylor1(const Network<T>& net, const Tensor<T>& batch, std::span<const int> labels) {
  if (batch.empty() || batch.dim(0) == 0) throw Error("score_taylor1: empty batch", true);
  const auto per_weight = score_taylor1_weights(net, batch, labels);
  const auto prunable = prunable_layers(net.spec);
  ImportanceScores out;
  for (std::size_t k = 0; k < per_weight.layers.size(); ++k) {
    const std::size_t layer = per_weight.layers[k];
    if (std::find(prunable.begin(), prunable.end(), layer) == prunable.end()) continue;
    const std::size_t units = net.params[layer].weight.dim(0);
    const std::size_t per_unit = per_weight.scores[k].size() / units;
    std::vector<double> s(units, 0.0);
    for (std::size_t u = 0; u < units; ++u) {
      for (std::size_t j = 0; j < per_unit; ++j) s[u] += per_weight.scores[k][u * per_unit + j];
    }
    out.layers.push_back(layer);
    out.scores.push_back(std::move(s));
  }
  return out;
}

// Keep-flags per weight for every weighted layer (biases are never masked).
struct UnstructuredMask {
  std::vector<std::size_t> layers;
  std::vector<std::vector<std::uint8_t>> keep;
  double threshold = 0.0;  // GMP: |w| of the last removed weight

  std::size_t total() const;
  std::size_t zeros() const;
  double sparsity() const { return static_cast<double>(zeros()) / static_cast<double>(total()); }
  double layer_sparsity(std::size_t k) const;
};

Network<float> apply_mask(const Network<float>& net, const UnstructuredMask& mask);

// Uniform magnitude pruning: in each weighted layer zero the
// floor(sparsity * count) smallest-|w| weights.
UnstructuredMask mask_ump(const Network<float>& net, double sparsity);

// Global magnitude pruning: zero the floor(sparsity * total) smallest-|w|
// weights network-wide.
UnstructuredMask mask_gmp(const Network<float>& net, double sparsity);

struct RatioOptions {
  double strength = 0.5;   // ratio spread: raw_i = 1 - strength * normalized_score_i
  double max_ratio = 0.95;
};

struct LayerRatioAssignment {
  std::vector<std::size_t> layers;
  std::vector<double> layer_scores;  // outlier fraction (ONP) or PC fraction (PNP)
  std::vector<std::size_t> sizes;    // weights per layer
  std::vector<std::size_t> removed;  // weights removed per layer
  std::vector<double> ratios;        // removed / size
  double achieved = 0.0;             // global sparsity after integer rounding
  bool uniform_fallback = false;
};

// Ratios that decrease affinely in the layer scores, rescaled so the
// size-weighted mean equals `target`, clamped to [0, max_ratio], then rounded
// to integer counts by largest remainder so the global count is exact.
LayerRatioAssignment assign_ratios_affine(std::span<const double> layer_scores, std::span<const std::size_t> sizes,
                                          double target, const RatioOptions& opt = {});

// Share of weights with |w| > mean(|w|) + sigmas * std(|w|).
double outlier_fraction(std::span<const float> weights, double sigmas = 3.0);

// Fraction of singular values needed to reach `energy` of the squared
// spectral mass, over min(rows, cols).
double principal_fraction(std::span<const float> weights, std::size_t rows, std::size_t cols, double energy = 0.95,
                          std::size_t layer_for_errors = 0);

LayerRatioAssignment assign_ratios_onp(const Network<float>& net, double target, double sigmas = 3.0,
                                       const RatioOptions& opt = {});
LayerRatioAssignment assign_ratios_pnp(const Network<float>& net, double target, double energy = 0.95,
                                       const RatioOptions& opt = {});

// Per-layer magnitude pruning with the assignment's removal counts.
UnstructuredMask mask_from_assignment(const Network<float>& net, const LayerRatioAssignment& a);

}  // namespace prune_audit
