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
#include <string>
#include <vector>

#include "prune_audit/engine.hpp"
#include "prune_audit/pruning.hpp"
#include "test_util.hpp"

namespace prune_audit::testing {

struct GradCase {
  const char* name;
  NetworkSpec spec;
};

inline std::vector<GradCase> grad_cases() {
  return {
      {"fc", {{1, 3, 4, false}, {Flatten{}, FullyConnected{5}}}},
      {"relu", {{1, 3, 4, false}, {Flatten{}, FullyConnected{6}, ReLU{}, FullyConnected{4}}}},
      {"conv", {{2, 6, 6, false}, {Conv2d{3, 3, 3}, Flatten{}, FullyConnected{4}}}},
      {"conv_stride_pad", {{2, 7, 7, false}, {Conv2d{3, 3, 3, 2, 1}, Flatten{}, FullyConnected{4}}}},
      {"maxpool", {{1, 8, 8, false}, {Conv2d{2, 3, 3}, MaxPool2d{2}, Flatten{}, FullyConnected{3}}}},
      {"stack",
       {{1, 12, 12, false},
        {Conv2d{3, 3, 3}, MaxPool2d{2}, ReLU{}, Conv2d{4, 3, 3, 1, 1}, ReLU{}, Flatten{}, FullyConnected{5}, ReLU{},
         FullyConnected{3}}}},
  };
}

struct GradCheckStats {
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::size_t failures = 0;  // accepted trials with relative error >= tolerance
  double worst = 0.0;
  std::string first_failure;
};

inline double batch_loss(const Network<double>& net, const Tensor<double>& x, std::span<const int> y) {
  return cross_entropy_loss(forward(net, x), y);
}

// Central differences against backprop on the 64-bit path, one random
// parameter per trial. Trials whose one-sided slopes disagree sit on a ReLU or
// max-pool kink and are redrawn.
inline GradCheckStats gradient_check(const GradCase& gc, std::size_t trials, double step = 1e-5,
                                     double tolerance = 1e-5) {
  Rng rng(fnv1a(gc.name));
  GradCheckStats st;
  while (st.accepted < trials && st.rejected < 10 * trials) {
    Network<double> net = init_network<double>(gc.spec, rng());
    for (auto& p : net.params) {
      for (double& b : p.bias.values()) b = uniform(rng, -0.3, 0.3);
    }
    const std::size_t n = 3;
    const std::size_t classes = num_classes(gc.spec);
    const Tensor<double> x = random_batch<double>(rng, n, gc.spec.input);
    std::vector<int> y(n);
    for (int& v : y) v = static_cast<int>(uniform_index(rng, classes));

    const auto lg = backward(net, x, y);
    const auto weighted = weighted_layers(gc.spec);
    const std::size_t layer = weighted[uniform_index(rng, weighted.size())];
    const bool is_bias = uniform01(rng) < 0.3;
    auto& target = is_bias ? net.params[layer].bias : net.params[layer].weight;
    const std::size_t k = uniform_index(rng, target.size());
    const double analytic = is_bias ? lg.grads[layer].bias[k] : lg.grads[layer].weight[k];

    const double orig = target[k];
    const double f0 = batch_loss(net, x, y);
    target[k] = orig + step;
    const double fp = batch_loss(net, x, y);
    target[k] = orig - step;
    const double fm = batch_loss(net, x, y);
    target[k] = orig;

    const double fwd = (fp - f0) / step, bwd = (f0 - fm) / step;
    if (std::abs(fwd - bwd) > 1e-3 * std::max({std::abs(fwd), std::abs(bwd), 1e-3})) {
      ++st.rejected;
      continue;
    }
    const double numeric = (fp - fm) / (2 * step);
    const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    st.worst = std::max(st.worst, rel);
    if (!(rel < tolerance)) {
      if (st.failures++ == 0) {
        st.first_failure = "layer " + std::to_string(layer) + (is_bias ? " bias " : " weight ") + std::to_string(k) +
                           ": analytic " + std::to_string(analytic) + " numeric " + std::to_string(numeric);
      }
    }
    ++st.accepted;
  }
  return st;
}

struct MaskCase {
  const char* name;
  NetworkSpec spec;
  std::size_t prunable_id;
};

inline std::vector<MaskCase> mask_cases() {
  return {
      {"conv_to_conv",
       {{1, 12, 12, false}, {Conv2d{6, 3, 3}, ReLU{}, Conv2d{4, 3, 3}, ReLU{}, Flatten{}, FullyConnected{3}}},
       0},
      {"conv_pool_to_flatten_fc",
       {{1, 10, 10, false},
        {Conv2d{5, 3, 3}, MaxPool2d{2}, ReLU{}, Flatten{}, FullyConnected{6}, ReLU{}, FullyConnected{3}}},
       0},
      {"fc_to_fc",
       {{1, 4, 4, false}, {Flatten{}, FullyConnected{8}, ReLU{}, FullyConnected{5}, ReLU{}, FullyConnected{3}}},
       0},
      {"fc_to_output",
       {{1, 4, 4, false}, {Flatten{}, FullyConnected{8}, ReLU{}, FullyConnected{5}, ReLU{}, FullyConnected{3}}},
       1},
  };
}

struct MaskCheckStats {
  double worst = 0.0;
  bool shrank = false;
};

// Zeroing a unit's incoming weights and bias gives the same logits as
// physically removing it: every unit is followed by a ReLU (possibly after a
// max-pool), so the zeroed channel contributes exactly nothing downstream.
inline MaskCheckStats mask_vs_shrink(const MaskCase& mc, std::size_t inputs) {
  Rng rng(fnv1a(mc.name));
  Network<float> net = init_network<float>(mc.spec, 11);
  for (auto& p : net.params) {
    for (float& b : p.bias.values()) b = static_cast<float>(uniform(rng, -0.2, 0.2));
  }
  const std::size_t layer = prunable_layers(mc.spec)[mc.prunable_id];
  const std::size_t width = net.params[layer].weight.dim(0);
  PruningCombination combo;
  combo.per_layer[mc.prunable_id] = {0, width / 2, width - 1};

  Network<float> masked = net;
  const std::size_t per_unit = masked.params[layer].weight.size() / width;
  for (std::size_t u : combo.per_layer[mc.prunable_id]) {
    for (std::size_t j = 0; j < per_unit; ++j) masked.params[layer].weight[u * per_unit + j] = 0.0f;
    masked.params[layer].bias[u] = 0.0f;
  }
  const Network<float> shrunk = apply_combination(net, combo);
  MaskCheckStats st;
  st.shrank = param_count(shrunk.spec) < param_count(net.spec);

  const Tensor<float> x = random_batch<float>(rng, inputs, mc.spec.input);
  const Tensor<float> a = forward(masked, x), b = forward(shrunk, x);
  if (a.shape() != b.shape()) {
    st.worst = INFINITY;
    return st;
  }
  for (std::size_t k = 0; k < a.size(); ++k) {
    st.worst = std::max(st.worst, std::abs(static_cast<double>(a[k]) - static_cast<double>(b[k])));
  }
  return st;
}

}  // namespace prune_audit::testing
