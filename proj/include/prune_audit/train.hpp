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
#include <functional>
#include <utility>
#include <vector>

#include "prune_audit/data.hpp"
#include "prune_audit/engine.hpp"

namespace prune_audit {

struct LrMilestone {
  std::size_t start_epoch = 0;
  double learning_rate = 0.0;
  friend bool operator==(const LrMilestone&, const LrMilestone&) = default;
};

struct TrainConfig {
  std::size_t epochs = 1;
  std::size_t batch_size = 256;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::vector<LrMilestone> lr_schedule{{0, 1e-2}};

  // Throws Error (validation) naming the first violated invariant. Zero
  // epochs is allowed only when `allow_zero_epochs` (no-op retraining).
  void validate(bool allow_zero_epochs = false) const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// Rate of the last milestone whose start_epoch <= epoch.
double lr_at(const std::vector<LrMilestone>& schedule, std::size_t epoch);

// SGD with momentum and L2 weight decay folded into the velocity:
//   v <- momentum * v + grad + weight_decay * w
//   w <- w - lr * v
template <typename T>
class SgdOptimizer {
 public:
  SgdOptimizer(double momentum, double weight_decay) : momentum_(momentum), weight_decay_(weight_decay) {}

  void step(Network<T>& net, const Gradients<T>& grads, double lr) {
    if (grads.size() != net.params.size()) throw Error("sgd_step: gradient count does not match network");
    if (velocity_.empty()) {
      velocity_.resize(net.params.size());
      for (std::size_t i = 0; i < net.params.size(); ++i) {
        velocity_[i].first.assign(net.params[i].weight.size(), 0.0);
        velocity_[i].second.assign(net.params[i].bias.size(), 0.0);
      }
    }
    for (std::size_t i = 0; i < net.params.size(); ++i) {
      if (grads[i].weight.shape() != net.params[i].weight.shape() ||
          grads[i].bias.shape() != net.params[i].bias.shape()) {
        throw ShapeError(i, "gradient shape does not match parameters");
      }
      update(net.params[i].weight.values(), grads[i].weight.values(), velocity_[i].first, lr);
      update(net.params[i].bias.values(), grads[i].bias.values(), velocity_[i].second, lr);
    }
  }

  const std::vector<std::pair<std::vector<double>, std::vector<double>>>& velocity() const { return velocity_; }

 private:
  void update(std::vector<T>& w, const std::vector<T>& g, std::vector<double>& v, double lr) const {
    for (std::size_t k = 0; k < w.size(); ++k) {
      v[k] = momentum_ * v[k] + static_cast<double>(g[k]) + weight_decay_ * static_cast<double>(w[k]);
      w[k] = static_cast<T>(static_cast<double>(w[k]) - lr * v[k]);
    }
  }

  double momentum_;
  double weight_decay_;
  std::vector<std::pair<std::vector<double>, std::vector<double>>> velocity_;
};

struct EvalResult {
  double loss = 0.0;      // exact dataset mean cross-entropy
  double accuracy = 0.0;  // percent
};

template <typename T>
EvalResult evaluate(const Network<T>& net, const Dataset& ds) {
  Engine<T> engine(net);
  double total = 0.0;
  std::size_t correct = 0;
  std::vector<T> sample(ds.sample_size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto row = ds.images.row(i);
    std::copy(row.begin(), row.end(), sample.begin());
    const auto logits = engine.forward(sample);
    total += cross_entropy_row(logits, ds.labels[i]);
    const auto best = static_cast<std::size_t>(
        std::max_element(logits.begin(), logits.end()) - logits.begin());
    if (best == static_cast<std::size_t>(ds.labels[i])) ++correct;
  }
  const double n = static_cast<double>(ds.size());
  return {total / n, 100.0 * static_cast<double>(correct) / n};
}

struct TrainHooks {
  std::function<void(std::size_t epoch, std::size_t step)> on_step;
  // Mean training loss seen during the epoch.
  std::function<void(std::size_t epoch, double train_loss)> on_epoch;
};

// Minibatch SGD over `ds`. Epoch e shuffles with seed mix(seed, e); the
// result is a deterministic function of (net, ds, config, seed).
template <typename T>
void train(Network<T>& net, const Dataset& ds, const TrainConfig& config, std::uint64_t seed,
           const TrainHooks& hooks = {}) {
  config.validate(true);
  SgdOptimizer<T> opt(config.momentum, config.weight_decay);
  std::vector<T> sample(ds.sample_size());
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = lr_at(config.lr_schedule, epoch);
    double epoch_loss = 0.0;
    for (const auto& batch : batch_iter(ds.size(), config.batch_size, mix_seed(seed, epoch), true)) {
      Engine<T> engine(net);
      double batch_loss = 0.0;
      for (std::size_t idx : batch) {
        const auto row = ds.images.row(idx);
        std::copy(row.begin(), row.end(), sample.begin());
        const auto logits = engine.forward(sample);
        batch_loss += cross_entropy_row(logits, ds.labels[idx]);
        auto d = softmax(logits);
        d[static_cast<std::size_t>(ds.labels[idx])] -= 1.0;
        engine.backward(d);
      }
      if (!std::isfinite(batch_loss)) {
        throw DivergenceError("training diverged at epoch " + std::to_string(epoch) + ", step " +
                              std::to_string(step) + " (non-finite loss)");
      }
      epoch_loss += batch_loss;
      const auto grads = engine.template gradients<T>(1.0 / static_cast<double>(batch.size()));
      opt.step(net, grads, lr);
      if (hooks.on_step) hooks.on_step(epoch, step);
      ++step;
    }
    if (hooks.on_epoch) hooks.on_epoch(epoch, epoch_loss / static_cast<double>(ds.size()));
  }
  for (const auto& p : net.params) {
    if (!p.weight.all_finite() || !p.bias.all_finite()) {
      throw DivergenceError("training produced non-finite parameters");
    }
  }
}

}  // namespace prune_audit
