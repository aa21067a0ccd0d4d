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

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "prune_audit/network.hpp"
#include "prune_audit/train.hpp"

namespace prune_audit {

// Filters (or neurons) removed per prunable layer. Layer ids index
// prunable_layers(spec): 0 is the first conv. Index sets are sorted and
// layers with nothing removed are absent, so equal combinations compare equal.
struct PruningCombination {
  std::map<std::size_t, std::vector<std::size_t>> per_layer;

  bool empty() const { return per_layer.empty(); }

  // "L0:{2,5,7};L2:{0,1,3,4,9}"; the empty combination encodes as "none".
  std::string encode() const;
  static PruningCombination decode(std::string_view text);

  friend auto operator<=>(const PruningCombination&, const PruningCombination&) = default;
  friend bool operator==(const PruningCombination&, const PruningCombination&) = default;
};

enum class SearchMode { kExhaustive, kSample };

struct PruningPlan {
  std::vector<double> layer_ratios;  // one per prunable layer; missing trailing entries are 0
  SearchMode mode = SearchMode::kExhaustive;
  std::size_t sample_count = 0;
  std::uint64_t sample_seed = 0;
  double exhaustive_cap = 1e6;

  friend bool operator==(const PruningPlan&, const PruningPlan&) = default;
};

// Output widths of the prunable layers.
std::vector<std::size_t> prunable_widths(const NetworkSpec& spec);

// Units to remove per prunable layer; throws when ratio * width is not integral.
std::vector<std::size_t> removal_counts(const std::vector<std::size_t>& widths, const PruningPlan& plan);

// Product of binomial coefficients (as a double; exact below 2^53).
double combination_space(const std::vector<std::size_t>& widths, const PruningPlan& plan);

double binomial(std::size_t n, std::size_t k);

// All k-subsets of {0..n-1} in lexicographic order.
std::vector<std::vector<std::size_t>> k_subsets(std::size_t n, std::size_t k);

// Exhaustive: full Cartesian product in canonical order. Sample: sample_count
// distinct combinations drawn uniformly without replacement, returned in
// canonical order.
std::vector<PruningCombination> enumerate_combinations(const std::vector<std::size_t>& widths,
                                                       const PruningPlan& plan);

// Throws Error (validation) if the combination cannot be applied to `spec`.
void validate_combination(const NetworkSpec& spec, const PruningCombination& combo);

// Spec after physically removing the combination's units.
NetworkSpec shrink_spec(const NetworkSpec& spec, const PruningCombination& combo);

// Remaining trainable scalars after pruning.
std::size_t keep_budget(const NetworkSpec& spec, const PruningCombination& combo);

// For each weighted layer of the original spec, the kept output units and the
// kept input positions (conv input channels or flattened FC columns).
struct KeptUnits {
  std::vector<std::size_t> outputs;
  std::vector<std::size_t> inputs;
};
std::vector<KeptUnits> kept_units(const NetworkSpec& spec, const PruningCombination& combo);

// Structural removal: deleted filters drop their weights and bias, and the
// successor weighted layer loses the matching input channel (or the block of
// flattened positions belonging to that channel).
template <typename T>
Network<T> apply_combination(const Network<T>& net, const PruningCombination& combo) {
  check_params(net);
  if (combo.empty()) return net;
  const auto kept = kept_units(net.spec, combo);
  Network<T> out{shrink_spec(net.spec, combo), {}, net.rng_seed};
  out.params.resize(net.params.size());
  for (std::size_t i = 0; i < net.params.size(); ++i) {
    const auto& src = net.params[i];
    if (src.weight.empty()) continue;
    const auto& k = kept[i];
    const std::size_t in_units = src.weight.dim(1);
    const std::size_t inner = src.weight.size() / (src.weight.dim(0) * in_units);  // kh*kw or 1
    std::vector<std::size_t> wshape = src.weight.shape();
    wshape[0] = k.outputs.size();
    wshape[1] = k.inputs.size();
    std::vector<T> w;
    w.reserve(shape_size(wshape));
    for (std::size_t o : k.outputs) {
      for (std::size_t c : k.inputs) {
        const auto first = src.weight.values().begin() + static_cast<std::ptrdiff_t>((o * in_units + c) * inner);
        w.insert(w.end(), first, first + static_cast<std::ptrdiff_t>(inner));
      }
    }
    std::vector<T> b;
    for (std::size_t o : k.outputs) b.push_back(src.bias[o]);
    out.params[i].weight = Tensor<T>(std::move(wshape), std::move(w));
    out.params[i].bias = Tensor<T>({k.outputs.size()}, std::move(b));
  }
  check_params(out);
  return out;
}

// Dataset-mean cross-entropy of an already pruned network; no parameter update.
template <typename T>
double pruned_train_loss(const Network<T>& pruned, const Dataset& train_set) {
  return evaluate(pruned, train_set).loss;
}

// Index of the lowest loss; ties go to the canonically smallest combination.
std::size_t oracle_select(const std::vector<PruningCombination>& combos, const std::vector<double>& losses);

}  // namespace prune_audit
