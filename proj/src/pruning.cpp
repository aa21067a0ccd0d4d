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

#include "prune_audit/pruning.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "prune_audit/rng.hpp"

namespace prune_audit {

std::string PruningCombination::encode() const {
  if (per_layer.empty()) return "none";
  std::ostringstream s;
  bool first_layer = true;
  for (const auto& [layer, indices] : per_layer) {
    if (!first_layer) s << ';';
    first_layer = false;
    s << 'L' << layer << ":{";
    for (std::size_t i = 0; i < indices.size(); ++i) {
      if (i) s << ',';
      s << indices[i];
    }
    s << '}';
  }
  return s.str();
}

PruningCombination PruningCombination::decode(std::string_view text) {
  const auto bad = [&](const std::string& why) {
    return Error("combination \"" + std::string(text) + "\": " + why, true);
  };
  PruningCombination combo;
  if (text == "none") return combo;
  std::size_t pos = 0;
  const auto number = [&]() {
    std::size_t v = 0;
    const auto [p, ec] = std::from_chars(text.data() + pos, text.data() + text.size(), v);
    if (ec != std::errc()) throw bad("expected a number at offset " + std::to_string(pos));
    pos = static_cast<std::size_t>(p - text.data());
    return v;
  };
  const auto expect = [&](char c) {
    if (pos >= text.size() || text[pos] != c) throw bad(std::string("expected '") + c + "'");
    ++pos;
  };
  while (pos < text.size()) {
    expect('L');
    const std::size_t layer = number();
    expect(':');
    expect('{');
    std::vector<std::size_t> indices;
    while (pos < text.size() && text[pos] != '}') {
      if (!indices.empty()) expect(',');
      indices.push_back(number());
    }
    expect('}');
    if (indices.empty()) throw bad("empty index set");
    if (!std::is_sorted(indices.begin(), indices.end()) ||
        std::adjacent_find(indices.begin(), indices.end()) != indices.end()) {
      throw bad("indices must be strictly increasing");
    }
    if (!combo.per_layer.emplace(layer, std::move(indices)).second) throw bad("duplicate layer");
    if (pos < text.size()) expect(';');
  }
  if (combo.per_layer.empty()) throw bad("empty encoding");
  return combo;
}

std::vector<std::size_t> prunable_widths(const NetworkSpec& spec) {
  std::vector<std::size_t> widths;
  for (std::size_t i : prunable_layers(spec)) widths.push_back(layer_width(spec.layers[i]));
  return widths;
}

std::vector<std::size_t> removal_counts(const std::vector<std::size_t>& widths, const PruningPlan& plan) {
  if (plan.layer_ratios.size() > widths.size()) {
    throw Error("plan has " + std::to_string(plan.layer_ratios.size()) + " layer ratios but the network has " +
                    std::to_string(widths.size()) + " prunable layers",
                true);
  }
  std::vector<std::size_t> counts(widths.size(), 0);
  for (std::size_t i = 0; i < plan.layer_ratios.size(); ++i) {
    const double r = plan.layer_ratios[i];
    if (!(r >= 0.0 && r < 1.0)) {
      throw Error("layer " + std::to_string(i) + ": ratio " + std::to_string(r) + " outside [0, 1)", true);
    }
    const double exact = r * static_cast<double>(widths[i]);
    const double rounded = std::round(exact);
    if (std::abs(exact - rounded) > 1e-6) {
      throw Error("layer " + std::to_string(i) + ": ratio " + std::to_string(r) + " x width " +
                      std::to_string(widths[i]) + " is not integral",
                  true);
    }
    counts[i] = static_cast<std::size_t>(rounded);
  }
  return counts;
}

double binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0.0;
  k = std::min(k, n - k);
  double r = 1.0;
  for (std::size_t i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  return std::round(r);
}

double combination_space(const std::vector<std::size_t>& widths, const PruningPlan& plan) {
  const auto counts = removal_counts(widths, plan);
  double space = 1.0;
  for (std::size_t i = 0; i < widths.size(); ++i) space *= binomial(widths[i], counts[i]);
  return space;
}

std::vector<std::vector<std::size_t>> k_subsets(std::size_t n, std::size_t k) {
  std::vector<std::vector<std::size_t>> out;
  if (k > n) return out;
  std::vector<std::size_t> cur(k);
  std::iota(cur.begin(), cur.end(), std::size_t{0});
  for (;;) {
    out.push_back(cur);
    std::size_t i = k;
    while (i > 0 && cur[i - 1] == n - k + (i - 1)) --i;
    if (i == 0) break;
    ++cur[i - 1];
    for (std::size_t j = i; j < k; ++j) cur[j] = cur[j - 1] + 1;
  }
  return out;
}

namespace {

std::vector<PruningCombination> cartesian(const std::vector<std::size_t>& widths,
                                          const std::vector<std::size_t>& counts) {
  std::vector<std::size_t> layers;
  std::vector<std::vector<std::vector<std::size_t>>> choices;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    if (counts[i] == 0) continue;
    layers.push_back(i);
    choices.push_back(k_subsets(widths[i], counts[i]));
  }
  std::vector<PruningCombination> out;
  std::vector<std::size_t> digit(layers.size(), 0);
  for (;;) {
    PruningCombination c;
    for (std::size_t j = 0; j < layers.size(); ++j) c.per_layer[layers[j]] = choices[j][digit[j]];
    out.push_back(std::move(c));
    // Last layer varies fastest, which yields canonical (lexicographic) order.
    std::size_t j = layers.size();
    while (j > 0) {
      --j;
      if (++digit[j] < choices[j].size()) break;
      digit[j] = 0;
      if (j == 0) return out;
    }
    if (layers.empty()) return out;
  }
}

}  // namespace

std::vector<PruningCombination> enumerate_combinations(const std::vector<std::size_t>& widths,
                                                       const PruningPlan& plan) {
  const auto counts = removal_counts(widths, plan);
  const double space = combination_space(widths, plan);
  if (plan.mode == SearchMode::kExhaustive) {
    if (space > plan.exhaustive_cap) {
      throw Error("exhaustive search over " + std::to_string(space) + " combinations exceeds the cap of " +
                      std::to_string(plan.exhaustive_cap),
                  true);
    }
    return cartesian(widths, counts);
  }

  if (plan.sample_count == 0) throw Error("sample count must be positive", true);
  if (static_cast<double>(plan.sample_count) > space) {
    throw Error("sample count " + std::to_string(plan.sample_count) + " exceeds the " +
                    std::to_string(space) + " available combinations",
                true);
  }
  Rng rng(plan.sample_seed);
  if (space <= plan.exhaustive_cap && 2.0 * static_cast<double>(plan.sample_count) >= space) {
    auto all = cartesian(widths, counts);
    for (std::size_t i = 0; i < plan.sample_count; ++i) {
      std::swap(all[i], all[i + uniform_index(rng, all.size() - i)]);
    }
    all.resize(plan.sample_count);
    std::sort(all.begin(), all.end());
    return all;
  }
  std::set<PruningCombination> drawn;
  while (drawn.size() < plan.sample_count) {
    PruningCombination c;
    for (std::size_t i = 0; i < widths.size(); ++i) {
      if (counts[i] == 0) continue;
      std::vector<std::size_t> pool(widths[i]);
      std::iota(pool.begin(), pool.end(), std::size_t{0});
      for (std::size_t j = 0; j < counts[i]; ++j) std::swap(pool[j], pool[j + uniform_index(rng, pool.size() - j)]);
      pool.resize(counts[i]);
      std::sort(pool.begin(), pool.end());
      c.per_layer[i] = std::move(pool);
    }
    drawn.insert(std::move(c));
  }
  return {drawn.begin(), drawn.end()};
}

void validate_combination(const NetworkSpec& spec, const PruningCombination& combo) {
  const auto prunable = prunable_layers(spec);
  for (const auto& [layer, indices] : combo.per_layer) {
    if (layer >= prunable.size()) {
      throw Error("combination layer L" + std::to_string(layer) +
                      " is the output layer or beyond; the output layer is never pruned",
                  true);
    }
    const std::size_t width = layer_width(spec.layers[prunable[layer]]);
    if (indices.empty()) throw Error("combination layer L" + std::to_string(layer) + " has no indices", true);
    for (std::size_t k = 0; k < indices.size(); ++k) {
      if (indices[k] >= width) {
        throw Error("combination layer L" + std::to_string(layer) + ": index " + std::to_string(indices[k]) +
                        " outside width " + std::to_string(width),
                    true);
      }
      if (k > 0 && indices[k] <= indices[k - 1]) {
        throw Error("combination layer L" + std::to_string(layer) + ": indices not strictly increasing", true);
      }
    }
    if (indices.size() >= width) {
      throw Error("combination layer L" + std::to_string(layer) + " removes every unit", true);
    }
  }
}

NetworkSpec shrink_spec(const NetworkSpec& spec, const PruningCombination& combo) {
  validate_combination(spec, combo);
  NetworkSpec out = spec;
  const auto prunable = prunable_layers(spec);
  for (const auto& [layer, indices] : combo.per_layer) {
    auto& l = out.layers[prunable[layer]];
    if (auto* c = std::get_if<Conv2d>(&l)) {
      c->out_channels -= indices.size();
    } else {
      std::get<FullyConnected>(l).out_features -= indices.size();
    }
  }
  return out;
}

std::vector<KeptUnits> kept_units(const NetworkSpec& spec, const PruningCombination& combo) {
  validate_combination(spec, combo);
  const auto shapes = infer_shapes(spec);
  const auto prunable = prunable_layers(spec);
  std::vector<KeptUnits> kept(spec.layers.size());
  std::vector<std::size_t> prev_kept;  // kept outputs of the previous weighted layer
  std::size_t prev_width = 0;
  bool have_prev = false;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    if (!is_weighted(spec.layers[i])) continue;
    const std::size_t width = layer_width(spec.layers[i]);
    std::vector<bool> removed(width, false);
    const auto pos = std::find(prunable.begin(), prunable.end(), i);
    if (pos != prunable.end()) {
      const auto it = combo.per_layer.find(static_cast<std::size_t>(pos - prunable.begin()));
      if (it != combo.per_layer.end()) {
        for (std::size_t r : it->second) removed[r] = true;
      }
    }
    for (std::size_t o = 0; o < width; ++o) {
      if (!removed[o]) kept[i].outputs.push_back(o);
    }

    const FeatureShape& in = shapes[i];
    const std::size_t in_units = std::holds_alternative<Conv2d>(spec.layers[i]) ? in.channels : in.size();
    if (!have_prev) {
      kept[i].inputs.resize(in_units);
      std::iota(kept[i].inputs.begin(), kept[i].inputs.end(), std::size_t{0});
    } else {
      // Each kept predecessor unit owns a contiguous block: one channel for a
      // conv successor, h*w flattened positions for an FC successor.
      const std::size_t block = in_units / prev_width;
      for (std::size_t u : prev_kept) {
        for (std::size_t b = 0; b < block; ++b) kept[i].inputs.push_back(u * block + b);
      }
    }
    prev_kept = kept[i].outputs;
    prev_width = width;
    have_prev = true;
  }
  return kept;
}

std::size_t keep_budget(const NetworkSpec& spec, const PruningCombination& combo) {
  return param_count(shrink_spec(spec, combo));
}

std::size_t oracle_select(const std::vector<PruningCombination>& combos, const std::vector<double>& losses) {
  if (combos.empty()) throw Error("oracle_select: no combinations", true);
  if (combos.size() != losses.size()) throw Error("oracle_select: combination and loss counts differ", true);
  std::size_t best = 0;
  for (std::size_t i = 0; i < losses.size(); ++i) {
    if (!std::isfinite(losses[i])) throw Error("oracle_select: non-finite loss at index " + std::to_string(i), true);
    if (losses[i] < losses[best] || (losses[i] == losses[best] && combos[i] < combos[best])) best = i;
  }
  return best;
}

}  // namespace prune_audit
