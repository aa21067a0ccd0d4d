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

#include "prune_audit/criteria.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <numeric>
#include <sstream>

namespace prune_audit {

std::string scores_to_csv(const ImportanceScores& s) {
  std::ostringstream out;
  out.precision(17);
  out << "layer_id,unit_id,score\n";
  for (std::size_t k = 0; k < s.layers.size(); ++k) {
    for (std::size_t u = 0; u < s.scores[k].size(); ++u) out << k << ',' << u << ',' << s.scores[k][u] << '\n';
  }
  return out.str();
}

ImportanceScores score_l1_filters(const Network<float>& net) {
  check_params(net);
  ImportanceScores out;
  for (std::size_t i : prunable_layers(net.spec)) {
    const auto& w = net.params[i].weight;
    const std::size_t units = w.dim(0);
    const std::size_t per = w.size() / units;
    std::vector<double> s(units, 0.0);
    for (std::size_t u = 0; u < units; ++u) {
      for (std::size_t j = 0; j < per; ++j) s[u] += std::abs(static_cast<double>(w[u * per + j]));
    }
    out.layers.push_back(i);
    out.scores.push_back(std::move(s));
  }
  return out;
}

std::size_t UnstructuredMask::total() const {
  std::size_t n = 0;
  for (const auto& k : keep) n += k.size();
  return n;
}

std::size_t UnstructuredMask::zeros() const {
  std::size_t n = 0;
  for (const auto& k : keep) n += static_cast<std::size_t>(std::count(k.begin(), k.end(), std::uint8_t{0}));
  return n;
}

double UnstructuredMask::layer_sparsity(std::size_t k) const {
  return static_cast<double>(std::count(keep[k].begin(), keep[k].end(), std::uint8_t{0})) /
         static_cast<double>(keep[k].size());
}

Network<float> apply_mask(const Network<float>& net, const UnstructuredMask& mask) {
  Network<float> out = net;
  for (std::size_t k = 0; k < mask.layers.size(); ++k) {
    auto& w = out.params[mask.layers[k]].weight.values();
    if (w.size() != mask.keep[k].size()) throw ShapeError(mask.layers[k], "mask size does not match weights");
    for (std::size_t j = 0; j < w.size(); ++j) {
      if (!mask.keep[k][j]) w[j] = 0.0f;
    }
  }
  return out;
}

namespace {

void check_sparsity(double s) {
  if (!(s > 0.0 && s < 1.0)) throw Error("sparsity must be in (0, 1), got " + std::to_string(s), true);
}

// Positions of the `count` smallest |w|; ties resolved by position.
std::vector<std::size_t> smallest_magnitudes(std::span<const float> w, std::size_t count) {
  std::vector<std::size_t> order(w.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return std::abs(w[a]) < std::abs(w[b]); });
  order.resize(count);
  return order;
}

UnstructuredMask full_mask(const Network<float>& net) {
  UnstructuredMask m;
  for (std::size_t i : weighted_layers(net.spec)) {
    m.layers.push_back(i);
    m.keep.emplace_back(net.params[i].weight.size(), std::uint8_t{1});
  }
  return m;
}

}  // namespace

UnstructuredMask mask_ump(const Network<float>& net, double sparsity) {
  check_sparsity(sparsity);
  UnstructuredMask m = full_mask(net);
  for (std::size_t k = 0; k < m.layers.size(); ++k) {
    const auto w = net.params[m.layers[k]].weight.data();
    const auto n = static_cast<std::size_t>(std::floor(sparsity * static_cast<double>(w.size())));
    for (std::size_t j : smallest_magnitudes(w, n)) m.keep[k][j] = 0;
  }
  return m;
}

UnstructuredMask mask_gmp(const Network<float>& net, double sparsity) {
  check_sparsity(sparsity);
  UnstructuredMask m = full_mask(net);
  std::vector<std::pair<std::size_t, std::size_t>> slots;
  std::vector<float> mags;
  for (std::size_t k = 0; k < m.layers.size(); ++k) {
    const auto w = net.params[m.layers[k]].weight.data();
    for (std::size_t j = 0; j < w.size(); ++j) {
      slots.emplace_back(k, j);
      mags.push_back(std::abs(w[j]));
    }
  }
  const auto n = static_cast<std::size_t>(std::floor(sparsity * static_cast<double>(mags.size())));
  const auto chosen = smallest_magnitudes(mags, n);
  for (std::size_t idx : chosen) m.keep[slots[idx].first][slots[idx].second] = 0;
  m.threshold = chosen.empty() ? 0.0 : mags[chosen.back()];
  return m;
}

LayerRatioAssignment assign_ratios_affine(std::span<const double> layer_scores, std::span<const std::size_t> sizes,
                                          double target, const RatioOptions& opt) {
  if (!(target > 0.0 && target < 1.0)) throw Error("target sparsity must be in (0, 1)", true);
  if (target > opt.max_ratio) throw Error("target sparsity exceeds the per-layer ratio cap", true);
  if (layer_scores.size() != sizes.size() || sizes.empty()) throw Error("layer scores and sizes differ", true);
  const std::size_t L = sizes.size();
  LayerRatioAssignment a;
  a.layer_scores.assign(layer_scores.begin(), layer_scores.end());
  a.sizes.assign(sizes.begin(), sizes.end());
  const double total = static_cast<double>(std::accumulate(sizes.begin(), sizes.end(), std::size_t{0}));

  const auto [lo, hi] = std::minmax_element(layer_scores.begin(), layer_scores.end());
  std::vector<double> ratio(L, target);
  if (*hi - *lo <= 1e-12) {
    a.uniform_fallback = true;
  } else {
    std::vector<double> raw(L);
    for (std::size_t i = 0; i < L; ++i) raw[i] = 1.0 - opt.strength * (layer_scores[i] - *lo) / (*hi - *lo);
    // Rescale the unclamped layers until no further layer hits the cap.
    std::vector<bool> capped(L, false);
    for (;;) {
      double budget = target * total;
      double free_mass = 0.0;
      for (std::size_t i = 0; i < L; ++i) {
        if (capped[i]) {
          budget -= opt.max_ratio * static_cast<double>(sizes[i]);
        } else {
          free_mass += raw[i] * static_cast<double>(sizes[i]);
        }
      }
      const double scale = budget / free_mass;
      bool changed = false;
      for (std::size_t i = 0; i < L; ++i) {
        if (capped[i]) continue;
        ratio[i] = scale * raw[i];
        if (ratio[i] > opt.max_ratio) {
          capped[i] = true;
          changed = true;
        }
      }
      if (!changed) break;
    }
    for (std::size_t i = 0; i < L; ++i) {
      if (capped[i]) ratio[i] = opt.max_ratio;
    }
  }

  // Integer counts: floors, then largest remainders until the global count
  // equals round(target * total).
  const auto want = static_cast<std::size_t>(std::llround(target * total));
  a.removed.resize(L);
  std::vector<std::pair<double, std::size_t>> rem;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < L; ++i) {
    const double exact = std::clamp(ratio[i], 0.0, opt.max_ratio) * static_cast<double>(sizes[i]);
    a.removed[i] = static_cast<std::size_t>(std::floor(exact));
    assigned += a.removed[i];
    rem.emplace_back(exact - std::floor(exact), i);
  }
  std::stable_sort(rem.begin(), rem.end(), [](const auto& x, const auto& y) { return x.first > y.first; });
  for (std::size_t pass = 0; assigned < want && pass < 2 * L + want; ++pass) {
    const std::size_t i = rem[pass % L].second;
    const auto cap = static_cast<std::size_t>(std::floor(opt.max_ratio * static_cast<double>(sizes[i])));
    if (a.removed[i] < cap) {
      ++a.removed[i];
      ++assigned;
    }
  }
  while (assigned > want) {
    // Only reachable through floating-point slop; trim the largest layer.
    const auto i = static_cast<std::size_t>(std::max_element(a.removed.begin(), a.removed.end()) - a.removed.begin());
    --a.removed[i];
    --assigned;
  }
  for (std::size_t i = 0; i < L; ++i) {
    a.ratios.push_back(static_cast<double>(a.removed[i]) / static_cast<double>(sizes[i]));
  }
  a.achieved = static_cast<double>(assigned) / total;
  return a;
}

double outlier_fraction(std::span<const float> weights, double sigmas) {
  if (weights.empty()) return 0.0;
  double sum = 0.0;
  for (float w : weights) sum += std::abs(w);
  const double mean = sum / static_cast<double>(weights.size());
  double sq = 0.0;
  for (float w : weights) sq += (std::abs(w) - mean) * (std::abs(w) - mean);
  const double sd = std::sqrt(sq / static_cast<double>(weights.size()));
  std::size_t n = 0;
  for (float w : weights) n += std::abs(w) > mean + sigmas * sd;
  return static_cast<double>(n) / static_cast<double>(weights.size());
}

double principal_fraction(std::span<const float> weights, std::size_t rows, std::size_t cols, double energy,
                          std::size_t layer_for_errors) {
  if (rows * cols != weights.size() || rows == 0 || cols == 0) {
    throw ShapeError(layer_for_errors, "weight matrix shape does not match its data");
  }
  Eigen::MatrixXd m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const double v = weights[r * cols + c];
      if (!std::isfinite(v)) throw Error("SVD failed for layer " + std::to_string(layer_for_errors) + ": non-finite weight");
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v;
    }
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  if (svd.info() != Eigen::Success) throw Error("SVD failed for layer " + std::to_string(layer_for_errors));
  const Eigen::VectorXd s = svd.singularValues();
  double mass = 0.0;
  for (Eigen::Index i = 0; i < s.size(); ++i) mass += s(i) * s(i);
  const std::size_t k_max = std::min(rows, cols);
  if (mass == 0.0) return 0.0;
  double acc = 0.0;
  std::size_t k = 0;
  while (k < static_cast<std::size_t>(s.size())) {
    acc += s(static_cast<Eigen::Index>(k)) * s(static_cast<Eigen::Index>(k));
    ++k;
    if (acc >= energy * mass * (1.0 - 1e-12)) break;
  }
  return static_cast<double>(k) / static_cast<double>(k_max);
}

namespace {

std::vector<std::size_t> weight_sizes(const Network<float>& net, const std::vector<std::size_t>& layers) {
  std::vector<std::size_t> sizes;
  for (std::size_t i : layers) sizes.push_back(net.params[i].weight.size());
  return sizes;
}

}  // namespace

LayerRatioAssignment assign_ratios_onp(const Network<float>& net, double target, double sigmas,
                                       const RatioOptions& opt) {
  check_params(net);
  const auto layers = weighted_layers(net.spec);
  std::vector<double> f;
  for (std::size_t i : layers) f.push_back(outlier_fraction(net.params[i].weight.data(), sigmas));
  auto a = assign_ratios_affine(f, weight_sizes(net, layers), target, opt);
  a.layers = layers;
  return a;
}

LayerRatioAssignment assign_ratios_pnp(const Network<float>& net, double target, double energy,
                                       const RatioOptions& opt) {
  check_params(net);
  const auto layers = weighted_layers(net.spec);
  std::vector<double> p;
  for (std::size_t i : layers) {
    const auto& w = net.params[i].weight;
    p.push_back(principal_fraction(w.data(), w.dim(0), w.size() / w.dim(0), energy, i));
  }
  auto a = assign_ratios_affine(p, weight_sizes(net, layers), target, opt);
  a.layers = layers;
  return a;
}

UnstructuredMask mask_from_assignment(const Network<float>& net, const LayerRatioAssignment& a) {
  UnstructuredMask m = full_mask(net);
  if (m.layers != a.layers) throw Error("assignment layers do not match the network");
  for (std::size_t k = 0; k < m.layers.size(); ++k) {
    for (std::size_t j : smallest_magnitudes(net.params[m.layers[k]].weight.data(), a.removed[k])) m.keep[k][j] = 0;
  }
  return m;
}

}  // namespace prune_audit
