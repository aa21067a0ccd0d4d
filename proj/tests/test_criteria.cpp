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

#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <numeric>

#include "prune_audit/criteria.hpp"
#include "prune_audit/model_zoo.hpp"
#include "test_util.hpp"

namespace prune_audit {
namespace {

NetworkSpec flat_net(std::size_t inputs, std::vector<std::size_t> widths) {
  NetworkSpec spec;
  spec.input = {inputs, 1, 1, true};
  for (std::size_t k = 0; k < widths.size(); ++k) {
    spec.layers.emplace_back(FullyConnected{widths[k]});
    if (k + 1 < widths.size()) spec.layers.emplace_back(ReLU{});
  }
  return spec;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

TEST(L1, HandValuesAndLoopOracle) {
  Network<float> tiny = zero_network<float>(flat_net(3, {2, 2}));
  tiny.params[0].weight.values() = {1, -2, 3, 0, 0, 0};
  tiny.params[0].bias.values() = {5, 5};
  const auto s = score_l1_filters(tiny);
  ASSERT_EQ(s.scores.size(), 1u);
  EXPECT_EQ(s.scores[0], (std::vector<double>{6.0, 0.0}));

  const Network<float> net = init_network<float>(build_lenet5_mini(parse_variant("W20D5")), 4);
  const auto l1 = score_l1_filters(net);
  const auto layers = prunable_layers(net.spec);
  ASSERT_EQ(l1.layers, layers);
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const auto& w = net.params[layers[k]].weight;
    const auto& shape = w.shape();
    std::size_t inner = 1;
    for (std::size_t d = 1; d < shape.size(); ++d) inner *= shape[d];
    for (std::size_t o = 0; o < shape[0]; ++o) {
      double ref = 0.0;
      for (std::size_t j = 0; j < inner; ++j) ref += std::fabs(w.values()[o * inner + j]);
      EXPECT_NEAR(l1.scores[k][o], ref, 1e-9);
    }
  }
}

TEST(Taylor, ZeroNetworkScoresZero) {
  const Network<float> net = zero_network<float>(flat_net(4, {3, 2}));
  const Tensor<float> x({2, 4}, {1, 2, 3, 4, -1, 0, 1, 0});
  const std::vector<int> y = {0, 1};
  for (const auto& layer : score_taylor1_weights(net, x, y).scores) {
    for (double v : layer) EXPECT_EQ(v, 0.0);
  }
}

TEST(Taylor, FilterScoreIsSumOfWeightScores) {
  const Network<float> net = init_network<float>(build_lenet5_mini({}), 8);
  Rng rng(2);
  const Tensor<float> x = testing::random_batch<float>(rng, 4, net.spec.input);
  const std::vector<int> y = {1, 3, 5, 7};
  const auto per_weight = score_taylor1_weights(net, x, y);
  const auto filters = score_taylor1(net, x, y);
  ASSERT_EQ(filters.layers.size(), 4u);
  for (std::size_t k = 0; k < 4; ++k) {
    const auto& pw = per_weight.scores[k];
    const std::size_t units = filters.scores[k].size();
    const std::size_t per = pw.size() / units;
    for (std::size_t u = 0; u < units; ++u) {
      EXPECT_NEAR(filters.scores[k][u], std::accumulate(pw.begin() + u * per, pw.begin() + (u + 1) * per, 0.0),
                  1e-12);
    }
  }
  EXPECT_THROW(score_taylor1(net, Tensor<float>{}, std::vector<int>{}), Error);
}

// Zeroing one weight changes the loss by about g*w; compare across all weights.
TEST(Taylor, TracksLeaveOneOutLossChange) {
  const Network<double> net = init_network<double>(flat_net(6, {5, 3}), 12);
  Rng rng(9);
  const Tensor<double> x = testing::random_batch<double>(rng, 40, net.spec.input);
  std::vector<int> y(40);
  for (std::size_t i = 0; i < 40; ++i) y[i] = static_cast<int>(uniform_index(rng, 3));
  const double base = backward(net, x, y).loss;
  const auto saliency = score_taylor1_weights(net, x, y);
  std::vector<double> taylor, loo;
  for (std::size_t k = 0; k < saliency.layers.size(); ++k) {
    for (std::size_t j = 0; j < saliency.scores[k].size(); ++j) {
      Network<double> cut = net;
      cut.params[saliency.layers[k]].weight[j] = 0.0;
      loo.push_back(std::fabs(backward(cut, x, y).loss - base));
      taylor.push_back(saliency.scores[k][j]);
    }
  }
  EXPECT_GT(pearson(taylor, loo), 0.9);
}

TEST(Ump, HandExampleAndSortOracle) {
  Network<float> tiny = zero_network<float>(flat_net(4, {1}));
  tiny.params[0].weight.values() = {1, -4, 2, -3};
  const auto m = mask_ump(tiny, 0.5);
  EXPECT_EQ(m.keep[0], (std::vector<std::uint8_t>{0, 1, 0, 1}));

  const Network<float> net = init_network<float>(build_lenet5_mini({}), 3);
  for (double s : {0.1, 0.4375, 0.9}) {
    const auto mask = mask_ump(net, s);
    for (std::size_t k = 0; k < mask.layers.size(); ++k) {
      std::vector<float> mags;
      for (float w : net.params[mask.layers[k]].weight.values()) mags.push_back(std::fabs(w));
      std::vector<float> sorted = mags;
      std::sort(sorted.begin(), sorted.end());
      const auto n = static_cast<std::size_t>(std::floor(s * static_cast<double>(mags.size())));
      EXPECT_NEAR(mask.layer_sparsity(k), s, 1.0 / static_cast<double>(mags.size()));
      for (std::size_t j = 0; j < mags.size(); ++j) {
        if (mask.keep[k][j]) {
          EXPECT_GE(mags[j], sorted[n - 1]);
        } else {
          EXPECT_LE(mags[j], sorted[n - 1]);
        }
      }
    }
    EXPECT_EQ(mask.sparsity(), static_cast<double>(mask.zeros()) / static_cast<double>(mask.total()));
  }
  EXPECT_THROW(mask_ump(net, 1.0), Error);
}

TEST(Gmp, HandExampleThresholdAndDegenerateCase) {
  Network<float> two = zero_network<float>(flat_net(2, {1, 2}));
  two.params[0].weight.values() = {10, 10};
  two.params[2].weight.values() = {0.1f, 0.1f};
  const auto m = mask_gmp(two, 0.5);
  EXPECT_EQ(m.keep[0], (std::vector<std::uint8_t>{1, 1}));
  EXPECT_EQ(m.keep[1], (std::vector<std::uint8_t>{0, 0}));

  const Network<float> net = init_network<float>(build_lenet5_mini({}), 6);
  std::vector<float> all;
  for (std::size_t i : weighted_layers(net.spec)) {
    for (float w : net.params[i].weight.values()) all.push_back(std::fabs(w));
  }
  std::sort(all.begin(), all.end());
  const auto g = mask_gmp(net, 0.4375);
  const auto n = static_cast<std::size_t>(std::floor(0.4375 * static_cast<double>(all.size())));
  EXPECT_EQ(g.threshold, all[n - 1]);
  EXPECT_EQ(g.zeros(), n);

  const Network<float> single = init_network<float>(flat_net(30, {10}), 2);
  EXPECT_EQ(mask_gmp(single, 0.3).keep, mask_ump(single, 0.3).keep);
}

TEST(Ranking, ScaleEquivariantWithinLayer) {
  const Network<float> net = init_network<float>(build_lenet5_mini({}), 10);
  Network<float> scaled = net;
  const std::size_t layer = prunable_layers(net.spec)[1];
  for (float& w : scaled.params[layer].weight.values()) w *= 3.5f;
  const auto a = score_l1_filters(net), b = score_l1_filters(scaled);
  const auto order = [](const std::vector<double>& s) {
    std::vector<std::size_t> idx(s.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return s[i] < s[j]; });
    return idx;
  };
  EXPECT_EQ(order(a.scores[1]), order(b.scores[1]));
  EXPECT_EQ(mask_ump(net, 0.5).keep, mask_ump(scaled, 0.5).keep);
}

TEST(Onp, AffineRescaleSolvedByHand) {
  const std::vector<double> f = {0.1, 0.0};
  const std::vector<std::size_t> sizes = {100, 100};
  // raw = 1 - 0.5 * normalized score = {0.5, 1}; scale c with c * (50 + 100) = 80.
  const auto a = assign_ratios_affine(f, sizes, 0.4);
  EXPECT_LT(a.ratios[0], a.ratios[1]);
  EXPECT_NEAR(a.ratios[0], 0.4 * 200 / 150 * 0.5, 0.01);
  EXPECT_NEAR(a.ratios[1], 0.4 * 200 / 150, 0.01);
  EXPECT_NEAR(a.achieved, 0.4, 1e-3);
  EXPECT_EQ(a.removed[0] + a.removed[1], 80u);

  const auto u = assign_ratios_affine(std::vector<double>{0.2, 0.2, 0.2}, std::vector<std::size_t>{30, 50, 70}, 0.4);
  EXPECT_TRUE(u.uniform_fallback);
  for (double r : u.ratios) EXPECT_NEAR(r, 0.4, 1.0 / 30);
}

TEST(Onp, RatioCapIsRespected) {
  const auto a = assign_ratios_affine(std::vector<double>{0.0, 1.0}, std::vector<std::size_t>{1000, 10}, 0.9);
  EXPECT_LE(a.ratios[0], 0.95 + 1e-12);
  EXPECT_NEAR(a.achieved, 0.9, 1e-3);
}

TEST(Onp, OutlierFraction) {
  std::vector<float> w(100, 1.0f);
  EXPECT_EQ(outlier_fraction(w), 0.0);
  w[0] = 100.0f;
  EXPECT_NEAR(outlier_fraction(w), 0.01, 1e-12);
}

TEST(Pnp, RankOneAndIdentityExtremes) {
  Network<float> net = init_network<float>(flat_net(4, {4, 4, 4}), 1);
  auto& rank1 = net.params[0].weight.values();
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t c = 0; c < 4; ++c) rank1[r * 4 + c] = static_cast<float>((r + 1) * (c + 2));
  }
  auto& eye = net.params[2].weight.values();
  std::fill(eye.begin(), eye.end(), 0.0f);
  for (std::size_t i = 0; i < 4; ++i) eye[i * 4 + i] = 1.0f;
  const auto a = assign_ratios_pnp(net, 0.4);
  EXPECT_DOUBLE_EQ(a.layer_scores[0], 0.25);
  EXPECT_DOUBLE_EQ(a.layer_scores[1], 1.0);
  EXPECT_EQ(std::max_element(a.ratios.begin(), a.ratios.end()) - a.ratios.begin(), 0);
  EXPECT_EQ(std::min_element(a.ratios.begin(), a.ratios.end()) - a.ratios.begin(), 1);
}

// Eigenvalues of W^T W are the squared singular values of W.
TEST(Pnp, MatchesGramMatrixEigenvalues) {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t rows = 2 + uniform_index(rng, 12), cols = 2 + uniform_index(rng, 12);
    std::vector<float> w(rows * cols);
    for (float& v : w) v = static_cast<float>(uniform(rng, -1, 1) * (uniform01(rng) < 0.3 ? 5.0 : 1.0));
    Eigen::MatrixXd m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = w[r * cols + c];
    }
    const Eigen::MatrixXd gram = m.transpose() * m;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
    std::vector<double> ev(eig.eigenvalues().data(), eig.eigenvalues().data() + eig.eigenvalues().size());
    std::sort(ev.rbegin(), ev.rend());
    const double mass = std::accumulate(ev.begin(), ev.end(), 0.0);
    std::size_t k = 0;
    for (double acc = 0.0; k < ev.size() && acc < 0.95 * mass * (1 - 1e-9);) acc += ev[k++];
    EXPECT_DOUBLE_EQ(principal_fraction(w, rows, cols), static_cast<double>(k) / std::min(rows, cols))
        << rows << "x" << cols;
  }
  EXPECT_THROW(principal_fraction(std::vector<float>{1, 2, 3}, 2, 2, 0.95, 4), ShapeError);
}

TEST(OnpPnp, HitTargetOnRandomNets) {
  Rng rng(23);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::size_t> widths;
    const std::size_t depth = 2 + uniform_index(rng, 3);
    for (std::size_t d = 0; d + 1 < depth; ++d) widths.push_back(8 + uniform_index(rng, 40));
    widths.push_back(10);
    const Network<float> net = init_network<float>(flat_net(32 + uniform_index(rng, 32), widths), trial);
    const double target = uniform(rng, 0.05, 0.9);
    for (const auto& a : {assign_ratios_onp(net, target), assign_ratios_pnp(net, target)}) {
      EXPECT_NEAR(a.achieved, target, 1e-3) << "trial " << trial;
      const auto mask = mask_from_assignment(net, a);
      EXPECT_DOUBLE_EQ(mask.sparsity(), a.achieved);
      for (double r : a.ratios) {
        EXPECT_GE(r, 0.0);
        EXPECT_LE(r, 0.95);
      }
    }
  }
}

TEST(Csv, ScoreRows) {
  ImportanceScores s{{0, 3}, {{1.5, 2}, {0.25}}};
  EXPECT_EQ(scores_to_csv(s), "layer_id,unit_id,score\n0,0,1.5\n0,1,2\n1,0,0.25\n");
}

}  // namespace
}  // namespace prune_audit
