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

#include <cmath>

#include "prune_audit/engine.hpp"
#include "prune_audit/pruning.hpp"
#include "prune_audit/train.hpp"
#include "engine_checks.hpp"

namespace prune_audit {
namespace {

using testing::batch_loss;

TEST(GradientCheck, AllLayerKinds) {
  for (const auto& gc : testing::grad_cases()) {
    const auto st = testing::gradient_check(gc, 120);
    EXPECT_EQ(st.accepted, 120u) << gc.name << ": too many kink rejections";
    EXPECT_EQ(st.failures, 0u) << gc.name << ": " << st.first_failure;
    RecordProperty(std::string(gc.name) + "_worst_rel_error", std::to_string(st.worst));
  }
}

TEST(Engine, LossOfUniformLogitsIsLogClasses) {
  const NetworkSpec spec{{1, 2, 2, false}, {Flatten{}, FullyConnected{7}}};
  const Network<double> net = zero_network<double>(spec);
  Tensor<double> x({2, 1, 2, 2}, 0.5);
  const std::vector<int> y{0, 6};
  EXPECT_NEAR(batch_loss(net, x, y), std::log(7.0), 1e-12);
}

TEST(Engine, RejectsOutOfRangeLabel) {
  const NetworkSpec spec{{1, 2, 2, false}, {Flatten{}, FullyConnected{3}}};
  const Network<double> net = zero_network<double>(spec);
  Tensor<double> x({1, 1, 2, 2}, 0.0);
  const std::vector<int> y{3};
  EXPECT_THROW(backward(net, x, y), Error);
}

TEST(Engine, ConvMatchesDirectLoop) {
  const NetworkSpec spec{{2, 5, 6, false}, {Conv2d{3, 3, 2, 2, 1}, Flatten{}, FullyConnected{2}}};
  Rng rng(7);
  Network<double> net = init_network<double>(spec, 3);
  for (double& b : net.params[0].bias.values()) b = uniform(rng, -1, 1);
  const Tensor<double> x = testing::random_batch<double>(rng, 1, spec.input);
  Engine<double> engine(net);
  engine.forward(x.row(0));
  const auto& y = engine.activation(1);
  const auto out = engine.shapes()[1];
  ASSERT_EQ(out.height, 3u);
  ASSERT_EQ(out.width, 4u);
  const auto& w = net.params[0].weight;
  for (std::size_t o = 0; o < 3; ++o) {
    for (std::size_t oy = 0; oy < out.height; ++oy) {
      for (std::size_t ox = 0; ox < out.width; ++ox) {
        double s = net.params[0].bias[o];
        for (std::size_t c = 0; c < 2; ++c) {
          for (std::size_t ky = 0; ky < 3; ++ky) {
            for (std::size_t kx = 0; kx < 2; ++kx) {
              const long iy = static_cast<long>(oy * 2 + ky) - 1, ix = static_cast<long>(ox * 2 + kx) - 1;
              if (iy < 0 || ix < 0 || iy >= 5 || ix >= 6) continue;
              s += w[((o * 2 + c) * 3 + ky) * 2 + kx] * x[(c * 5 + static_cast<std::size_t>(iy)) * 6 +
                                                       static_cast<std::size_t>(ix)];
            }
          }
        }
        EXPECT_NEAR(y[(o * out.height + oy) * out.width + ox], s, 1e-12);
      }
    }
  }
}

TEST(MaskVsShrink, AgreeOnRandomInputs) {
  for (const auto& mc : testing::mask_cases()) {
    const auto st = testing::mask_vs_shrink(mc, 100);
    EXPECT_TRUE(st.shrank) << mc.name;
    EXPECT_LE(st.worst, 1e-6) << mc.name;
  }
}

TEST(Sgd, MomentumAndWeightDecayUpdate) {
  const NetworkSpec spec{{1, 1, 1, false}, {Flatten{}, FullyConnected{1}}};
  Network<double> net = zero_network<double>(spec);
  net.params[1].weight[0] = 2.0;
  Gradients<double> g(2);
  g[1].weight = Tensor<double>({1, 1}, 0.5);
  g[1].bias = Tensor<double>({1}, 1.0);
  SgdOptimizer<double> opt(0.9, 0.1);
  opt.step(net, g, 0.1);
  // v = 0.5 + 0.1*2 = 0.7; w = 2 - 0.07
  EXPECT_NEAR(net.params[1].weight[0], 1.93, 1e-12);
  EXPECT_NEAR(net.params[1].bias[0], -0.1, 1e-12);
  opt.step(net, g, 0.1);
  // v = 0.9*0.7 + 0.5 + 0.1*1.93 = 1.323
  EXPECT_NEAR(net.params[1].weight[0], 1.93 - 0.1323, 1e-12);
}

TEST(Train, LrScheduleLookup) {
  const std::vector<LrMilestone> s{{0, 1e-2}, {20, 1e-3}};
  EXPECT_DOUBLE_EQ(lr_at(s, 0), 1e-2);
  EXPECT_DOUBLE_EQ(lr_at(s, 19), 1e-2);
  EXPECT_DOUBLE_EQ(lr_at(s, 20), 1e-3);
  EXPECT_DOUBLE_EQ(lr_at(s, 29), 1e-3);
  EXPECT_THROW(lr_at({}, 0), Error);
}

TEST(Train, ConfigValidation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.lr_schedule = {{1, 0.1}};
  EXPECT_THROW(c.validate(), Error);
  c.lr_schedule = {{0, 0.1}, {5, 0.01}, {5, 0.001}};
  EXPECT_THROW(c.validate(), Error);
  c = TrainConfig{};
  c.epochs = 0;
  EXPECT_THROW(c.validate(false), Error);
  EXPECT_NO_THROW(c.validate(true));
}

TEST(Train, DivergenceIsReported) {
  const NetworkSpec spec{{1, 2, 2, false}, {Flatten{}, FullyConnected{3}}};
  Network<float> net = init_network<float>(spec, 1);
  Dataset ds{Tensor<float>({4, 1, 2, 2}, 1e30f), {0, 1, 2, 0}, "huge"};
  TrainConfig c;
  c.batch_size = 2;
  c.lr_schedule = {{0, 1e10}};
  EXPECT_THROW(train(net, ds, c, 0), DivergenceError);
}

TEST(Train, DeterministicForSeed) {
  const NetworkSpec spec{{1, 4, 4, false}, {Flatten{}, FullyConnected{6}, ReLU{}, FullyConnected{3}}};
  Rng rng(5);
  Dataset ds{testing::random_batch<float>(rng, 40, spec.input), std::vector<int>(40), "toy"};
  for (std::size_t i = 0; i < 40; ++i) ds.labels[i] = static_cast<int>(i % 3);
  TrainConfig c;
  c.epochs = 2;
  c.batch_size = 8;
  Network<float> a = init_network<float>(spec, 9), b = a;
  train(a, ds, c, 123);
  train(b, ds, c, 123);
  EXPECT_EQ(a, b);
  Network<float> d = init_network<float>(spec, 9);
  train(d, ds, c, 124);
  EXPECT_NE(a, d);
}

}  // namespace
}  // namespace prune_audit
