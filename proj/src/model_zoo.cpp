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

#include "prune_audit/model_zoo.hpp"

#include <charconv>

namespace prune_audit {

void VariantSpec::validate() const {
  if (depth < 5) throw Error("variant depth must be at least 5, got " + std::to_string(depth), true);
  if (conv1_width < base_width) {
    throw Error("variant conv1 width " + std::to_string(conv1_width) + " below base width " +
                    std::to_string(base_width),
                true);
  }
}

std::string VariantSpec::name() const {
  return "W" + std::to_string(conv1_width) + "D" + std::to_string(depth);
}

VariantSpec parse_variant(std::string_view text) {
  const auto bad = [&] { return Error("variant \"" + std::string(text) + "\" is not of the form W<k>D<m>", true); };
  if (text.size() < 4 || text[0] != 'W') throw bad();
  const auto d = text.find('D');
  if (d == std::string_view::npos) throw bad();
  VariantSpec v;
  const auto parse = [&](std::string_view s, std::size_t& out) {
    if (s.empty()) throw bad();
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    if (ec != std::errc() || p != s.data() + s.size()) throw bad();
  };
  parse(text.substr(1, d - 1), v.conv1_width);
  parse(text.substr(d + 1), v.depth);
  v.validate();
  return v;
}

NetworkSpec build_lenet5_mini(const VariantSpec& variant, FeatureShape input, std::size_t classes) {
  variant.validate();
  const std::size_t w = variant.base_width;
  NetworkSpec spec;
  spec.input = input;
  spec.layers = {
      Conv2d{variant.conv1_width, 5, 5, 1, 0},
      MaxPool2d{2},
      ReLU{},
      Conv2d{w, 5, 5, 1, 0},
      MaxPool2d{2},
      ReLU{},
      Conv2d{w, 3, 3, 1, 0},
      ReLU{},
      Flatten{},
      FullyConnected{w},
      ReLU{},
  };
  for (std::size_t extra = 5; extra < variant.depth; ++extra) {
    spec.layers.emplace_back(FullyConnected{w});
    spec.layers.emplace_back(ReLU{});
  }
  spec.layers.emplace_back(FullyConnected{classes});
  infer_shapes(spec);
  return spec;
}

std::string topology_note() {
  return "LeNet5-Mini topology is a declared convention: conv kernels 5,5,3; max-pool 2 after conv1 and "
         "conv2; one hidden FC(10); absolute values are not comparable to other LeNet5-Mini builds";
}

NetworkSpec build_mlp(const std::vector<std::size_t>& hidden, FeatureShape input, std::size_t classes) {
  NetworkSpec spec;
  spec.input = input;
  spec.layers.emplace_back(Flatten{});
  for (std::size_t h : hidden) {
    spec.layers.emplace_back(FullyConnected{h});
    spec.layers.emplace_back(ReLU{});
  }
  spec.layers.emplace_back(FullyConnected{classes});
  infer_shapes(spec);
  return spec;
}

}  // namespace prune_audit
