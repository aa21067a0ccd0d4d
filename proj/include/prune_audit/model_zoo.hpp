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

#include <string>
#include <string_view>

#include "prune_audit/network.hpp"

namespace prune_audit {

// LeNet5-Mini family. W<k>D<m>: first conv has k filters, m weighted layers
// in total. Only conv1 width and the number of hidden FC layers vary.
struct VariantSpec {
  std::size_t conv1_width = 10;
  std::size_t depth = 5;
  std::size_t base_width = 10;

  void validate() const;
  std::string name() const;  // "W10D5"
  friend bool operator==(const VariantSpec&, const VariantSpec&) = default;
};

VariantSpec parse_variant(std::string_view text);

// Base W10D5:
//   Conv(10,5x5) MaxPool2 ReLU Conv(10,5x5) MaxPool2 ReLU Conv(10,3x3) ReLU
//   Flatten FC(10) ReLU FC(classes)
// Kernel sizes, pooling placement and the single hidden FC are a declared
// convention for this toolkit. Depth m > 5 inserts m-5 extra FC(10)+ReLU
// blocks before the output layer.
NetworkSpec build_lenet5_mini(const VariantSpec& variant, FeatureShape input = {1, 28, 28, false},
                              std::size_t classes = 10);

// One-line disclosure of the topology convention, attached to reports.
std::string topology_note();

// Flatten followed by FC(h) ReLU blocks and the output layer; used for the
// unstructured-criteria experiments.
NetworkSpec build_mlp(const std::vector<std::size_t>& hidden, FeatureShape input = {1, 28, 28, false},
                      std::size_t classes = 10);

}  // namespace prune_audit
