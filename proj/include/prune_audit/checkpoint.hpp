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

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "prune_audit/network.hpp"

namespace prune_audit {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout (all integers little-endian):
//   "PAUD" | u32 version | u64 rng_seed
//   spec: u32 C, u32 H, u32 W, u32 layer_count, then per layer u8 kind and
//         kind-specific u32 fields
//   per weighted layer: f32 weights, then f32 biases
std::vector<std::uint8_t> encode_checkpoint(const Network<float>& net);
Network<float> decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Network<float>& net, const std::filesystem::path& path);
Network<float> load_checkpoint(const std::filesystem::path& path);

}  // namespace prune_audit
