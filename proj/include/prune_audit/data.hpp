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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "prune_audit/tensor.hpp"

namespace prune_audit {

inline constexpr std::uint32_t kIdxImagesMagic = 2051;  // 0x00000803
inline constexpr std::uint32_t kIdxLabelsMagic = 2049;  // 0x00000801

struct Dataset {
  Tensor<float> images;  // N x 1 x H x W
  std::vector<int> labels;
  std::string name;

  std::size_t size() const { return labels.size(); }
  std::size_t sample_size() const { return images.size() / images.dim(0); }
};

struct SplitPair {
  Dataset train;
  Dataset test;
};

struct NormalizationStats {
  double mean = 0.0;
  double std = 1.0;
};

// Raw IDX decoding. Pixels are mapped to [0, 1] by /255.
Tensor<float> parse_idx_images(std::span<const std::uint8_t> bytes);
std::vector<int> parse_idx_labels(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_idx_images(const Tensor<float>& images);
std::vector<std::uint8_t> encode_idx_labels(std::span<const int> labels);

// Reads a raw or gzip-compressed file.
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                 std::string name = {});

// <root>/<name>/{train-images, train-labels, t10k-images, t10k-labels}, each
// optionally carrying the usual -idx3-ubyte / -idx1-ubyte suffix and/or .gz.
SplitPair load_split(const std::filesystem::path& root, const std::string& name);

// Dataset root from the PRUNE_AUDIT_DATA environment variable, if set.
std::optional<std::filesystem::path> data_root_from_env();

NormalizationStats compute_stats(const Dataset& ds);

// Returns the standardized copy and the statistics used. When `stats` is
// absent they are computed from `ds`.
std::pair<Dataset, NormalizationStats> standardize(const Dataset& ds,
                                                   std::optional<NormalizationStats> stats = {});

// Index batches. Shuffled order is a seeded Fisher-Yates permutation; the
// final partial batch is kept.
std::vector<std::vector<std::size_t>> batch_iter(std::size_t n, std::size_t batch_size,
                                                 std::uint64_t seed, bool shuffle);

// Stratified subset of n items: per-class quotas by largest remainder,
// seeded choice within each class, original order preserved.
Dataset subset(const Dataset& ds, std::size_t n, std::uint64_t seed);

Dataset take(const Dataset& ds, std::span<const std::size_t> indices);

// Copies the listed samples into an N x C x H x W tensor.
Tensor<float> gather_images(const Dataset& ds, std::span<const std::size_t> indices);

}  // namespace prune_audit
