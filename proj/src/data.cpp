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

#include "prune_audit/data.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>

#include "prune_audit/rng.hpp"

namespace prune_audit {

namespace {

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void expect_magic(std::span<const std::uint8_t> bytes, std::uint32_t magic, const char* what) {
  if (bytes.size() < 4) throw IdxError(IdxError::Kind::kTruncated, std::string(what) + ": truncated header");
  const std::uint32_t got = read_be32(bytes, 0);
  if (got != magic) {
    throw IdxError(IdxError::Kind::kWrongMagic, std::string(what) + ": wrong magic " +
                                                    std::to_string(got) + ", expected " +
                                                    std::to_string(magic));
  }
}

std::uint8_t to_byte(float v) {
  const long r = std::lround(static_cast<double>(v) * 255.0);
  return static_cast<std::uint8_t>(std::clamp(r, 0L, 255L));
}

}  // namespace

Tensor<float> parse_idx_images(std::span<const std::uint8_t> bytes) {
  expect_magic(bytes, kIdxImagesMagic, "images");
  if (bytes.size() < 16) throw IdxError(IdxError::Kind::kTruncated, "images: truncated header");
  const std::size_t n = read_be32(bytes, 4);
  const std::size_t rows = read_be32(bytes, 8);
  const std::size_t cols = read_be32(bytes, 12);
  if (n == 0 || rows == 0 || cols == 0) {
    throw IdxError(IdxError::Kind::kBadDimensions, "images: zero dimension in header");
  }
  const std::size_t need = 16 + n * rows * cols;
  if (bytes.size() < need) {
    throw IdxError(IdxError::Kind::kTruncated, "images: expected " + std::to_string(need) +
                                                   " bytes, file has " + std::to_string(bytes.size()));
  }
  std::vector<float> data(n * rows * cols);
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<float>(bytes[16 + i]) / 255.0f;
  return Tensor<float>({n, 1, rows, cols}, std::move(data));
}

std::vector<int> parse_idx_labels(std::span<const std::uint8_t> bytes) {
  expect_magic(bytes, kIdxLabelsMagic, "labels");
  if (bytes.size() < 8) throw IdxError(IdxError::Kind::kTruncated, "labels: truncated header");
  const std::size_t n = read_be32(bytes, 4);
  if (n == 0) throw IdxError(IdxError::Kind::kBadDimensions, "labels: zero count in header");
  if (bytes.size() < 8 + n) {
    throw IdxError(IdxError::Kind::kTruncated, "labels: expected " + std::to_string(8 + n) +
                                                   " bytes, file has " + std::to_string(bytes.size()));
  }
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = bytes[8 + i];
    if (labels[i] >= 10) {
      throw IdxError(IdxError::Kind::kBadLabel, "labels: value " + std::to_string(labels[i]) +
                                                    " at index " + std::to_string(i) + " outside [0,10)");
    }
  }
  return labels;
}

std::vector<std::uint8_t> encode_idx_images(const Tensor<float>& images) {
  std::vector<std::uint8_t> out;
  out.reserve(16 + images.size());
  write_be32(out, kIdxImagesMagic);
  write_be32(out, static_cast<std::uint32_t>(images.dim(0)));
  write_be32(out, static_cast<std::uint32_t>(images.dim(images.rank() - 2)));
  write_be32(out, static_cast<std::uint32_t>(images.dim(images.rank() - 1)));
  for (float v : images.values()) out.push_back(to_byte(v));
  return out;
}

std::vector<std::uint8_t> encode_idx_labels(std::span<const int> labels) {
  std::vector<std::uint8_t> out;
  out.reserve(8 + labels.size());
  write_be32(out, kIdxLabelsMagic);
  write_be32(out, static_cast<std::uint32_t>(labels.size()));
  for (int l : labels) out.push_back(static_cast<std::uint8_t>(l));
  return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  // gzread passes uncompressed files through unchanged.
  gzFile f = gzopen(path.string().c_str(), "rb");
  if (f == nullptr) throw IdxError(IdxError::Kind::kIo, "cannot open " + path.string());
  std::vector<std::uint8_t> out;
  std::vector<std::uint8_t> chunk(1 << 20);
  for (;;) {
    const int got = gzread(f, chunk.data(), static_cast<unsigned>(chunk.size()));
    if (got < 0) {
      int errnum = 0;
      const std::string msg = gzerror(f, &errnum);
      gzclose(f);
      throw IdxError(IdxError::Kind::kIo, "read error in " + path.string() + ": " + msg);
    }
    if (got == 0) break;
    out.insert(out.end(), chunk.begin(), chunk.begin() + got);
  }
  gzclose(f);
  return out;
}

Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                 std::string name) {
  Dataset ds;
  ds.images = parse_idx_images(read_file_bytes(images_path));
  ds.labels = parse_idx_labels(read_file_bytes(labels_path));
  ds.name = std::move(name);
  if (ds.images.dim(0) != ds.labels.size()) {
    throw IdxError(IdxError::Kind::kCountMismatch,
                   std::to_string(ds.images.dim(0)) + " images but " + std::to_string(ds.labels.size()) +
                       " labels");
  }
  return ds;
}

namespace {

std::filesystem::path find_member(const std::filesystem::path& dir, const std::string& stem,
                                  const std::string& idx_suffix) {
  for (const std::string& base : {stem + idx_suffix, stem}) {
    for (const char* ext : {"", ".gz"}) {
      const auto p = dir / (base + ext);
      if (std::filesystem::exists(p)) return p;
    }
  }
  throw IdxError(IdxError::Kind::kIo, "no " + stem + " file under " + dir.string());
}

}  // namespace

SplitPair load_split(const std::filesystem::path& root, const std::string& name) {
  const auto dir = root / name;
  SplitPair pair;
  pair.train = load_idx(find_member(dir, "train-images", "-idx3-ubyte"),
                        find_member(dir, "train-labels", "-idx1-ubyte"), name + "/train");
  pair.test = load_idx(find_member(dir, "t10k-images", "-idx3-ubyte"),
                       find_member(dir, "t10k-labels", "-idx1-ubyte"), name + "/test");
  return pair;
}

std::optional<std::filesystem::path> data_root_from_env() {
  const char* v = std::getenv("PRUNE_AUDIT_DATA");
  if (v == nullptr || *v == '\0') return std::nullopt;
  return std::filesystem::path(v);
}

NormalizationStats compute_stats(const Dataset& ds) {
  const auto& v = ds.images.values();
  double sum = 0.0;
  for (float x : v) sum += x;
  const double mean = sum / static_cast<double>(v.size());
  double sq = 0.0;
  for (float x : v) sq += (x - mean) * (x - mean);
  return {mean, std::sqrt(sq / static_cast<double>(v.size()))};
}

std::pair<Dataset, NormalizationStats> standardize(const Dataset& ds,
                                                   std::optional<NormalizationStats> stats) {
  const NormalizationStats s = stats ? *stats : compute_stats(ds);
  if (!(s.std > 1e-12)) throw Error("standardize: zero standard deviation in " + ds.name, true);
  Dataset out = ds;
  for (float& x : out.images.values()) x = static_cast<float>((x - s.mean) / s.std);
  return {std::move(out), s};
}

std::vector<std::vector<std::size_t>> batch_iter(std::size_t n, std::size_t batch_size,
                                                 std::uint64_t seed, bool shuffle) {
  if (batch_size == 0) throw Error("batch_size must be at least 1", true);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (shuffle) {
    Rng rng(seed);
    fisher_yates(order, rng);
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

Dataset take(const Dataset& ds, std::span<const std::size_t> indices) {
  Dataset out;
  out.name = ds.name;
  out.images = gather_images(ds, indices);
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) out.labels.push_back(ds.labels.at(i));
  return out;
}

Tensor<float> gather_images(const Dataset& ds, std::span<const std::size_t> indices) {
  auto shape = ds.images.shape();
  shape[0] = indices.size();
  const std::size_t per = ds.sample_size();
  std::vector<float> data(indices.size() * per);
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const auto src = ds.images.row(indices[k]);
    std::copy(src.begin(), src.end(), data.begin() + static_cast<std::ptrdiff_t>(k * per));
  }
  return Tensor<float>(std::move(shape), std::move(data));
}

Dataset subset(const Dataset& ds, std::size_t n, std::uint64_t seed) {
  if (n == 0 || n > ds.size()) {
    throw Error("subset size " + std::to_string(n) + " outside [1, " + std::to_string(ds.size()) + "]",
                true);
  }
  std::vector<std::vector<std::size_t>> by_class(10);
  for (std::size_t i = 0; i < ds.size(); ++i) by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);

  // Largest-remainder quotas; ties go to the lower class id.
  std::vector<std::size_t> quota(10);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < 10; ++c) {
    const double exact = static_cast<double>(n) * static_cast<double>(by_class[c].size()) /
                         static_cast<double>(ds.size());
    quota[c] = static_cast<std::size_t>(std::floor(exact));
    assigned += quota[c];
    remainders.emplace_back(exact - std::floor(exact), c);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < n; ++k) {
    const std::size_t c = remainders[k % remainders.size()].second;
    if (quota[c] < by_class[c].size()) {
      ++quota[c];
      ++assigned;
    }
  }

  Rng rng(seed);
  std::vector<std::size_t> chosen;
  chosen.reserve(n);
  for (std::size_t c = 0; c < 10; ++c) {
    auto members = by_class[c];
    fisher_yates(members, rng);
    chosen.insert(chosen.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(quota[c]));
  }
  std::sort(chosen.begin(), chosen.end());
  return take(ds, chosen);
}

}  // namespace prune_audit
