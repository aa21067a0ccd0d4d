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

#include "prune_audit/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace prune_audit {

namespace {

enum class LayerKind : std::uint8_t { kConv2d = 1, kMaxPool2d = 2, kReLU = 3, kFlatten = 4, kFullyConnected = 5 };

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void size(std::size_t v) {
    if (v > UINT32_MAX) throw Error("checkpoint: dimension exceeds 32 bits");
    u32(static_cast<std::uint32_t>(v));
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{bytes_[pos_++]} << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{bytes_[pos_++]} << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw Error("checkpoint: truncated at byte " + std::to_string(pos_), true);
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Network<float>& net) {
  check_params(net);
  Writer w;
  for (char c : {'P', 'A', 'U', 'D'}) w.u8(static_cast<std::uint8_t>(c));
  w.u32(kCheckpointVersion);
  w.u64(net.rng_seed);
  w.size(net.spec.input.channels);
  w.size(net.spec.input.height);
  w.size(net.spec.input.width);
  w.size(net.spec.layers.size());
  for (const auto& layer : net.spec.layers) {
    if (const auto* c = std::get_if<Conv2d>(&layer)) {
      w.u8(static_cast<std::uint8_t>(LayerKind::kConv2d));
      w.size(c->out_channels);
      w.size(c->kernel_h);
      w.size(c->kernel_w);
      w.size(c->stride);
      w.size(c->padding);
    } else if (const auto* p = std::get_if<MaxPool2d>(&layer)) {
      w.u8(static_cast<std::uint8_t>(LayerKind::kMaxPool2d));
      w.size(p->size);
    } else if (std::holds_alternative<ReLU>(layer)) {
      w.u8(static_cast<std::uint8_t>(LayerKind::kReLU));
    } else if (std::holds_alternative<Flatten>(layer)) {
      w.u8(static_cast<std::uint8_t>(LayerKind::kFlatten));
    } else {
      w.u8(static_cast<std::uint8_t>(LayerKind::kFullyConnected));
      w.size(std::get<FullyConnected>(layer).out_features);
    }
  }
  for (const auto& p : net.params) {
    for (float v : p.weight.values()) w.f32(v);
    for (float v : p.bias.values()) w.f32(v);
  }
  return w.take();
}

Network<float> decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  char magic[4];
  for (char& c : magic) c = static_cast<char>(r.u8());
  if (std::memcmp(magic, "PAUD", 4) != 0) throw Error("checkpoint: bad magic", true);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw Error("checkpoint: unsupported version " + std::to_string(version), true);
  }
  const std::uint64_t seed = r.u64();
  NetworkSpec spec;
  spec.input.channels = r.u32();
  spec.input.height = r.u32();
  spec.input.width = r.u32();
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    switch (static_cast<LayerKind>(r.u8())) {
      case LayerKind::kConv2d: {
        Conv2d c;
        c.out_channels = r.u32();
        c.kernel_h = r.u32();
        c.kernel_w = r.u32();
        c.stride = r.u32();
        c.padding = r.u32();
        spec.layers.emplace_back(c);
        break;
      }
      case LayerKind::kMaxPool2d:
        spec.layers.emplace_back(MaxPool2d{r.u32()});
        break;
      case LayerKind::kReLU:
        spec.layers.emplace_back(ReLU{});
        break;
      case LayerKind::kFlatten:
        spec.layers.emplace_back(Flatten{});
        break;
      case LayerKind::kFullyConnected:
        spec.layers.emplace_back(FullyConnected{r.u32()});
        break;
      default:
        throw Error("checkpoint: unknown layer kind at layer " + std::to_string(i), true);
    }
  }
  Network<float> net = zero_network<float>(spec);
  net.rng_seed = seed;
  for (auto& p : net.params) {
    for (float& v : p.weight.values()) v = r.f32();
    for (float& v : p.bias.values()) v = r.f32();
  }
  if (!r.done()) throw Error("checkpoint: trailing bytes", true);
  return net;
}

void save_checkpoint(const Network<float>& net, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(net);
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Network<float> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string(), true);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace prune_audit
