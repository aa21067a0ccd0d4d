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

#include "prune_audit/network.hpp"

#include <sstream>

namespace prune_audit {

namespace {

template <class... Fs>
struct Overloaded : Fs... {
  using Fs::operator()...;
};
template <class... Fs>
Overloaded(Fs...) -> Overloaded<Fs...>;

std::size_t conv_out(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding) {
  return (in + 2 * padding - kernel) / stride + 1;
}

}  // namespace

std::string layer_name(const LayerSpec& layer) {
  return std::visit(
      Overloaded{
          [](const Conv2d& c) {
            std::ostringstream s;
            s << "Conv2d(" << c.out_channels << ", " << c.kernel_h << "x" << c.kernel_w;
            if (c.stride != 1) s << ", stride " << c.stride;
            if (c.padding != 0) s << ", pad " << c.padding;
            s << ")";
            return s.str();
          },
          [](const MaxPool2d& p) { return "MaxPool2d(" + std::to_string(p.size) + ")"; },
          [](const ReLU&) { return std::string("ReLU"); },
          [](const Flatten&) { return std::string("Flatten"); },
          [](const FullyConnected& f) {
            return "FullyConnected(" + std::to_string(f.out_features) + ")";
          },
      },
      layer);
}

std::string describe(const NetworkSpec& spec) {
  std::ostringstream s;
  s << "input " << spec.input.channels << "x" << spec.input.height << "x" << spec.input.width;
  for (const auto& layer : spec.layers) s << " -> " << layer_name(layer);
  return s.str();
}

std::vector<FeatureShape> infer_shapes(const NetworkSpec& spec) {
  if (spec.input.size() == 0) throw ShapeError(0, "input shape has a zero dimension");
  std::vector<FeatureShape> shapes{spec.input};
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const FeatureShape in = shapes.back();
    FeatureShape out = std::visit(
        Overloaded{
            [&](const Conv2d& c) {
              if (in.flat) throw ShapeError(i, "Conv2d applied to flattened features");
              if (c.out_channels == 0 || c.kernel_h == 0 || c.kernel_w == 0 || c.stride == 0) {
                throw ShapeError(i, "Conv2d dimensions must be positive");
              }
              if (in.height + 2 * c.padding < c.kernel_h || in.width + 2 * c.padding < c.kernel_w) {
                throw ShapeError(i, "spatial dimension underflow: " + std::to_string(in.height) +
                                        "x" + std::to_string(in.width) + " input for " +
                                        layer_name(c));
              }
              return FeatureShape{c.out_channels, conv_out(in.height, c.kernel_h, c.stride, c.padding),
                                  conv_out(in.width, c.kernel_w, c.stride, c.padding), false};
            },
            [&](const MaxPool2d& p) {
              if (in.flat) throw ShapeError(i, "MaxPool2d applied to flattened features");
              if (p.size == 0) throw ShapeError(i, "MaxPool2d size must be positive");
              if (in.height < p.size || in.width < p.size) {
                throw ShapeError(i, "spatial dimension underflow: " + std::to_string(in.height) +
                                        "x" + std::to_string(in.width) + " input for " +
                                        layer_name(p));
              }
              return FeatureShape{in.channels, in.height / p.size, in.width / p.size, false};
            },
            [&](const ReLU&) { return in; },
            [&](const Flatten&) { return FeatureShape{in.size(), 1, 1, true}; },
            [&](const FullyConnected& f) {
              if (!in.flat) throw ShapeError(i, "FullyConnected requires a preceding Flatten");
              if (f.out_features == 0) throw ShapeError(i, "FullyConnected width must be positive");
              return FeatureShape{f.out_features, 1, 1, true};
            },
        },
        spec.layers[i]);
    shapes.push_back(out);
  }
  return shapes;
}

std::vector<std::size_t> weighted_layers(const NetworkSpec& spec) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    if (is_weighted(spec.layers[i])) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> prunable_layers(const NetworkSpec& spec) {
  auto out = weighted_layers(spec);
  if (!out.empty()) out.pop_back();
  return out;
}

std::size_t num_classes(const NetworkSpec& spec) {
  if (spec.layers.empty() || !std::holds_alternative<FullyConnected>(spec.layers.back())) {
    throw ShapeError(spec.layers.empty() ? 0 : spec.layers.size() - 1,
                     "network must end in a FullyConnected output layer");
  }
  return std::get<FullyConnected>(spec.layers.back()).out_features;
}

std::size_t layer_width(const LayerSpec& layer) {
  if (const auto* c = std::get_if<Conv2d>(&layer)) return c->out_channels;
  if (const auto* f = std::get_if<FullyConnected>(&layer)) return f->out_features;
  return 0;
}

std::vector<ParamShapes> param_shapes(const NetworkSpec& spec) {
  const auto shapes = infer_shapes(spec);
  std::vector<ParamShapes> out(spec.layers.size());
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const FeatureShape& in = shapes[i];
    if (const auto* c = std::get_if<Conv2d>(&spec.layers[i])) {
      out[i].weight = {c->out_channels, in.channels, c->kernel_h, c->kernel_w};
      out[i].bias = {c->out_channels};
    } else if (const auto* f = std::get_if<FullyConnected>(&spec.layers[i])) {
      out[i].weight = {f->out_features, in.size()};
      out[i].bias = {f->out_features};
    }
  }
  return out;
}

std::size_t param_count(const NetworkSpec& spec) {
  std::size_t total = 0;
  for (const auto& p : param_shapes(spec)) {
    if (!p.weight.empty()) total += shape_size(p.weight) + shape_size(p.bias);
  }
  return total;
}

}  // namespace prune_audit
