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

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "prune_audit/network.hpp"

namespace prune_audit {

// Mean-reduction helpers shared by the float and double paths. All
// reductions accumulate in double.

inline double log_sum_exp(std::span<const double> logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double v : logits) s += std::exp(v - m);
  return m + std::log(s);
}

inline std::vector<double> softmax(std::span<const double> logits) {
  const double lse = log_sum_exp(logits);
  std::vector<double> p(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) p[i] = std::exp(logits[i] - lse);
  return p;
}

inline void check_label(int label, std::size_t classes) {
  if (label < 0 || static_cast<std::size_t>(label) >= classes) {
    throw Error("label " + std::to_string(label) + " outside [0, " + std::to_string(classes) + ")",
                true);
  }
}

// -log softmax(logits)[label] for one row.
inline double cross_entropy_row(std::span<const double> logits, int label) {
  check_label(label, logits.size());
  return log_sum_exp(logits) - logits[static_cast<std::size_t>(label)];
}

// Mean cross-entropy over the rows of an N x classes logits tensor.
template <typename T>
double cross_entropy_loss(const Tensor<T>& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
    throw Error("cross_entropy_loss: " + std::to_string(labels.size()) + " labels for logits " +
                    shape_string(logits.shape()),
                true);
  }
  double total = 0.0;
  std::vector<double> row(logits.dim(1));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto r = logits.row(i);
    std::copy(r.begin(), r.end(), row.begin());
    total += cross_entropy_row(row, labels[i]);
  }
  return total / static_cast<double>(labels.size());
}

// Single-sample forward/backward over a fixed network. Activations are
// stored in T; deltas and parameter gradients accumulate in double.
template <typename T>
class Engine {
 public:
  explicit Engine(const Network<T>& net) : net_(net), shapes_(infer_shapes(net.spec)) {
    check_params(net);
    acts_.resize(shapes_.size());
    for (std::size_t i = 0; i < shapes_.size(); ++i) acts_[i].resize(shapes_[i].size());
    argmax_.resize(net.spec.layers.size());
    cols_.resize(net.spec.layers.size());
    for (std::size_t i = 0; i < net.spec.layers.size(); ++i) {
      if (std::holds_alternative<MaxPool2d>(net.spec.layers[i])) argmax_[i].resize(shapes_[i + 1].size());
    }
    delta_.resize(shapes_.size());
    for (std::size_t i = 0; i < shapes_.size(); ++i) delta_[i].resize(shapes_[i].size());
    std::size_t max_plane = 1;
    for (const auto& s : shapes_) max_plane = std::max(max_plane, s.height * s.width);
    accum_.resize(std::max(max_plane, num_classes(net.spec)));
    grad_w_.resize(net.params.size());
    grad_b_.resize(net.params.size());
    for (std::size_t i = 0; i < net.params.size(); ++i) {
      grad_w_[i].assign(net.params[i].weight.size(), 0.0);
      grad_b_[i].assign(net.params[i].bias.size(), 0.0);
    }
  }

  const std::vector<FeatureShape>& shapes() const { return shapes_; }
  const std::vector<T>& activation(std::size_t i) const { return acts_[i]; }

  // Returns the logits (double) for one sample; keeps activations for backward.
  std::span<const double> forward(std::span<const T> input) {
    if (input.size() != shapes_[0].size()) {
      throw ShapeError(0, "input has " + std::to_string(input.size()) + " values, expected " +
                              std::to_string(shapes_[0].size()));
    }
    std::copy(input.begin(), input.end(), acts_[0].begin());
    const std::size_t n = net_.spec.layers.size();
    for (std::size_t i = 0; i < n; ++i) {
      const LayerSpec& layer = net_.spec.layers[i];
      const bool last = (i + 1 == n);
      if (const auto* c = std::get_if<Conv2d>(&layer)) {
        conv_forward(i, *c);
      } else if (const auto* p = std::get_if<MaxPool2d>(&layer)) {
        pool_forward(i, *p);
      } else if (std::holds_alternative<ReLU>(layer)) {
        for (std::size_t k = 0; k < acts_[i].size(); ++k) acts_[i + 1][k] = std::max(acts_[i][k], T{0});
      } else if (std::holds_alternative<Flatten>(layer)) {
        acts_[i + 1] = acts_[i];
      } else {
        fc_forward(i, last);
      }
    }
    if (!std::holds_alternative<FullyConnected>(net_.spec.layers.back())) {
      logits_.assign(acts_.back().begin(), acts_.back().end());
    }
    return logits_;
  }

  // Accumulates d(loss)/d(params) given d(loss)/d(logits) of the last forward.
  void backward(std::span<const double> logits_grad) {
    const std::size_t n = net_.spec.layers.size();
    std::copy(logits_grad.begin(), logits_grad.end(), delta_[n].begin());
    for (std::size_t i = n; i-- > 0;) {
      const LayerSpec& layer = net_.spec.layers[i];
      const bool need_input_grad = (i > 0);
      if (const auto* c = std::get_if<Conv2d>(&layer)) {
        conv_backward(i, *c, need_input_grad);
      } else if (const auto* p = std::get_if<MaxPool2d>(&layer)) {
        (void)p;
        std::fill(delta_[i].begin(), delta_[i].end(), 0.0);
        for (std::size_t k = 0; k < argmax_[i].size(); ++k) delta_[i][argmax_[i][k]] += delta_[i + 1][k];
      } else if (std::holds_alternative<ReLU>(layer)) {
        for (std::size_t k = 0; k < delta_[i].size(); ++k) {
          delta_[i][k] = acts_[i][k] > T{0} ? delta_[i + 1][k] : 0.0;
        }
      } else if (std::holds_alternative<Flatten>(layer)) {
        delta_[i] = delta_[i + 1];
      } else {
        fc_backward(i, need_input_grad);
      }
    }
  }

  void zero_grad() {
    for (auto& g : grad_w_) std::fill(g.begin(), g.end(), 0.0);
    for (auto& g : grad_b_) std::fill(g.begin(), g.end(), 0.0);
  }

  // Accumulated gradients scaled by `scale`, shaped like the parameters.
  template <typename U = T>
  Gradients<U> gradients(double scale = 1.0) const {
    Gradients<U> out(net_.params.size());
    for (std::size_t i = 0; i < net_.params.size(); ++i) {
      if (net_.params[i].weight.empty()) continue;
      std::vector<U> w(grad_w_[i].size()), b(grad_b_[i].size());
      for (std::size_t k = 0; k < w.size(); ++k) w[k] = static_cast<U>(grad_w_[i][k] * scale);
      for (std::size_t k = 0; k < b.size(); ++k) b[k] = static_cast<U>(grad_b_[i][k] * scale);
      out[i].weight = Tensor<U>(net_.params[i].weight.shape(), std::move(w));
      out[i].bias = Tensor<U>(net_.params[i].bias.shape(), std::move(b));
    }
    return out;
  }

  const std::vector<double>& raw_weight_grad(std::size_t layer) const { return grad_w_[layer]; }
  const std::vector<double>& raw_bias_grad(std::size_t layer) const { return grad_b_[layer]; }

 private:
  // Patch matrix of layer i: row k = (ch, ky, kx), column = output position,
  // zero where the kernel reads padding.
  void im2col(std::size_t i, const Conv2d& c) {
    const FeatureShape& in = shapes_[i];
    const FeatureShape& out = shapes_[i + 1];
    const std::size_t plane = out.height * out.width;
    std::vector<double>& cols = cols_[i];
    cols.assign(in.channels * c.kernel_h * c.kernel_w * plane, 0.0);
    const T* x = acts_[i].data();
    std::size_t k = 0;
    for (std::size_t ch = 0; ch < in.channels; ++ch) {
      const T* xc = x + ch * in.height * in.width;
      for (std::size_t ky = 0; ky < c.kernel_h; ++ky) {
        for (std::size_t kx = 0; kx < c.kernel_w; ++kx, ++k) {
          const auto [lo, hi] = valid_range(kx, c, in.width, out.width);
          double* dst = cols.data() + k * plane;
          for (std::size_t oy = 0; oy < out.height; ++oy) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * c.stride + ky) -
                                      static_cast<std::ptrdiff_t>(c.padding);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(in.height)) continue;
            const T* row = xc + static_cast<std::size_t>(iy) * in.width;
            double* d = dst + oy * out.width;
            for (std::size_t ox = lo; ox < hi; ++ox) d[ox] = static_cast<double>(row[ox * c.stride + kx - c.padding]);
          }
        }
      }
    }
  }

  void conv_forward(std::size_t i, const Conv2d& c) {
    im2col(i, c);
    const std::size_t plane = shapes_[i + 1].height * shapes_[i + 1].width;
    const std::size_t kk = shapes_[i].channels * c.kernel_h * c.kernel_w;
    const T* w = net_.params[i].weight.data().data();
    const T* b = net_.params[i].bias.data().data();
    const double* cols = cols_[i].data();
    T* y = acts_[i + 1].data();
    double* acc = accum_.data();
    for (std::size_t o = 0; o < shapes_[i + 1].channels; ++o) {
      std::fill(acc, acc + plane, static_cast<double>(b[o]));
      const T* wo = w + o * kk;
      for (std::size_t k = 0; k < kk; ++k) {
        const double wv = wo[k];
        const double* src = cols + k * plane;
        for (std::size_t p = 0; p < plane; ++p) acc[p] += wv * src[p];
      }
      for (std::size_t p = 0; p < plane; ++p) y[o * plane + p] = static_cast<T>(acc[p]);
    }
  }

  void conv_backward(std::size_t i, const Conv2d& c, bool need_input_grad) {
    const FeatureShape& in = shapes_[i];
    const FeatureShape& out = shapes_[i + 1];
    const std::size_t plane = out.height * out.width;
    const std::size_t kk = in.channels * c.kernel_h * c.kernel_w;
    const T* w = net_.params[i].weight.data().data();
    const double* cols = cols_[i].data();
    const double* dy = delta_[i + 1].data();
    double* gw = grad_w_[i].data();
    double* gb = grad_b_[i].data();
    for (std::size_t o = 0; o < out.channels; ++o) {
      const double* dyo = dy + o * plane;
      double bsum = 0.0;
      for (std::size_t p = 0; p < plane; ++p) bsum += dyo[p];
      gb[o] += bsum;
      for (std::size_t k = 0; k < kk; ++k) {
        const double* src = cols + k * plane;
        // Four independent partial sums keep the reduction off the add-latency chain.
        double g4[4] = {0.0, 0.0, 0.0, 0.0};
        std::size_t p = 0;
        for (; p + 4 <= plane; p += 4) {
          for (std::size_t u = 0; u < 4; ++u) g4[u] += dyo[p + u] * src[p + u];
        }
        for (; p < plane; ++p) g4[0] += dyo[p] * src[p];
        gw[o * kk + k] += (g4[0] + g4[1]) + (g4[2] + g4[3]);
      }
    }
    if (!need_input_grad) return;
    // d(cols) = W^T dy, then scatter-add back onto the input positions.
    std::vector<double>& dcols = dcols_;
    dcols.assign(kk * plane, 0.0);
    for (std::size_t o = 0; o < out.channels; ++o) {
      const double* dyo = dy + o * plane;
      const T* wo = w + o * kk;
      for (std::size_t k = 0; k < kk; ++k) {
        const double wv = wo[k];
        double* dst = dcols.data() + k * plane;
        for (std::size_t p = 0; p < plane; ++p) dst[p] += wv * dyo[p];
      }
    }
    std::fill(delta_[i].begin(), delta_[i].end(), 0.0);
    double* dx = delta_[i].data();
    std::size_t k = 0;
    for (std::size_t ch = 0; ch < in.channels; ++ch) {
      double* dxc = dx + ch * in.height * in.width;
      for (std::size_t ky = 0; ky < c.kernel_h; ++ky) {
        for (std::size_t kx = 0; kx < c.kernel_w; ++kx, ++k) {
          const auto [lo, hi] = valid_range(kx, c, in.width, out.width);
          const double* src = dcols.data() + k * plane;
          for (std::size_t oy = 0; oy < out.height; ++oy) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * c.stride + ky) -
                                      static_cast<std::ptrdiff_t>(c.padding);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(in.height)) continue;
            double* row = dxc + static_cast<std::size_t>(iy) * in.width;
            const double* d = src + oy * out.width;
            for (std::size_t ox = lo; ox < hi; ++ox) row[ox * c.stride + kx - c.padding] += d[ox];
          }
        }
      }
    }
  }

  void pool_forward(std::size_t i, const MaxPool2d& p) {
    const FeatureShape& in = shapes_[i];
    const FeatureShape& out = shapes_[i + 1];
    const T* x = acts_[i].data();
    T* y = acts_[i + 1].data();
    std::size_t k = 0;
    for (std::size_t ch = 0; ch < out.channels; ++ch) {
      for (std::size_t oy = 0; oy < out.height; ++oy) {
        for (std::size_t ox = 0; ox < out.width; ++ox, ++k) {
          std::size_t best = (ch * in.height + oy * p.size) * in.width + ox * p.size;
          for (std::size_t dy = 0; dy < p.size; ++dy) {
            for (std::size_t dxp = 0; dxp < p.size; ++dxp) {
              const std::size_t idx = (ch * in.height + oy * p.size + dy) * in.width + ox * p.size + dxp;
              if (x[idx] > x[best]) best = idx;
            }
          }
          argmax_[i][k] = best;
          y[k] = x[best];
        }
      }
    }
  }

  void fc_forward(std::size_t i, bool last) {
    const std::size_t n_in = shapes_[i].size();
    const std::size_t n_out = shapes_[i + 1].size();
    const T* x = acts_[i].data();
    const T* w = net_.params[i].weight.data().data();
    const T* b = net_.params[i].bias.data().data();
    if (last) logits_.resize(n_out);
    for (std::size_t o = 0; o < n_out; ++o) {
      double s = b[o];
      const T* wr = w + o * n_in;
      for (std::size_t k = 0; k < n_in; ++k) s += static_cast<double>(wr[k]) * static_cast<double>(x[k]);
      acts_[i + 1][o] = static_cast<T>(s);
      if (last) logits_[o] = s;
    }
  }

  void fc_backward(std::size_t i, bool need_input_grad) {
    const std::size_t n_in = shapes_[i].size();
    const std::size_t n_out = shapes_[i + 1].size();
    const T* x = acts_[i].data();
    const T* w = net_.params[i].weight.data().data();
    const double* dy = delta_[i + 1].data();
    double* gw = grad_w_[i].data();
    double* gb = grad_b_[i].data();
    if (need_input_grad) std::fill(delta_[i].begin(), delta_[i].end(), 0.0);
    for (std::size_t o = 0; o < n_out; ++o) {
      const double d = dy[o];
      gb[o] += d;
      double* g = gw + o * n_in;
      const T* wr = w + o * n_in;
      for (std::size_t k = 0; k < n_in; ++k) g[k] += d * static_cast<double>(x[k]);
      if (need_input_grad) {
        double* dx = delta_[i].data();
        for (std::size_t k = 0; k < n_in; ++k) dx[k] += static_cast<double>(wr[k]) * d;
      }
    }
  }

  // Output columns [lo, hi) whose input column for kernel offset kx is in bounds.
  static std::pair<std::size_t, std::size_t> valid_range(std::size_t kx, const Conv2d& c,
                                                         std::size_t in_w, std::size_t out_w) {
    const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(c.stride);
    const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(kx) - static_cast<std::ptrdiff_t>(c.padding);
    std::ptrdiff_t lo = off >= 0 ? 0 : (-off + s - 1) / s;
    std::ptrdiff_t hi = (static_cast<std::ptrdiff_t>(in_w) - 1 - off);
    hi = hi < 0 ? 0 : hi / s + 1;
    hi = std::min<std::ptrdiff_t>(hi, static_cast<std::ptrdiff_t>(out_w));
    lo = std::min(lo, hi);
    return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
  }

  const Network<T>& net_;
  std::vector<FeatureShape> shapes_;
  std::vector<std::vector<T>> acts_;
  std::vector<std::vector<std::size_t>> argmax_;
  std::vector<std::vector<double>> delta_;
  std::vector<double> accum_;
  std::vector<std::vector<double>> cols_;
  std::vector<double> dcols_;
  std::vector<double> logits_;
  std::vector<std::vector<double>> grad_w_;
  std::vector<std::vector<double>> grad_b_;
};

// Batch is N x C x H x W (or N x features for flat inputs); returns N x classes.
template <typename T>
Tensor<T> forward(const Network<T>& net, const Tensor<T>& batch) {
  Engine<T> engine(net);
  const std::size_t per = engine.shapes().front().size();
  if (batch.rank() < 2 || batch.size() != batch.dim(0) * per) {
    throw ShapeError(0, "batch shape " + shape_string(batch.shape()) + " does not match network input");
  }
  const std::size_t n = batch.dim(0);
  const std::size_t classes = engine.shapes().back().size();
  Tensor<T> logits({n, classes});
  for (std::size_t i = 0; i < n; ++i) {
    const auto out = engine.forward(batch.row(i));
    for (std::size_t k = 0; k < classes; ++k) logits[i * classes + k] = static_cast<T>(out[k]);
  }
  return logits;
}

template <typename T>
struct LossAndGradients {
  double loss = 0.0;
  Gradients<T> grads;
};

// Gradients of the batch-mean cross-entropy.
template <typename T>
LossAndGradients<T> backward(const Network<T>& net, const Tensor<T>& batch, std::span<const int> labels) {
  Engine<T> engine(net);
  const std::size_t per = engine.shapes().front().size();
  if (batch.rank() < 2 || batch.size() != batch.dim(0) * per) {
    throw ShapeError(0, "batch shape " + shape_string(batch.shape()) + " does not match network input");
  }
  const std::size_t n = batch.dim(0);
  if (labels.size() != n) throw Error("backward: label count does not match batch", true);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto logits = engine.forward(batch.row(i));
    total += cross_entropy_row(logits, labels[i]);
    auto d = softmax(logits);
    d[static_cast<std::size_t>(labels[i])] -= 1.0;
    engine.backward(d);
  }
  return {total / static_cast<double>(n), engine.gradients(1.0 / static_cast<double>(n))};
}

}  // namespace prune_audit
