// Copyright 2026 The structprior Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "structprior/tensor.hpp"

namespace structprior {

enum class LayerKind { kConv2d, kMaxPool2x2, kRelu, kFlatten, kDense };
enum class Padding { kValid, kSame };

std::string_view layer_kind_name(LayerKind kind);

/// One layer of a feed-forward classifier. Convolutions are square, odd
/// sized and stride 1; `same` padding pads with zeros by (width - 1) / 2.
struct LayerSpec {
  LayerKind kind = LayerKind::kRelu;
  std::size_t out_channels = 0;  // conv2d
  std::size_t filter_width = 0;  // conv2d
  Padding padding = Padding::kValid;
  std::size_t out_units = 0;  // dense

  static LayerSpec conv2d(std::size_t out_channels, std::size_t filter_width, Padding padding);
  static LayerSpec maxpool2x2() { return LayerSpec{LayerKind::kMaxPool2x2}; }
  static LayerSpec relu() { return LayerSpec{LayerKind::kRelu}; }
  static LayerSpec flatten() { return LayerSpec{LayerKind::kFlatten}; }
  static LayerSpec dense(std::size_t out_units);

  bool has_parameters() const noexcept { return kind == LayerKind::kConv2d || kind == LayerKind::kDense; }
};

/// Per-example activations are (H, W, C) for images and (N) after flatten.
struct NetworkSpec {
  Shape input_shape;  // (H, W, C)
  std::vector<LayerSpec> layers;
  std::size_t n_outputs = 0;
};

/// Weights and biases of one conv2d or dense layer.
///
/// conv2d weights are (out_channels, in_channels, f, f); dense weights are
/// (in_units, out_units). Biases have one entry per output channel/unit.
struct LayerParams {
  std::size_t layer = 0;
  Tensor weights;
  Tensor biases;

  bool operator==(const LayerParams&) const = default;
};

struct ParameterSet {
  std::vector<LayerParams> blocks;

  LayerParams& for_layer(std::size_t layer);
  const LayerParams& for_layer(std::size_t layer) const;
  std::size_t scalar_count() const;

  bool operator==(const ParameterSet&) const = default;
};

/// Checks structural rules: odd filters, final dense layer with n_outputs
/// units, and that every layer accepts its input shape.
void validate_spec(const NetworkSpec& spec);

/// Output shape of every layer in order. Throws ShapeMismatch naming the
/// first layer whose input it cannot accept.
std::vector<Shape> infer_shapes(const NetworkSpec& spec);

/// Number of inputs feeding each unit of a parametric layer.
std::size_t fan_in(const NetworkSpec& spec, std::size_t layer);

std::optional<std::size_t> first_conv_layer(const NetworkSpec& spec);
std::size_t final_dense_layer(const NetworkSpec& spec);

/// All-zero parameters with the shapes `spec` requires.
ParameterSet zero_parameters(const NetworkSpec& spec);
void validate_parameters(const NetworkSpec& spec, const ParameterSet& params);

/// Logits (B, n_outputs) for a (B, H, W, C) batch. Each example is computed
/// independently with a fixed summation order, so results are bit-identical
/// whatever the batch composition.
Tensor forward(const NetworkSpec& spec, const ParameterSet& params, const Tensor& batch);

/// Output of layer `end_layer - 1` flattened per example: (B, features).
/// Parameters of layers at or after `end_layer` are never read.
Tensor forward_until(const NetworkSpec& spec, const ParameterSet& params, const Tensor& batch,
                     std::size_t end_layer);

/// Row-wise softmax with max subtraction.
Tensor softmax(const Tensor& logits);

/// Index of the largest entry per row; ties go to the lowest index.
std::vector<std::size_t> argmax_rows(const Tensor& scores, std::size_t* ties = nullptr);

struct LossAndGrad {
  double loss = 0.0;
  ParameterSet grads;
};

double mean_cross_entropy(const NetworkSpec& spec, const ParameterSet& params, const Tensor& batch,
                          std::span<const int> labels);

/// Mean softmax cross-entropy over the batch and its exact gradient.
LossAndGrad loss_and_grad(const NetworkSpec& spec, const ParameterSet& params, const Tensor& batch,
                          std::span<const int> labels);

using ParameterLoss = std::function<double(const ParameterSet&)>;

/// Central differences (L(p + h) - L(p - h)) / 2h for every scalar in `params`.
ParameterSet numeric_grad(const ParameterLoss& loss, const ParameterSet& params, double h);
ParameterSet numeric_grad(const NetworkSpec& spec, const ParameterSet& params, const Tensor& batch,
                          std::span<const int> labels, double h);

/// Convolutional classifier: conv(widths[0], first_filter, valid) + relu +
/// pool, then conv(widths[l], later_filter, same) + relu + pool per extra
/// layer, then flatten + dense(n_outputs).
NetworkSpec make_cnn(const Shape& input_shape, const std::vector<std::size_t>& widths, std::size_t n_outputs,
                     std::size_t first_filter = 5, std::size_t later_filter = 3);

/// Fully connected classifier with `depth` hidden relu layers of `hidden` units.
NetworkSpec make_fcnn(const Shape& input_shape, std::size_t depth, std::size_t hidden, std::size_t n_outputs);

/// 16, 256, 4096, ... filters for layers 1, 2, 3, ...
std::vector<std::size_t> default_cnn_widths(std::size_t depth);

}  // namespace structprior
