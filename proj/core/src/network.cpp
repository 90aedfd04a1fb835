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

#include "structprior/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

#include "structprior/error.hpp"

namespace structprior {

std::string_view layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::kConv2d: return "conv2d";
    case LayerKind::kMaxPool2x2: return "maxpool2x2";
    case LayerKind::kRelu: return "relu";
    case LayerKind::kFlatten: return "flatten";
    case LayerKind::kDense: return "dense";
  }
  return "unknown";
}

LayerSpec LayerSpec::conv2d(std::size_t out_channels, std::size_t filter_width, Padding padding) {
  LayerSpec layer{LayerKind::kConv2d};
  layer.out_channels = out_channels;
  layer.filter_width = filter_width;
  layer.padding = padding;
  return layer;
}

LayerSpec LayerSpec::dense(std::size_t out_units) {
  LayerSpec layer{LayerKind::kDense};
  layer.out_units = out_units;
  return layer;
}

LayerParams& ParameterSet::for_layer(std::size_t layer) {
  for (auto& block : blocks) {
    if (block.layer == layer) return block;
  }
  throw Error(ErrorCode::kShapeMismatch, "no parameters stored for layer " + std::to_string(layer));
}

const LayerParams& ParameterSet::for_layer(std::size_t layer) const {
  return const_cast<ParameterSet*>(this)->for_layer(layer);
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& block : blocks) n += block.weights.size() + block.biases.size();
  return n;
}

namespace {

[[noreturn]] void layer_error(std::size_t layer, const std::string& what) {
  throw Error(ErrorCode::kShapeMismatch, "layer " + std::to_string(layer) + ": " + what);
}

std::size_t conv_padding(const LayerSpec& layer) {
  return layer.padding == Padding::kSame ? (layer.filter_width - 1) / 2 : 0;
}

Shape layer_output_shape(const LayerSpec& layer, const Shape& in, std::size_t index) {
  switch (layer.kind) {
    case LayerKind::kConv2d: {
      if (in.size() != 3) layer_error(index, "conv2d needs an (H, W, C) input, got " + shape_to_string(in));
      const std::size_t pad = conv_padding(layer);
      const std::size_t f = layer.filter_width;
      if (in[0] + 2 * pad < f || in[1] + 2 * pad < f) {
        layer_error(index, "filter of width " + std::to_string(f) + " does not fit input " + shape_to_string(in));
      }
      return {in[0] + 2 * pad - f + 1, in[1] + 2 * pad - f + 1, layer.out_channels};
    }
    case LayerKind::kMaxPool2x2:
      if (in.size() != 3) layer_error(index, "maxpool2x2 needs an (H, W, C) input, got " + shape_to_string(in));
      if (in[0] < 2 || in[1] < 2) layer_error(index, "maxpool2x2 input smaller than 2x2: " + shape_to_string(in));
      return {in[0] / 2, in[1] / 2, in[2]};
    case LayerKind::kRelu:
      return in;
    case LayerKind::kFlatten:
      return {shape_size(in)};
    case LayerKind::kDense:
      if (in.size() != 1) layer_error(index, "dense needs a flat input, got " + shape_to_string(in));
      return {layer.out_units};
  }
  layer_error(index, "unknown layer kind");
}

Shape expected_weight_shape(const LayerSpec& layer, const Shape& in) {
  if (layer.kind == LayerKind::kConv2d) {
    return {layer.out_channels, in[2], layer.filter_width, layer.filter_width};
  }
  return {in[0], layer.out_units};
}

// Allocator whose value-construction leaves doubles uninitialized, so
// resizing scratch buffers does not zero memory that is overwritten anyway.
template <typename T>
struct UninitAllocator : std::allocator<T> {
  template <typename U>
  struct rebind {
    using other = UninitAllocator<U>;
  };
  UninitAllocator() = default;
  template <typename U>
  UninitAllocator(const UninitAllocator<U>&) noexcept {}
  template <typename U>
  void construct(U* p) noexcept {
    ::new (static_cast<void*>(p)) U;
  }
  template <typename U, typename... Args>
  void construct(U* p, Args&&... args) {
    ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
  }
};

using Buffer = std::vector<double, UninitAllocator<double>>;

// Per-layer execution plan. Convolution weights are kept transposed as
// (K, O) with K = in_channels * f * f in (channel, row, column) order, so a
// patch vector times the matrix gives all output channels at one position.
struct Plan {
  const LayerSpec* layer = nullptr;
  Shape in;
  Shape out;
  const double* weights = nullptr;  // conv: transposed copy below; dense: (in, out)
  const double* biases = nullptr;
  std::vector<double> transposed;
  std::size_t k = 0;  // inputs per output unit
  std::size_t o = 0;  // outputs per position
  std::size_t f = 0;
  std::size_t pad = 0;
};

std::vector<Plan> make_plans(const NetworkSpec& spec, const ParameterSet* params, std::size_t end_layer) {
  const auto shapes = infer_shapes(spec);
  std::vector<Plan> plans(end_layer);
  Shape in = spec.input_shape;
  for (std::size_t i = 0; i < end_layer; ++i) {
    Plan& plan = plans[i];
    plan.layer = &spec.layers[i];
    plan.in = in;
    plan.out = shapes[i];
    if (plan.layer->has_parameters() && params != nullptr) {
      const LayerParams& block = params->for_layer(i);
      const Shape wshape = expected_weight_shape(*plan.layer, in);
      if (block.weights.shape() != wshape) {
        layer_error(i, "weights " + shape_to_string(block.weights.shape()) + " expected " + shape_to_string(wshape));
      }
      const std::size_t n_out = plan.layer->kind == LayerKind::kConv2d ? plan.layer->out_channels : plan.layer->out_units;
      if (block.biases.shape() != Shape{n_out}) layer_error(i, "bias shape mismatch");
      plan.biases = block.biases.data().data();
      if (plan.layer->kind == LayerKind::kConv2d) {
        plan.f = plan.layer->filter_width;
        plan.pad = conv_padding(*plan.layer);
        plan.o = plan.layer->out_channels;
        plan.k = in[2] * plan.f * plan.f;
        plan.transposed.resize(plan.k * plan.o);
        const auto w = block.weights.data();
        for (std::size_t oc = 0; oc < plan.o; ++oc) {
          for (std::size_t kk = 0; kk < plan.k; ++kk) plan.transposed[kk * plan.o + oc] = w[oc * plan.k + kk];
        }
        plan.weights = plan.transposed.data();
      } else {
        plan.k = in[0];
        plan.o = plan.layer->out_units;
        plan.weights = block.weights.data().data();
      }
    }
    in = shapes[i];
  }
  return plans;
}

// acc[0..o) += sum_k x[k] * w[k, 0..o), k ascending; zero inputs are skipped.
template <std::size_t O>
inline void accumulate_rows_fixed(const double* __restrict x, std::size_t k, const double* __restrict w,
                                  double* __restrict acc) {
  double local[O];
  for (std::size_t j = 0; j < O; ++j) local[j] = acc[j];
  for (std::size_t kk = 0; kk < k; ++kk) {
    const double v = x[kk];
    if (v == 0.0) continue;
    const double* row = w + kk * O;
    for (std::size_t j = 0; j < O; ++j) local[j] += v * row[j];
  }
  for (std::size_t j = 0; j < O; ++j) acc[j] = local[j];
}

inline void accumulate_rows(const double* __restrict x, std::size_t k, const double* __restrict w, std::size_t o,
                            double* __restrict acc) {
  if (o == 10) return accumulate_rows_fixed<10>(x, k, w, acc);
  if (o == 16) return accumulate_rows_fixed<16>(x, k, w, acc);
  if (o == 32) return accumulate_rows_fixed<32>(x, k, w, acc);
  for (std::size_t kk = 0; kk < k; ++kk) {
    const double v = x[kk];
    if (v == 0.0) continue;
    const double* row = w + kk * o;
    for (std::size_t j = 0; j < o; ++j) acc[j] += v * row[j];
  }
}

// out[k, 0..o) += x[k] * d[0..o); zero inputs are skipped.
inline void accumulate_outer(const double* __restrict x, std::size_t k, const double* __restrict d, std::size_t o,
                             double* __restrict out) {
  for (std::size_t kk = 0; kk < k; ++kk) {
    const double v = x[kk];
    if (v == 0.0) continue;
    double* row = out + kk * o;
    for (std::size_t j = 0; j < o; ++j) row[j] += v * d[j];
  }
}

void build_patch(const Plan& plan, const double* in, std::size_t y, std::size_t x, double* patch) {
  const std::size_t h = plan.in[0], w = plan.in[1], c = plan.in[2];
  const std::size_t f = plan.f;
  const bool interior = y >= plan.pad && x >= plan.pad && y + f <= h + plan.pad && x + f <= w + plan.pad;
  if (interior) {
    const double* origin = in + ((y - plan.pad) * w + (x - plan.pad)) * c;
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t dy = 0; dy < f; ++dy) {
        const double* src = origin + dy * w * c + ch;
        for (std::size_t dx = 0; dx < f; ++dx) *patch++ = src[dx * c];
      }
    }
    return;
  }
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t dy = 0; dy < f; ++dy) {
      const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + dy) - static_cast<std::ptrdiff_t>(plan.pad);
      for (std::size_t dx = 0; dx < f; ++dx) {
        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x + dx) - static_cast<std::ptrdiff_t>(plan.pad);
        const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(h) && ix < static_cast<std::ptrdiff_t>(w);
        *patch++ = inside ? in[(static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) * c + ch] : 0.0;
      }
    }
  }
}

// Patches are written to `patches` (positions x K) when the caller keeps them
// for the backward pass; otherwise a single scratch row is reused.
// Same sums as the patch path, accumulated from each nonzero input pixel
// into every output it reaches. Iterating (channel, row, column) visits the
// terms of each output in ascending patch order, so results are identical.
void conv_forward_scatter(const Plan& plan, const double* in, double* out) {
  const std::size_t h = plan.in[0], w = plan.in[1], c = plan.in[2];
  const std::size_t ho = plan.out[0], wo = plan.out[1];
  const std::size_t f = plan.f, pad = plan.pad, o = plan.o;
  std::fill(out, out + ho * wo * o, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t iy = 0; iy < h; ++iy) {
      // Output rows oy = iy + pad - dy that lie inside [0, ho).
      const std::size_t dy_lo = iy + pad >= ho ? iy + pad - ho + 1 : 0;
      const std::size_t dy_hi = std::min(f, iy + pad + 1);
      for (std::size_t ix = 0; ix < w; ++ix) {
        const double v = in[(iy * w + ix) * c + ch];
        if (v == 0.0) continue;
        const std::size_t dx_lo = ix + pad >= wo ? ix + pad - wo + 1 : 0;
        const std::size_t dx_hi = std::min(f, ix + pad + 1);
        for (std::size_t dy = dy_lo; dy < dy_hi; ++dy) {
          const std::size_t oy = iy + pad - dy;
          for (std::size_t dx = dx_lo; dx < dx_hi; ++dx) {
            const std::size_t ox = ix + pad - dx;
            const double* __restrict row = plan.weights + ((ch * f + dy) * f + dx) * o;
            double* __restrict acc = out + (oy * wo + ox) * o;
            for (std::size_t j = 0; j < o; ++j) acc[j] += v * row[j];
          }
        }
      }
    }
  }
  for (std::size_t p = 0; p < ho * wo; ++p) {
    for (std::size_t j = 0; j < o; ++j) out[p * o + j] += plan.biases[j];
  }
}

// Few input channels means a sparse image input; scattering skips its zero
// pixels without building patches.
bool scatters(const Plan& plan) { return plan.in[2] <= 3; }

// Positions sharing one pass over the weight rows in the wide-layer path.
constexpr std::size_t kPositionBlock = 8;

// Each acc[b] gets the same kk-ascending sum as accumulate_rows; blocking
// only reuses every weight row for several positions while it is cached.
void accumulate_rows_block(const double* const* x, std::size_t nb, std::size_t k, const double* __restrict w,
                           std::size_t o, double* const* acc) {
  for (std::size_t kk = 0; kk < k; ++kk) {
    const double* __restrict row = w + kk * o;
    for (std::size_t b = 0; b < nb; ++b) {
      const double v = x[b][kk];
      if (v == 0.0) continue;
      double* __restrict a = acc[b];
      for (std::size_t j = 0; j < o; ++j) a[j] += v * row[j];
    }
  }
}

void conv_forward(const Plan& plan, const double* in, double* out, double* patches, Buffer& scratch) {
  if (patches == nullptr && scatters(plan)) return conv_forward_scatter(plan, in, out);
  const std::size_t wo = plan.out[1];
  const std::size_t positions = plan.out[0] * wo;
  const std::size_t block = plan.o > 32 ? kPositionBlock : 1;
  if (patches == nullptr) scratch.resize(block * plan.k);
  const double* x[kPositionBlock];
  double* acc[kPositionBlock];
  for (std::size_t p0 = 0; p0 < positions; p0 += block) {
    const std::size_t nb = std::min(block, positions - p0);
    for (std::size_t b = 0; b < nb; ++b) {
      const std::size_t p = p0 + b;
      double* patch = patches != nullptr ? patches + p * plan.k : scratch.data() + b * plan.k;
      build_patch(plan, in, p / wo, p % wo, patch);
      x[b] = patch;
      acc[b] = out + p * plan.o;
      std::fill(acc[b], acc[b] + plan.o, 0.0);
    }
    if (nb == 1) {
      accumulate_rows(x[0], plan.k, plan.weights, plan.o, acc[0]);
    } else {
      accumulate_rows_block(x, nb, plan.k, plan.weights, plan.o, acc);
    }
    for (std::size_t b = 0; b < nb; ++b) {
      for (std::size_t j = 0; j < plan.o; ++j) acc[b][j] += plan.biases[j];
    }
  }
}

void dense_forward(const Plan& plan, const double* in, double* out) {
  std::fill(out, out + plan.o, 0.0);
  accumulate_rows(in, plan.k, plan.weights, plan.o, out);
  for (std::size_t j = 0; j < plan.o; ++j) out[j] += plan.biases[j];
}

// Window order is (0,0), (0,1), (1,0), (1,1); the first maximal element wins.
void maxpool_forward(const Plan& plan, const double* in, double* out, std::uint32_t* argmax) {
  const std::size_t w = plan.in[1], c = plan.in[2];
  const std::size_t ho = plan.out[0], wo = plan.out[1];
  for (std::size_t y = 0; y < ho; ++y) {
    for (std::size_t x = 0; x < wo; ++x) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const std::size_t base = ((2 * y) * w + 2 * x) * c + ch;
        const std::size_t candidates[4] = {base, base + c, base + w * c, base + w * c + c};
        std::size_t best = candidates[0];
        for (int i = 1; i < 4; ++i) {
          if (in[candidates[i]] > in[best]) best = candidates[i];
        }
        const std::size_t o = (y * wo + x) * c + ch;
        out[o] = in[best];
        if (argmax != nullptr) argmax[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
}

struct ExampleTrace {
  std::vector<Buffer> acts;  // acts[i] is the input of layer i
  std::vector<Buffer> patches;
  std::vector<std::vector<std::uint32_t>> argmax;
};

void run_example(const std::vector<Plan>& plans, std::span<const double> input, ExampleTrace* trace,
                 Buffer& a, Buffer& b, Buffer& scratch) {
  a.assign(input.begin(), input.end());
  if (trace != nullptr) {
    trace->acts.resize(plans.size() + 1);
    trace->patches.resize(plans.size());
    trace->argmax.resize(plans.size());
    trace->acts[0] = a;
  }
  for (std::size_t i = 0; i < plans.size(); ++i) {
    const Plan& plan = plans[i];
    b.resize(shape_size(plan.out));
    switch (plan.layer->kind) {
      case LayerKind::kConv2d: {
        double* patches = nullptr;
        if (trace != nullptr) trace->patches[i].clear();
        if (trace != nullptr && !scatters(plan)) {
          trace->patches[i].resize(plan.out[0] * plan.out[1] * plan.k);
          patches = trace->patches[i].data();
        }
        conv_forward(plan, a.data(), b.data(), patches, scratch);
        break;
      }
      case LayerKind::kDense:
        dense_forward(plan, a.data(), b.data());
        break;
      case LayerKind::kMaxPool2x2: {
        std::uint32_t* idx = nullptr;
        if (trace != nullptr) {
          trace->argmax[i].resize(b.size());
          idx = trace->argmax[i].data();
        }
        maxpool_forward(plan, a.data(), b.data(), idx);
        break;
      }
      case LayerKind::kRelu:
        for (std::size_t j = 0; j < b.size(); ++j) b[j] = a[j] > 0.0 ? a[j] : 0.0;
        break;
      case LayerKind::kFlatten:
        std::copy(a.begin(), a.end(), b.begin());
        break;
    }
    std::swap(a, b);
    if (trace != nullptr) trace->acts[i + 1] = a;
  }
}

void check_batch(const NetworkSpec& spec, const Tensor& batch) {
  if (batch.rank() != spec.input_shape.size() + 1 ||
      !std::equal(spec.input_shape.begin(), spec.input_shape.end(), batch.shape().begin() + 1)) {
    throw Error(ErrorCode::kShapeMismatch, "batch " + shape_to_string(batch.shape()) +
                                               " does not match input shape " + shape_to_string(spec.input_shape));
  }
}

void check_labels(const NetworkSpec& spec, const Tensor& batch, std::span<const int> labels) {
  if (labels.size() != batch.dim(0)) {
    throw Error(ErrorCode::kShapeMismatch, "label count " + std::to_string(labels.size()) + " differs from batch size " +
                                               std::to_string(batch.dim(0)));
  }
  for (int label : labels) {
    if (label < 0 || static_cast<std::size_t>(label) >= spec.n_outputs) {
      throw Error(ErrorCode::kLabelOutOfRange, "label " + std::to_string(label) + " outside [0, " +
                                                   std::to_string(spec.n_outputs) + ")");
    }
  }
}

Tensor run_batch(const NetworkSpec& spec, const ParameterSet& params, const Tensor& batch, std::size_t end_layer) {
  check_batch(spec, batch);
  const auto plans = make_plans(spec, &params, end_layer);
  const Shape out_shape = end_layer == 0 ? spec.input_shape : plans.back().out;
  const std::size_t width = shape_size(out_shape);
  const std::size_t n = batch.dim(0);
  Tensor out({n, width});
  Buffer a, b, scratch;
  for (std::size_t i = 0; i < n; ++i) {
    run_example(plans, batch.row(i), nullptr, a, b, scratch);
    std::copy(a.begin(), a.end(), out.row(i).begin());
  }
  if (!out.all_finite()) throw Error(ErrorCode::kNonFiniteValue, "forward pass produced a non-finite activation");
  return out;
}

}  // namespace

void validate_spec(const NetworkSpec& spec) {
  if (spec.input_shape.size() != 3 || shape_size(spec.input_shape) == 0) {
    throw Error(ErrorCode::kShapeMismatch, "input shape must be (H, W, C) with positive entries");
  }
  if (spec.n_outputs == 0) throw Error(ErrorCode::kShapeMismatch, "n_outputs must be positive");
  if (spec.layers.empty() || spec.layers.back().kind != LayerKind::kDense ||
      spec.layers.back().out_units != spec.n_outputs) {
    throw Error(ErrorCode::kShapeMismatch, "final layer must be dense with n_outputs units");
  }
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& layer = spec.layers[i];
    if (layer.kind == LayerKind::kConv2d) {
      if (layer.filter_width == 0 || layer.filter_width % 2 == 0) layer_error(i, "conv2d filter width must be odd");
      if (layer.out_channels == 0) layer_error(i, "conv2d needs at least one output channel");
    }
    if (layer.kind == LayerKind::kDense && layer.out_units == 0) layer_error(i, "dense needs at least one unit");
  }
  infer_shapes(spec);
}

std::vector<Shape> infer_shapes(const NetworkSpec& spec) {
  std::vector<Shape> shapes;
  shapes.reserve(spec.layers.size());
  Shape in = spec.input_shape;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    in = layer_output_shape(spec.layers[i], in, i);
    shapes.push_back(in);
  }
  return shapes;
}

std::size_t fan_in(const NetworkSpec& spec, std::size_t layer) {
  const auto shapes = infer_shapes(spec);
  const Shape& in = layer == 0 ? spec.input_shape : shapes.at(layer - 1);
  const LayerSpec& l = spec.layers.at(layer);
  if (l.kind == LayerKind::kConv2d) return in[2] * l.filter_width * l.filter_width;
  if (l.kind == LayerKind::kDense) return in[0];
  throw Error(ErrorCode::kInvalidArgument, "layer " + std::to_string(layer) + " has no parameters");
}

std::optional<std::size_t> first_conv_layer(const NetworkSpec& spec) {
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    if (spec.layers[i].kind == LayerKind::kConv2d) return i;
  }
  return std::nullopt;
}

std::size_t final_dense_layer(const NetworkSpec& spec) {
  if (spec.layers.empty() || spec.layers.back().kind != LayerKind::kDense) {
    throw Error(ErrorCode::kShapeMismatch, "network does not end in a dense layer");
  }
  return spec.layers.size() - 1;
}

ParameterSet zero_parameters(const NetworkSpec& spec) {
  const auto shapes = infer_shapes(spec);
  ParameterSet params;
  Shape in = spec.input_shape;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& layer = spec.layers[i];
    if (layer.has_parameters()) {
      const std::size_t n_out = layer.kind == LayerKind::kConv2d ? layer.out_channels : layer.out_units;
      params.blocks.push_back(LayerParams{i, Tensor(expected_weight_shape(layer, in)), Tensor({n_out})});
    }
    in = shapes[i];
  }
  return params;
}

void validate_parameters(const NetworkSpec& spec, const ParameterSet& params) {
  const ParameterSet reference = zero_parameters(spec);
  if (reference.blocks.size() != params.blocks.size()) {
    throw Error(ErrorCode::kShapeMismatch, "parameter set has " + std::to_string(params.blocks.size()) +
                                               " blocks, network needs " + std::to_string(reference.blocks.size()));
  }
  for (std::size_t i = 0; i < reference.blocks.size(); ++i) {
    const auto& want = reference.blocks[i];
    const auto& got = params.blocks[i];
    if (want.layer != got.layer || want.weights.shape() != got.weights.shape() ||
        want.biases.shape() != got.biases.shape()) {
      layer_error(want.layer, "parameter shapes do not match the network");
    }
  }
}

Tensor forward(const NetworkSpec& spec, const ParameterSet& params, const Tensor& batch) {
  return run_batch(spec, params, batch, spec.layers.size());
}

Tensor forward_until(const NetworkSpec& spec, const ParameterSet& params, const Tensor& batch, std::size_t end_layer) {
  if (end_layer > spec.layers.size()) throw Error(ErrorCode::kInvalidArgument, "end_layer beyond the network");
  return run_batch(spec, params, batch, end_layer);
}

Tensor softmax(const Tensor& logits) {
  if (logits.rank() != 2) throw Error(ErrorCode::kShapeMismatch, "softmax expects (B, classes) logits");
  if (!logits.all_finite()) throw Error(ErrorCode::kNonFiniteValue, "softmax input is not finite");
  Tensor out(logits.shape());
  for (std::size_t i = 0; i < logits.dim(0); ++i) {
    const auto z = logits.row(i);
    auto p = out.row(i);
    const double m = *std::max_element(z.begin(), z.end());
    double total = 0.0;
    for (std::size_t j = 0; j < z.size(); ++j) {
      p[j] = std::exp(z[j] - m);
      total += p[j];
    }
    for (double& v : p) v /= total;
  }
  return out;
}

std::vector<std::size_t> argmax_rows(const Tensor& scores, std::size_t* ties) {
  if (scores.rank() != 2) throw Error(ErrorCode::kShapeMismatch, "argmax expects a rank-2 tensor");
  std::vector<std::size_t> out(scores.dim(0));
  std::size_t tie_count = 0;
  for (std::size_t i = 0; i < scores.dim(0); ++i) {
    const auto row = scores.row(i);
    std::size_t best = 0;
    bool tied = false;
    for (std::size_t j = 1; j < row.size(); ++j) {
      if (row[j] > row[best]) {
        best = j;
        tied = false;
      } else if (row[j] == row[best]) {
        tied = true;
      }
    }
    if (tied) ++tie_count;
    out[i] = best;
  }
  if (ties != nullptr) *ties = tie_count;
  return out;
}

double mean_cross_entropy(const NetworkSpec& spec, const ParameterSet& params, const Tensor& batch,
                          std::span<const int> labels) {
  check_labels(spec, batch, labels);
  const Tensor logits = forward(spec, params, batch);
  double total = 0.0;
  for (std::size_t i = 0; i < logits.dim(0); ++i) {
    const auto z = logits.row(i);
    const double m = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (double v : z) s += std::exp(v - m);
    total += m + std::log(s) - z[static_cast<std::size_t>(labels[i])];
  }
  return total / static_cast<double>(logits.dim(0));
}

LossAndGrad loss_and_grad(const NetworkSpec& spec, const ParameterSet& params, const Tensor& batch,
                          std::span<const int> labels) {
  check_batch(spec, batch);
  check_labels(spec, batch, labels);
  const std::size_t n_layers = spec.layers.size();
  const auto plans = make_plans(spec, &params, n_layers);
  const std::size_t n = batch.dim(0);
  const double inv_n = 1.0 / static_cast<double>(n);

  // Gradient accumulators in the stored weight layouts: conv (O, K), dense (K, O).
  std::vector<std::vector<double>> dw(n_layers), db(n_layers);
  std::size_t first_param = n_layers;
  for (std::size_t i = 0; i < n_layers; ++i) {
    if (plans[i].layer->has_parameters()) {
      dw[i].assign(plans[i].k * plans[i].o, 0.0);
      db[i].assign(plans[i].o, 0.0);
      first_param = std::min(first_param, i);
    }
  }

  LossAndGrad result;
  double total_loss = 0.0;
  ExampleTrace trace;
  Buffer a, b, scratch, grad, grad_in;
  for (std::size_t ex = 0; ex < n; ++ex) {
    run_example(plans, batch.row(ex), &trace, a, b, scratch);
    const auto& z = trace.acts[n_layers];
    for (double v : z) {
      if (!std::isfinite(v)) throw Error(ErrorCode::kNonFiniteValue, "non-finite logit in example " + std::to_string(ex));
    }
    const auto label = static_cast<std::size_t>(labels[ex]);
    const double m = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    grad.resize(z.size());
    for (std::size_t j = 0; j < z.size(); ++j) {
      grad[j] = std::exp(z[j] - m);
      s += grad[j];
    }
    total_loss += m + std::log(s) - z[label];
    for (std::size_t j = 0; j < z.size(); ++j) grad[j] = (grad[j] / s - (j == label ? 1.0 : 0.0)) * inv_n;

    for (std::size_t li = n_layers; li-- > first_param;) {
      const Plan& plan = plans[li];
      const auto& in = trace.acts[li];
      const bool need_input_grad = li > first_param;
      switch (plan.layer->kind) {
        case LayerKind::kDense: {
          for (std::size_t j = 0; j < plan.o; ++j) db[li][j] += grad[j];
          accumulate_outer(in.data(), plan.k, grad.data(), plan.o, dw[li].data());
          if (need_input_grad) {
            grad_in.assign(plan.k, 0.0);
            for (std::size_t kk = 0; kk < plan.k; ++kk) {
              const double* w = plan.weights + kk * plan.o;
              double acc = 0.0;
              for (std::size_t j = 0; j < plan.o; ++j) acc += w[j] * grad[j];
              grad_in[kk] = acc;
            }
          }
          break;
        }
        case LayerKind::kConv2d: {
          const std::size_t positions = plan.out[0] * plan.out[1];
          // Scattered layers kept no patches; rebuild them where needed.
          const bool stored = !trace.patches[li].empty();
          const std::size_t w = plan.in[1], c = plan.in[2], f = plan.f;
          if (need_input_grad) grad_in.assign(in.size(), 0.0);
          if (!stored) scratch.resize(plan.k);
          for (std::size_t p = 0; p < positions; ++p) {
            const double* d = grad.data() + p * plan.o;
            const double* patch = trace.patches[li].data() + p * plan.k;
            if (!stored) {
              if (std::all_of(d, d + plan.o, [](double v) { return v == 0.0; })) continue;
              build_patch(plan, in.data(), p / plan.out[1], p % plan.out[1], scratch.data());
              patch = scratch.data();
            }
            // Pooling leaves most output gradients exactly zero.
            for (std::size_t j = 0; j < plan.o; ++j) {
              if (d[j] == 0.0) continue;
              db[li][j] += d[j];
              double* __restrict row = dw[li].data() + j * plan.k;
              for (std::size_t kk = 0; kk < plan.k; ++kk) row[kk] += d[j] * patch[kk];
            }
            if (!need_input_grad) continue;
            const std::size_t y = p / plan.out[1], x = p % plan.out[1];
            std::size_t kk = 0;
            for (std::size_t ch = 0; ch < c; ++ch) {
              for (std::size_t dy = 0; dy < f; ++dy) {
                const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + dy) - static_cast<std::ptrdiff_t>(plan.pad);
                for (std::size_t dx = 0; dx < f; ++dx, ++kk) {
                  const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x + dx) - static_cast<std::ptrdiff_t>(plan.pad);
                  if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(plan.in[0]) ||
                      ix >= static_cast<std::ptrdiff_t>(w)) {
                    continue;
                  }
                  const double* wrow = plan.weights + kk * plan.o;
                  double acc = 0.0;
                  for (std::size_t j = 0; j < plan.o; ++j) acc += wrow[j] * d[j];
                  grad_in[(static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) * c + ch] += acc;
                }
              }
            }
          }
          break;
        }
        case LayerKind::kMaxPool2x2: {
          grad_in.assign(in.size(), 0.0);
          const auto& idx = trace.argmax[li];
          for (std::size_t j = 0; j < grad.size(); ++j) grad_in[idx[j]] += grad[j];
          break;
        }
        case LayerKind::kRelu:
          grad_in.resize(in.size());
          for (std::size_t j = 0; j < in.size(); ++j) grad_in[j] = in[j] > 0.0 ? grad[j] : 0.0;
          break;
        case LayerKind::kFlatten:
          grad_in = grad;
          break;
      }
      std::swap(grad, grad_in);
    }
  }

  result.loss = total_loss * inv_n;
  result.grads = zero_parameters(spec);
  for (auto& block : result.grads.blocks) {
    auto w = block.weights.data();
    std::copy(dw[block.layer].begin(), dw[block.layer].end(), w.begin());
    std::copy(db[block.layer].begin(), db[block.layer].end(), block.biases.data().begin());
  }
  return result;
}

ParameterSet numeric_grad(const ParameterLoss& loss, const ParameterSet& params, double h) {
  if (!(h > 0.0)) throw Error(ErrorCode::kInvalidArgument, "finite-difference step must be positive");
  ParameterSet probe = params;
  ParameterSet grads = params;
  auto differentiate = [&](std::span<double> values, std::span<double> out) {
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double original = values[i];
      values[i] = original + h;
      const double plus = loss(probe);
      values[i] = original - h;
      const double minus = loss(probe);
      values[i] = original;
      out[i] = (plus - minus) / (2.0 * h);
    }
  };
  for (std::size_t bi = 0; bi < probe.blocks.size(); ++bi) {
    differentiate(probe.blocks[bi].weights.data(), grads.blocks[bi].weights.data());
    differentiate(probe.blocks[bi].biases.data(), grads.blocks[bi].biases.data());
  }
  return grads;
}

ParameterSet numeric_grad(const NetworkSpec& spec, const ParameterSet& params, const Tensor& batch,
                          std::span<const int> labels, double h) {
  return numeric_grad([&](const ParameterSet& p) { return mean_cross_entropy(spec, p, batch, labels); }, params, h);
}

NetworkSpec make_cnn(const Shape& input_shape, const std::vector<std::size_t>& widths, std::size_t n_outputs,
                     std::size_t first_filter, std::size_t later_filter) {
  if (widths.empty()) throw Error(ErrorCode::kInvalidArgument, "a CNN needs at least one conv layer");
  NetworkSpec spec{input_shape, {}, n_outputs};
  for (std::size_t l = 0; l < widths.size(); ++l) {
    spec.layers.push_back(l == 0 ? LayerSpec::conv2d(widths[l], first_filter, Padding::kValid)
                                 : LayerSpec::conv2d(widths[l], later_filter, Padding::kSame));
    spec.layers.push_back(LayerSpec::relu());
    spec.layers.push_back(LayerSpec::maxpool2x2());
  }
  spec.layers.push_back(LayerSpec::flatten());
  spec.layers.push_back(LayerSpec::dense(n_outputs));
  validate_spec(spec);
  return spec;
}

NetworkSpec make_fcnn(const Shape& input_shape, std::size_t depth, std::size_t hidden, std::size_t n_outputs) {
  NetworkSpec spec{input_shape, {LayerSpec::flatten()}, n_outputs};
  for (std::size_t l = 0; l < depth; ++l) {
    spec.layers.push_back(LayerSpec::dense(hidden));
    spec.layers.push_back(LayerSpec::relu());
  }
  spec.layers.push_back(LayerSpec::dense(n_outputs));
  validate_spec(spec);
  return spec;
}

std::vector<std::size_t> default_cnn_widths(std::size_t depth) {
  std::vector<std::size_t> widths;
  std::size_t w = 16;
  for (std::size_t l = 0; l < depth; ++l, w *= 16) widths.push_back(w);
  return widths;
}

}  // namespace structprior
