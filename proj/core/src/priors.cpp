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

#include "structprior/priors.hpp"

#include <algorithm>
#include <string>

#include "structprior/error.hpp"

namespace structprior {

namespace hp = gabor_hyperprior;

GaborParams sample_gabor_params(SeededRng& rng, std::size_t filter_width, ColorMode color) {
  if (filter_width < 1) throw Error(ErrorCode::kInvalidArgument, "filter width must be at least 1");
  GaborParams p;
  p.theta = rng.uniform(hp::kThetaLow, hp::kThetaHigh);
  p.sigma = rng.uniform(hp::kSigmaLow, hp::kSigmaHigh);
  p.lambda = rng.uniform(hp::kLambdaLow, static_cast<double>(filter_width));
  p.psi = rng.uniform(hp::kPsiLow, hp::kPsiHigh);
  p.gamma = rng.uniform(hp::kGammaLow, hp::kGammaHigh);
  if (color == ColorMode::kRgb) {
    const double p_bw = rng.uniform01();
    p.bw_flag = p_bw <= hp::kBlackWhiteThreshold;
    for (double& beta : p.betas) {
      beta = p.bw_flag ? rng.uniform(hp::kBlackWhiteBetaLow, hp::kBlackWhiteBetaHigh)
                       : rng.uniform(hp::kColourBetaLow, hp::kColourBetaHigh);
    }
  }
  return p;
}

Tensor eval_gabor(const GaborParams& p, std::size_t filter_width, GaborCoordinates coordinates) {
  if (filter_width % 2 == 0) throw Error(ErrorCode::kInvalidArgument, "Gabor filters need an odd width");
  const double origin = coordinates == GaborCoordinates::kCentered ? (static_cast<double>(filter_width) + 1.0) / 2.0 : 0.0;
  const double cos_t = std::cos(p.theta);
  const double sin_t = std::sin(p.theta);
  Tensor out({filter_width, filter_width});
  for (std::size_t row = 0; row < filter_width; ++row) {
    const double fy = static_cast<double>(row + 1) - origin;
    for (std::size_t col = 0; col < filter_width; ++col) {
      const double fx = static_cast<double>(col + 1) - origin;
      const double x_t = fx * cos_t + fy * sin_t;
      const double y_t = -fx * sin_t + fy * cos_t;
      const double envelope = std::exp(-(x_t * x_t + p.gamma * y_t * y_t) / (2.0 * p.sigma * p.sigma));
      out[row * filter_width + col] = envelope * std::cos(2.0 * std::numbers::pi * x_t / p.lambda + p.psi);
    }
  }
  return out;
}

Tensor colorize(const GaborParams& p, const Tensor& mono) {
  if (mono.rank() != 2 || mono.dim(0) != mono.dim(1)) {
    throw Error(ErrorCode::kShapeMismatch, "colorize expects a square single-channel filter");
  }
  const std::size_t plane = mono.size();
  Tensor out({3, mono.dim(0), mono.dim(1)});
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < plane; ++i) out[c * plane + i] = p.betas[c] * mono[i];
  }
  return out;
}

Tensor add_filter_noise(SeededRng& rng, Tensor filter, double sigma_g) {
  if (!(sigma_g >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "sigma_g must be non-negative");
  if (sigma_g == 0.0) return filter;
  for (double& v : filter.data()) v += sigma_g * rng.normal();
  return filter;
}

Tensor standardize_layer(const Tensor& weights, std::size_t n_in) {
  if (n_in == 0) throw Error(ErrorCode::kInvalidArgument, "n_in must be positive");
  const auto w = weights.data();
  if (w.empty()) throw Error(ErrorCode::kDegenerateLayer, "empty layer");
  const double n = static_cast<double>(w.size());
  double mean = 0.0;
  for (double v : w) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : w) var += (v - mean) * (v - mean);
  var /= n;
  if (!(var > 0.0)) throw Error(ErrorCode::kDegenerateLayer, "layer weights have zero variance");
  const double scale = std::sqrt((2.0 / static_cast<double>(n_in)) / var);
  Tensor out(weights.shape());
  for (std::size_t i = 0; i < w.size(); ++i) out[i] = (w[i] - mean) * scale;
  return out;
}

Tensor sample_iid_layer(SeededRng& rng, const Shape& shape, std::size_t n_in) {
  if (n_in == 0) throw Error(ErrorCode::kInvalidArgument, "n_in must be positive");
  const double stddev = std::sqrt(2.0 / static_cast<double>(n_in));
  Tensor out(shape);
  for (double& v : out.data()) v = stddev * rng.normal();
  return out;
}

Tensor feature_prior_means(const NetworkSpec& spec, const ParameterSet& partial, const ClassExemplars& exemplars) {
  const std::size_t final_layer = final_dense_layer(spec);
  const std::size_t n_classes = exemplars.n_classes();
  if (n_classes != spec.n_outputs) {
    throw Error(ErrorCode::kShapeMismatch, "exemplars cover " + std::to_string(n_classes) + " classes, network has " +
                                               std::to_string(spec.n_outputs) + " outputs");
  }
  const auto shapes = infer_shapes(spec);
  const std::size_t hidden = final_layer == 0 ? shape_size(spec.input_shape) : shape_size(shapes[final_layer - 1]);
  Tensor means({hidden, n_classes});
  for (std::size_t j = 0; j < n_classes; ++j) {
    const Tensor& images = exemplars.images[j];
    if (images.rank() == 0 || images.dim(0) == 0) {
      throw Error(ErrorCode::kMissingExemplars, "class " + std::to_string(j) + " has no exemplars");
    }
    const Tensor features = forward_until(spec, partial, images, final_layer);
    const std::size_t n = features.dim(0);
    for (std::size_t k = 0; k < hidden; ++k) {
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) total += features[i * hidden + k];
      means[k * n_classes + j] = total / static_cast<double>(n);
    }
  }
  for (std::size_t k = 0; k < hidden; ++k) {
    auto row = means.row(k);
    double centre = 0.0;
    for (double v : row) centre += v;
    centre /= static_cast<double>(n_classes);
    for (double& v : row) v -= centre;
  }
  return means;
}

Tensor sample_final_layer(SeededRng& rng, const Tensor& means, double weight_std) {
  if (!(weight_std > 0.0)) throw Error(ErrorCode::kInvalidArgument, "feature prior weight_std must be positive");
  Tensor out(means.shape());
  for (std::size_t i = 0; i < means.size(); ++i) out[i] = means[i] + weight_std * rng.normal();
  return out;
}

LayerPrior PriorSpec::for_layer(std::size_t layer) const {
  const auto it = layers.find(layer);
  return it == layers.end() ? LayerPrior{IidPrior{}} : it->second;
}

bool PriorSpec::uses_feature_prior() const {
  return std::any_of(layers.begin(), layers.end(),
                     [](const auto& kv) { return std::holds_alternative<FeatureSpecificPrior>(kv.second); });
}

std::size_t PriorSpec::exemplars_per_class() const {
  for (const auto& [layer, p] : layers) {
    if (const auto* f = std::get_if<FeatureSpecificPrior>(&p)) return f->exemplars_per_class;
  }
  return 0;
}

PriorSpec PriorSpec::structured(const NetworkSpec& spec, const GaborPrior* gabor, const FeatureSpecificPrior* features) {
  PriorSpec prior;
  if (gabor != nullptr) {
    const auto first = first_conv_layer(spec);
    if (!first) throw Error(ErrorCode::kInvalidPrior, "Gabor prior needs a convolutional first layer");
    prior.layers[*first] = *gabor;
  }
  if (features != nullptr) prior.layers[final_dense_layer(spec)] = *features;
  return prior;
}

void validate_prior(const NetworkSpec& spec, const PriorSpec& prior) {
  const auto shapes = infer_shapes(spec);
  for (const auto& [layer, p] : prior.layers) {
    if (layer >= spec.layers.size() || !spec.layers[layer].has_parameters()) {
      throw Error(ErrorCode::kInvalidPrior, "layer " + std::to_string(layer) + " has no parameters to initialize");
    }
    if (const auto* g = std::get_if<GaborPrior>(&p)) {
      const auto first = first_conv_layer(spec);
      if (!first || *first != layer) {
        throw Error(ErrorCode::kInvalidPrior, "Gabor prior applies only to the first conv layer");
      }
      if (!(g->sigma_g >= 0.0)) throw Error(ErrorCode::kInvalidPrior, "sigma_g must be non-negative");
      const std::size_t channels = layer == 0 ? spec.input_shape[2] : shapes[layer - 1][2];
      const std::size_t want = g->color == ColorMode::kRgb ? 3 : 1;
      if (channels != want) {
        throw Error(ErrorCode::kInvalidPrior, "Gabor colour mode expects " + std::to_string(want) +
                                                  " input channels, layer has " + std::to_string(channels));
      }
    } else if (const auto* f = std::get_if<FeatureSpecificPrior>(&p)) {
      if (layer != final_dense_layer(spec)) {
        throw Error(ErrorCode::kInvalidPrior, "feature-specific prior applies only to the final dense layer");
      }
      if (!(f->weight_std > 0.0)) throw Error(ErrorCode::kInvalidPrior, "weight_std must be positive");
      if (f->exemplars_per_class == 0) throw Error(ErrorCode::kInvalidPrior, "exemplars_per_class must be positive");
    }
  }
}

ParameterSet init_network(const SeededRng& rng, const NetworkSpec& spec, const PriorSpec& prior,
                          const ClassExemplars* exemplars, InitLog* log) {
  validate_spec(spec);
  validate_prior(spec, prior);
  if (prior.uses_feature_prior() && exemplars == nullptr) {
    throw Error(ErrorCode::kMissingExemplars, "feature-specific prior needs class exemplars");
  }
  ParameterSet params = zero_parameters(spec);
  // Blocks are in layer order, so the final layer is sampled after every
  // layer it conditions on.
  for (auto& block : params.blocks) {
    SeededRng layer_rng = rng.substream("layer", block.layer);
    const std::size_t n_in = fan_in(spec, block.layer);
    const LayerPrior choice = prior.for_layer(block.layer);
    if (const auto* g = std::get_if<GaborPrior>(&choice)) {
      const Shape& shape = block.weights.shape();  // (out, in, f, f)
      const std::size_t n_filters = shape[0], f = shape[2];
      const std::size_t per_filter = shape[1] * f * f;
      Tensor raw(shape);
      std::vector<GaborParams> drawn;
      drawn.reserve(n_filters);
      for (std::size_t i = 0; i < n_filters; ++i) {
        SeededRng filter_rng = layer_rng.substream("filter", i);
        SeededRng noise_rng = layer_rng.substream("noise", i);
        const GaborParams p = sample_gabor_params(filter_rng, f, g->color);
        Tensor filter = eval_gabor(p, f, g->coordinates);
        if (g->color == ColorMode::kRgb) filter = colorize(p, filter);
        filter = add_filter_noise(noise_rng, std::move(filter), g->sigma_g);
        std::copy(filter.data().begin(), filter.data().end(), raw.data().begin() + static_cast<std::ptrdiff_t>(i * per_filter));
        drawn.push_back(p);
      }
      block.weights = standardize_layer(raw, n_in);
      if (log != nullptr) {
        log->gabor_layer = block.layer;
        log->gabor_params = std::move(drawn);
        log->raw_filters = std::move(raw);
      }
    } else if (const auto* fp = std::get_if<FeatureSpecificPrior>(&choice)) {
      const Tensor means = feature_prior_means(spec, params, *exemplars);
      block.weights = sample_final_layer(layer_rng, means, fp->weight_std);
    } else {
      block.weights = sample_iid_layer(layer_rng, block.weights.shape(), n_in);
    }
  }
  return params;
}

}  // namespace structprior
