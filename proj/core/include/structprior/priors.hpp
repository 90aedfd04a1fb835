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

#include <array>
#include <cmath>
#include <cstddef>
#include <map>
#include <numbers>
#include <variant>
#include <vector>

#include "structprior/datasets.hpp"
#include "structprior/network.hpp"
#include "structprior/rng.hpp"
#include "structprior/tensor.hpp"

namespace structprior {

enum class ColorMode { kGrayscale, kRgb };

/// Grid convention for the Gabor coordinates f_x, f_y. Centered puts (0, 0)
/// on the middle pixel; literal uses 1..f_w so the envelope peaks at a corner.
enum class GaborCoordinates { kCentered, kLiteral };

/// One draw of Gabor filter parameters. `betas` scale the three colour
/// channels of an RGB filter; for grayscale draws they are all 1.
struct GaborParams {
  double theta = 0.0;   // orientation, radians
  double sigma = 0.0;   // envelope width, pixels
  double lambda = 0.0;  // carrier wavelength, pixels
  double psi = 0.0;     // phase, radians
  double gamma = 0.0;   // aspect ratio
  bool bw_flag = false;
  std::array<double, 3> betas{1.0, 1.0, 1.0};

  bool operator==(const GaborParams&) const = default;
};

/// Uniform hyperprior box. Every range is sampled half-open [low, high);
/// lambda's upper end is the filter width.
namespace gabor_hyperprior {
inline constexpr double kThetaLow = 0.0;
inline constexpr double kThetaHigh = std::numbers::pi;
inline constexpr double kSigmaLow = 2.0;
inline constexpr double kSigmaHigh = 10.0;
inline constexpr double kLambdaLow = 1.0;
inline constexpr double kPsiLow = -std::numbers::pi;
inline constexpr double kPsiHigh = std::numbers::pi;
inline constexpr double kGammaLow = 0.0;
inline constexpr double kGammaHigh = 1.5;
/// A filter is black & white when P_bw <= this threshold, colour otherwise.
inline constexpr double kBlackWhiteThreshold = 0.3;
inline constexpr double kBlackWhiteBetaLow = 0.8;
inline constexpr double kBlackWhiteBetaHigh = 1.0;
inline constexpr double kColourBetaLow = -1.0;
inline constexpr double kColourBetaHigh = 1.0;
}  // namespace gabor_hyperprior

GaborParams sample_gabor_params(SeededRng& rng, std::size_t filter_width, ColorMode color);

/// Real part of the Gabor function on an f_w x f_w grid, entry (row, col) at
/// f_y = row, f_x = col in the chosen coordinate convention:
///   exp(-(x_t^2 + gamma * y_t^2) / (2 sigma^2)) * cos(2 pi x_t / lambda + psi)
/// with x_t = f_x cos(theta) + f_y sin(theta), y_t = -f_x sin(theta) + f_y cos(theta).
Tensor eval_gabor(const GaborParams& p, std::size_t filter_width,
                  GaborCoordinates coordinates = GaborCoordinates::kCentered);

/// (3, f_w, f_w) filter whose channel i is betas[i] * mono.
Tensor colorize(const GaborParams& p, const Tensor& mono);

/// Adds i.i.d. N(0, sigma_g^2) noise elementwise. sigma_g == 0 returns the
/// input untouched and consumes no draws.
Tensor add_filter_noise(SeededRng& rng, Tensor filter, double sigma_g);

/// Affine map giving the whole tensor mean 0 and population variance 2 / n_in.
Tensor standardize_layer(const Tensor& weights, std::size_t n_in);

/// I.i.d. N(0, 2 / n_in) entries.
Tensor sample_iid_layer(SeededRng& rng, const Shape& shape, std::size_t n_in);

/// Mean activation of each final-layer hidden unit per class, centred across
/// classes: (hidden_units, n_classes). Only layers before the final dense
/// layer are evaluated, so `partial` need not hold final-layer weights.
Tensor feature_prior_means(const NetworkSpec& spec, const ParameterSet& partial, const ClassExemplars& exemplars);

/// Final dense weights ~ N(means[k][j], weight_std^2), independent.
Tensor sample_final_layer(SeededRng& rng, const Tensor& means, double weight_std);

/// Std of final-layer weights when N(mu, 0.1 I) is read as covariance 0.1 I.
inline const double kFeatureCovarianceStd = std::sqrt(0.1);
/// Std when the same expression is read as a standard deviation.
inline constexpr double kFeatureStdReading = 0.1;

struct IidPrior {
  bool operator==(const IidPrior&) const = default;
};

struct GaborPrior {
  double sigma_g = 0.0;
  ColorMode color = ColorMode::kGrayscale;
  GaborCoordinates coordinates = GaborCoordinates::kCentered;

  bool operator==(const GaborPrior&) const = default;
};

struct FeatureSpecificPrior {
  std::size_t exemplars_per_class = 20;
  double weight_std = kFeatureCovarianceStd;

  bool operator==(const FeatureSpecificPrior&) const = default;
};

using LayerPrior = std::variant<IidPrior, GaborPrior, FeatureSpecificPrior>;

/// Which prior initializes which parametric layer; unlisted layers are i.i.d.
struct PriorSpec {
  std::map<std::size_t, LayerPrior> layers;

  LayerPrior for_layer(std::size_t layer) const;
  bool uses_feature_prior() const;
  std::size_t exemplars_per_class() const;

  static PriorSpec iid() { return {}; }
  /// Gabor on the first conv layer and/or the feature prior on the final layer.
  static PriorSpec structured(const NetworkSpec& spec, const GaborPrior* gabor, const FeatureSpecificPrior* features);
};

/// Gabor only on the first conv layer, the feature prior only on the final
/// dense layer, sigma_g >= 0, weight_std > 0, colour mode matching the input.
void validate_prior(const NetworkSpec& spec, const PriorSpec& prior);

/// What init_network drew for its Gabor layer, if any.
struct InitLog {
  std::size_t gabor_layer = 0;
  std::vector<GaborParams> gabor_params;  // one per output filter
  Tensor raw_filters;                     // (out, in, f, f) before standardization
};

/// Samples a full parameter set. Layer i draws from `rng.substream("layer", i)`
/// so each layer's values depend only on the root stream and its own prior.
/// Biases are zero. The feature prior conditions on the earlier layers.
ParameterSet init_network(const SeededRng& rng, const NetworkSpec& spec, const PriorSpec& prior,
                          const ClassExemplars* exemplars = nullptr, InitLog* log = nullptr);

}  // namespace structprior
