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
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "structprior/adam.hpp"
#include "structprior/datasets.hpp"
#include "structprior/network.hpp"
#include "structprior/priors.hpp"
#include "structprior/rng.hpp"

namespace structprior {

/// Options shared by the prior-draw experiments. Draw d always uses
/// `rng.substream("draw", d)`; `threads` only changes scheduling.
struct EvalOptions {
  std::size_t threads = 1;
  /// Needed when the prior uses the feature-specific final layer.
  const ClassExemplars* exemplars = nullptr;
};

/// Shannon entropy in nats of the normalized histogram; 0 ln 0 = 0.
double histogram_entropy(std::span<const std::size_t> counts);

double mean_of(std::span<const double> values);
/// Sample standard deviation over sqrt(n); 0 for fewer than two values.
double standard_error(std::span<const double> values);

struct EntropyReport {
  std::vector<std::vector<std::size_t>> histograms;  // per draw, counts per class
  std::vector<double> entropies;                     // per draw, nats
  double mean_entropy = 0.0;
  double standard_error = 0.0;
  std::size_t n_draws = 0;
  std::size_t dataset_size = 0;
  std::size_t n_classes = 0;
  std::size_t argmax_ties = 0;  // examples whose top logit was tied, all draws
};

/// Histogram of argmax predictions of prior-sampled networks over `data`.
EntropyReport prior_predictive_entropy(const SeededRng& rng, const NetworkSpec& spec, const PriorSpec& prior,
                                       const Dataset& data, std::size_t n_draws, const EvalOptions& options = {});

/// Pearson product-moment correlation; throws ConstantSequence when either
/// input has zero variance.
double pearson(std::span<const double> xs, std::span<const double> ys);

struct InputPair {
  std::size_t first = 0;
  std::size_t second = 0;
};

struct PairSet {
  std::vector<InputPair> same_class;
  std::vector<InputPair> different_class;
};

/// `n_pairs` same-class pairs (two distinct examples of one class) and
/// `n_pairs` different-class pairs, each anchored on a uniformly drawn example.
PairSet sample_pairs(SeededRng rng, const Dataset& data, std::size_t n_pairs);

struct CorrelationReport {
  double mean_same = 0.0;
  double mean_different = 0.0;
  std::size_t n_draws = 0;
  std::size_t n_pairs_same = 0;       // pairs contributing to the mean
  std::size_t n_pairs_different = 0;
  std::size_t excluded_same = 0;      // pairs with a constant logit sequence
  std::size_t excluded_different = 0;
  std::size_t output_index = 0;
  std::vector<double> same_correlations;
  std::vector<double> different_correlations;
};

/// For each pair, correlates the `output_index` logit of its two inputs
/// across `n_draws` prior draws, then averages per pair type.
CorrelationReport activation_correlations(const SeededRng& rng, const NetworkSpec& spec, const PriorSpec& prior,
                                          const Dataset& data, const PairSet& pairs, std::size_t n_draws,
                                          std::size_t output_index = 0, const EvalOptions& options = {});

struct CappaReport {
  std::vector<double> accuracies;
  std::vector<double> cappas;
  double mean_cappa = 0.0;
  double standard_error = 0.0;
  std::size_t n_draws = 0;
  std::size_t dataset_size = 0;
};

/// Class-agnostic prior predictive accuracy: max(a, 1 - a) of the argmax
/// accuracy a, per draw, on a balanced two-class task.
CappaReport cappa(const SeededRng& rng, const NetworkSpec& spec, const PriorSpec& prior, const Dataset& binary_data,
                  std::size_t n_draws, const EvalOptions& options = {});

struct TrainConfig {
  std::size_t epochs = 3;
  std::size_t batch_size = 128;
  AdamConfig adam;
  std::size_t log_every = 50;
  /// Stop after this many optimizer steps; 0 runs all epochs.
  std::size_t max_steps = 0;
};

struct CurvePoint {
  std::size_t step = 0;
  double train_loss = 0.0;  // mean minibatch loss since the previous point
  double test_accuracy = 0.0;
};

/// Step 0 holds the accuracy of the prior draw itself and the loss of the
/// first minibatch before any update.
struct TrainingCurve {
  std::string seed_label;
  std::vector<CurvePoint> points;
};

TrainingCurve train_run(const SeededRng& rng, const NetworkSpec& spec, const PriorSpec& prior, const Dataset& train,
                        const Dataset& test, const TrainConfig& config);

double accuracy(const NetworkSpec& spec, const ParameterSet& params, const Dataset& data);

struct CurveSummary {
  std::vector<std::size_t> steps;
  std::vector<double> mean_accuracy;
  std::vector<double> two_standard_errors;
  std::vector<double> mean_loss;
  std::size_t n_runs = 0;

  /// Mean accuracy at `step`; throws if the step was not logged.
  double accuracy_at(std::size_t step) const;
  double final_accuracy() const { return mean_accuracy.back(); }
};

CurveSummary summarize_curves(std::span<const TrainingCurve> runs);

/// Run r of every comparison uses `rng.substream("run", r)`.
std::vector<TrainingCurve> train_runs(const SeededRng& rng, const NetworkSpec& spec, const PriorSpec& prior,
                                      const Dataset& train, const Dataset& test, const TrainConfig& config,
                                      std::size_t n_runs, std::size_t threads);

struct AblationConfig {
  NetworkSpec spec;
  TrainConfig train;
  std::size_t runs = 5;
  ColorMode color = ColorMode::kGrayscale;
  FeatureSpecificPrior features;
  double noisy_sigma_g = 0.02;
};

struct AblationVariant {
  std::string name;
  PriorSpec prior;
  std::vector<TrainingCurve> runs;
  CurveSummary summary;
};

/// The i.i.d. baseline followed by features-only, Gabor sigma_g = 0 and
/// Gabor sigma_g = noisy_sigma_g variants.
struct AblationReport {
  std::vector<AblationVariant> variants;

  const AblationVariant& variant(const std::string& name) const;
};

std::vector<std::pair<std::string, PriorSpec>> ablation_variants(const AblationConfig& config);

AblationReport ablation_grid(const SeededRng& rng, const AblationConfig& config, const Dataset& train,
                             const Dataset& test, std::size_t threads);

}  // namespace structprior
