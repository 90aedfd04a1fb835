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

#include "structprior/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <sstream>

#include "structprior/error.hpp"
#include "structprior/parallel.hpp"

namespace structprior {

double histogram_entropy(std::span<const std::size_t> counts) {
  const double total = static_cast<double>(std::accumulate(counts.begin(), counts.end(), std::size_t{0}));
  if (total == 0.0) throw Error(ErrorCode::kEmptyHistogram, "histogram has no mass");
  double h = 0.0;
  for (std::size_t c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / total;
    h -= p * std::log(p);
  }
  return h;
}

double mean_of(std::span<const double> values) {
  if (values.empty()) return 0.0;
  double total = 0.0;
  for (double v : values) total += v;
  return total / static_cast<double>(values.size());
}

double standard_error(std::span<const double> values) {
  if (values.size() < 2) return 0.0;
  const double m = mean_of(values);
  double ss = 0.0;
  for (double v : values) ss += (v - m) * (v - m);
  const double n = static_cast<double>(values.size());
  return std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
}

namespace {

void require_draws(std::size_t n_draws, std::size_t minimum) {
  if (n_draws < minimum) {
    throw Error(ErrorCode::kInvalidArgument, "need at least " + std::to_string(minimum) + " prior draws");
  }
}

void check_dataset_fits(const NetworkSpec& spec, const Dataset& data) {
  if (data.image_shape() != spec.input_shape) {
    throw Error(ErrorCode::kShapeMismatch, "dataset images " + shape_to_string(data.image_shape()) +
                                               " do not match network input " + shape_to_string(spec.input_shape));
  }
}

std::string format_number(double v) {
  std::ostringstream out;
  out << v;
  return out.str();
}

ParameterSet draw_parameters(const SeededRng& rng, std::size_t draw, const NetworkSpec& spec, const PriorSpec& prior,
                             const EvalOptions& options) {
  return init_network(rng.substream("draw", draw), spec, prior, options.exemplars);
}

}  // namespace

EntropyReport prior_predictive_entropy(const SeededRng& rng, const NetworkSpec& spec, const PriorSpec& prior,
                                       const Dataset& data, std::size_t n_draws, const EvalOptions& options) {
  require_draws(n_draws, 1);
  check_dataset_fits(spec, data);
  EntropyReport report;
  report.n_draws = n_draws;
  report.dataset_size = data.size();
  report.n_classes = spec.n_outputs;
  report.histograms.assign(n_draws, std::vector<std::size_t>(spec.n_outputs, 0));
  report.entropies.assign(n_draws, 0.0);
  std::vector<std::size_t> ties(n_draws, 0);
  parallel_for(n_draws, options.threads, [&](std::size_t d) {
    const ParameterSet params = draw_parameters(rng, d, spec, prior, options);
    const Tensor logits = forward(spec, params, data.images);
    for (std::size_t cls : argmax_rows(logits, &ties[d])) ++report.histograms[d][cls];
    report.entropies[d] = histogram_entropy(report.histograms[d]);
  });
  report.argmax_ties = std::accumulate(ties.begin(), ties.end(), std::size_t{0});
  report.mean_entropy = mean_of(report.entropies);
  report.standard_error = standard_error(report.entropies);
  return report;
}

double pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw Error(ErrorCode::kShapeMismatch, "pearson inputs differ in length");
  if (xs.size() < 2) throw Error(ErrorCode::kInvalidArgument, "pearson needs at least two points");
  const double mx = mean_of(xs);
  const double my = mean_of(ys);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw Error(ErrorCode::kConstantSequence, "correlation of a constant sequence");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

PairSet sample_pairs(SeededRng rng, const Dataset& data, std::size_t n_pairs) {
  std::vector<std::vector<std::size_t>> by_class(data.n_classes);
  for (std::size_t i = 0; i < data.size(); ++i) by_class[static_cast<std::size_t>(data.labels[i])].push_back(i);
  std::size_t usable_classes = 0;
  for (const auto& members : by_class) usable_classes += members.empty() ? 0 : 1;
  if (usable_classes < 2) throw Error(ErrorCode::kInvalidTask, "pairs need at least two populated classes");
  if (std::none_of(by_class.begin(), by_class.end(), [](const auto& m) { return m.size() >= 2; })) {
    throw Error(ErrorCode::kInsufficientClassExamples, "no class has two examples for a same-class pair");
  }

  PairSet pairs;
  SeededRng same_rng = rng.substream("same");
  while (pairs.same_class.size() < n_pairs) {
    const std::size_t a = static_cast<std::size_t>(same_rng.below(data.size()));
    const auto& members = by_class[static_cast<std::size_t>(data.labels[a])];
    if (members.size() < 2) continue;
    std::size_t b = a;
    while (b == a) b = members[static_cast<std::size_t>(same_rng.below(members.size()))];
    pairs.same_class.push_back({a, b});
  }
  SeededRng diff_rng = rng.substream("different");
  while (pairs.different_class.size() < n_pairs) {
    const std::size_t a = static_cast<std::size_t>(diff_rng.below(data.size()));
    const std::size_t b = static_cast<std::size_t>(diff_rng.below(data.size()));
    if (data.labels[a] == data.labels[b]) continue;
    pairs.different_class.push_back({a, b});
  }
  return pairs;
}

CorrelationReport activation_correlations(const SeededRng& rng, const NetworkSpec& spec, const PriorSpec& prior,
                                          const Dataset& data, const PairSet& pairs, std::size_t n_draws,
                                          std::size_t output_index, const EvalOptions& options) {
  require_draws(n_draws, 2);
  check_dataset_fits(spec, data);
  if (output_index >= spec.n_outputs) throw Error(ErrorCode::kInvalidArgument, "output index beyond network outputs");

  // Evaluate each distinct input once per draw.
  std::vector<std::size_t> unique;
  for (const auto* set : {&pairs.same_class, &pairs.different_class}) {
    for (const auto& p : *set) {
      unique.push_back(p.first);
      unique.push_back(p.second);
    }
  }
  std::sort(unique.begin(), unique.end());
  unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
  const Tensor inputs = gather_rows(data.images, unique);
  auto column_of = [&](std::size_t dataset_index) {
    return static_cast<std::size_t>(std::lower_bound(unique.begin(), unique.end(), dataset_index) - unique.begin());
  };

  // signal[u][d]: chosen logit of input u under draw d.
  std::vector<std::vector<double>> signal(unique.size(), std::vector<double>(n_draws));
  parallel_for(n_draws, options.threads, [&](std::size_t d) {
    const ParameterSet params = draw_parameters(rng, d, spec, prior, options);
    const Tensor logits = forward(spec, params, inputs);
    for (std::size_t u = 0; u < unique.size(); ++u) signal[u][d] = logits[u * spec.n_outputs + output_index];
  });

  CorrelationReport report;
  report.n_draws = n_draws;
  report.output_index = output_index;
  auto correlate = [&](const std::vector<InputPair>& set, std::vector<double>& out, std::size_t& excluded) {
    for (const auto& p : set) {
      try {
        out.push_back(pearson(signal[column_of(p.first)], signal[column_of(p.second)]));
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kConstantSequence) throw;
        ++excluded;
      }
    }
  };
  correlate(pairs.same_class, report.same_correlations, report.excluded_same);
  correlate(pairs.different_class, report.different_correlations, report.excluded_different);
  report.n_pairs_same = report.same_correlations.size();
  report.n_pairs_different = report.different_correlations.size();
  report.mean_same = mean_of(report.same_correlations);
  report.mean_different = mean_of(report.different_correlations);
  return report;
}

CappaReport cappa(const SeededRng& rng, const NetworkSpec& spec, const PriorSpec& prior, const Dataset& binary_data,
                  std::size_t n_draws, const EvalOptions& options) {
  require_draws(n_draws, 1);
  check_dataset_fits(spec, binary_data);
  if (spec.n_outputs != 2 || binary_data.n_classes != 2) {
    throw Error(ErrorCode::kInvalidTask, "CAPPA needs a two-output network and a two-class dataset");
  }
  const auto counts = class_counts(binary_data);
  if (counts[0] != counts[1] || counts[0] == 0) throw Error(ErrorCode::kInvalidTask, "CAPPA task must be balanced");

  CappaReport report;
  report.n_draws = n_draws;
  report.dataset_size = binary_data.size();
  report.accuracies.assign(n_draws, 0.0);
  report.cappas.assign(n_draws, 0.0);
  parallel_for(n_draws, options.threads, [&](std::size_t d) {
    const ParameterSet params = draw_parameters(rng, d, spec, prior, options);
    const auto predicted = argmax_rows(forward(spec, params, binary_data.images));
    std::size_t correct = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
      correct += predicted[i] == static_cast<std::size_t>(binary_data.labels[i]) ? 1 : 0;
    }
    const double a = static_cast<double>(correct) / static_cast<double>(predicted.size());
    report.accuracies[d] = a;
    report.cappas[d] = std::max(a, 1.0 - a);
  });
  report.mean_cappa = mean_of(report.cappas);
  report.standard_error = standard_error(report.cappas);
  return report;
}

double accuracy(const NetworkSpec& spec, const ParameterSet& params, const Dataset& data) {
  if (data.size() == 0) throw Error(ErrorCode::kInvalidArgument, "accuracy of an empty dataset");
  const auto predicted = argmax_rows(forward(spec, params, data.images));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    correct += predicted[i] == static_cast<std::size_t>(data.labels[i]) ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(predicted.size());
}

TrainingCurve train_run(const SeededRng& rng, const NetworkSpec& spec, const PriorSpec& prior, const Dataset& train,
                        const Dataset& test, const TrainConfig& config) {
  check_dataset_fits(spec, train);
  check_dataset_fits(spec, test);
  if (config.batch_size == 0 || config.log_every == 0) {
    throw Error(ErrorCode::kInvalidArgument, "batch_size and log_every must be positive");
  }
  std::optional<ClassExemplars> exemplars;
  if (prior.uses_feature_prior()) {
    exemplars = sample_exemplars(rng.substream("exemplars"), train, prior.exemplars_per_class());
  }
  ParameterSet params = init_network(rng.substream("init"), spec, prior, exemplars ? &*exemplars : nullptr);
  AdamState state = make_adam_state(params);

  TrainingCurve curve;
  curve.seed_label = rng.label() + "@" + std::to_string(rng.seed());
  curve.points.push_back({0, 0.0, accuracy(spec, params, test)});

  std::vector<std::size_t> order(train.size());
  std::vector<int> batch_labels;
  std::size_t step = 0;
  double interval_loss = 0.0;
  std::size_t interval_steps = 0;
  bool done = false;
  for (std::size_t epoch = 0; epoch < config.epochs && !done; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    SeededRng shuffle_rng = rng.substream("shuffle", epoch);
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle_rng.below(i))]);
    }
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      const Tensor batch = gather_rows(train.images, idx);
      batch_labels.clear();
      for (std::size_t i : idx) batch_labels.push_back(train.labels[i]);

      LossAndGrad lg;
      try {
        lg = loss_and_grad(spec, params, batch, batch_labels);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kNonFiniteValue) throw;
        throw Error(ErrorCode::kNonFiniteLoss, "epoch " + std::to_string(epoch) + " step " + std::to_string(step) +
                                                   ": " + e.what());
      }
      if (!std::isfinite(lg.loss)) {
        throw Error(ErrorCode::kNonFiniteLoss, "epoch " + std::to_string(epoch) + " step " + std::to_string(step) +
                                                   ": loss " + std::to_string(lg.loss));
      }
      if (step == 0) curve.points[0].train_loss = lg.loss;
      adam_step(params, lg.grads, state, config.adam);
      ++step;
      interval_loss += lg.loss;
      ++interval_steps;
      const bool last = (config.max_steps != 0 && step >= config.max_steps) ||
                        (epoch + 1 == config.epochs && end == order.size());
      if (step % config.log_every == 0 || last) {
        curve.points.push_back({step, interval_loss / static_cast<double>(interval_steps), accuracy(spec, params, test)});
        interval_loss = 0.0;
        interval_steps = 0;
      }
      if (last) {
        done = true;
        break;
      }
    }
  }
  return curve;
}

double CurveSummary::accuracy_at(std::size_t step) const {
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (steps[i] == step) return mean_accuracy[i];
  }
  throw Error(ErrorCode::kInvalidArgument, "step " + std::to_string(step) + " was not logged");
}

CurveSummary summarize_curves(std::span<const TrainingCurve> runs) {
  if (runs.empty()) throw Error(ErrorCode::kInvalidArgument, "no training runs to summarize");
  CurveSummary summary;
  summary.n_runs = runs.size();
  const auto& reference = runs.front().points;
  for (const auto& run : runs) {
    if (run.points.size() != reference.size()) {
      throw Error(ErrorCode::kShapeMismatch, "training runs logged different numbers of points");
    }
  }
  for (std::size_t i = 0; i < reference.size(); ++i) {
    std::vector<double> acc, loss;
    for (const auto& run : runs) {
      if (run.points[i].step != reference[i].step) {
        throw Error(ErrorCode::kShapeMismatch, "training runs logged at different steps");
      }
      acc.push_back(run.points[i].test_accuracy);
      loss.push_back(run.points[i].train_loss);
    }
    summary.steps.push_back(reference[i].step);
    summary.mean_accuracy.push_back(mean_of(acc));
    summary.two_standard_errors.push_back(2.0 * standard_error(acc));
    summary.mean_loss.push_back(mean_of(loss));
  }
  return summary;
}

std::vector<TrainingCurve> train_runs(const SeededRng& rng, const NetworkSpec& spec, const PriorSpec& prior,
                                      const Dataset& train, const Dataset& test, const TrainConfig& config,
                                      std::size_t n_runs, std::size_t threads) {
  std::vector<TrainingCurve> curves(n_runs);
  parallel_for(n_runs, threads, [&](std::size_t r) {
    curves[r] = train_run(rng.substream("run", r), spec, prior, train, test, config);
  });
  return curves;
}

const AblationVariant& AblationReport::variant(const std::string& name) const {
  for (const auto& v : variants) {
    if (v.name == name) return v;
  }
  throw Error(ErrorCode::kInvalidArgument, "no ablation variant named " + name);
}

std::vector<std::pair<std::string, PriorSpec>> ablation_variants(const AblationConfig& config) {
  const GaborPrior noiseless{0.0, config.color, GaborCoordinates::kCentered};
  const GaborPrior noisy{config.noisy_sigma_g, config.color, GaborCoordinates::kCentered};
  return {
      {"iid", PriorSpec::iid()},
      {"features-only", PriorSpec::structured(config.spec, nullptr, &config.features)},
      {"gabor-sigma0", PriorSpec::structured(config.spec, &noiseless, nullptr)},
      {"gabor-sigma" + format_number(config.noisy_sigma_g), PriorSpec::structured(config.spec, &noisy, nullptr)},
  };
}

AblationReport ablation_grid(const SeededRng& rng, const AblationConfig& config, const Dataset& train,
                             const Dataset& test, std::size_t threads) {
  AblationReport report;
  for (auto& [name, prior] : ablation_variants(config)) {
    AblationVariant v;
    v.name = name;
    v.prior = prior;
    v.runs = train_runs(rng, config.spec, prior, train, test, config.train, config.runs, threads);
    v.summary = summarize_curves(v.runs);
    report.variants.push_back(std::move(v));
  }
  return report;
}

}  // namespace structprior
