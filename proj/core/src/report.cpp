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

#include "structprior/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "structprior/error.hpp"
#include "structprior/rng.hpp"

namespace structprior {

std::string config_fingerprint(const nlohmann::json& config) {
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(config.dump());
  return out.str();
}

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

nlohmann::json to_json(const GaborParams& p) {
  return {{"theta", p.theta}, {"sigma", p.sigma}, {"lambda", p.lambda}, {"psi", p.psi},
          {"gamma", p.gamma}, {"bw_flag", p.bw_flag}, {"betas", p.betas}};
}

nlohmann::json to_json(const EntropyReport& r) {
  return {{"mean_entropy", r.mean_entropy}, {"standard_error", r.standard_error},
          {"n_draws", r.n_draws},           {"dataset_size", r.dataset_size},
          {"n_classes", r.n_classes},       {"argmax_ties", r.argmax_ties},
          {"entropies", r.entropies},       {"histograms", r.histograms}};
}

nlohmann::json to_json(const CorrelationReport& r) {
  return {{"mean_same", r.mean_same},
          {"mean_different", r.mean_different},
          {"gap", r.mean_same - r.mean_different},
          {"n_draws", r.n_draws},
          {"output_index", r.output_index},
          {"n_pairs_same", r.n_pairs_same},
          {"n_pairs_different", r.n_pairs_different},
          {"excluded_same", r.excluded_same},
          {"excluded_different", r.excluded_different},
          {"same_correlations", r.same_correlations},
          {"different_correlations", r.different_correlations}};
}

nlohmann::json to_json(const CappaReport& r) {
  std::vector<double> inverted;
  for (double a : r.accuracies) inverted.push_back(1.0 - a);
  return {{"mean_cappa", r.mean_cappa}, {"standard_error", r.standard_error}, {"n_draws", r.n_draws},
          {"dataset_size", r.dataset_size}, {"accuracies", r.accuracies}, {"inverted_accuracies", inverted},
          {"cappas", r.cappas}};
}

nlohmann::json to_json(const TrainingCurve& c) {
  nlohmann::json points = nlohmann::json::array();
  for (const auto& p : c.points) {
    points.push_back({{"step", p.step}, {"train_loss", p.train_loss}, {"test_accuracy", p.test_accuracy}});
  }
  return {{"seed_label", c.seed_label}, {"points", points}};
}

nlohmann::json to_json(const CurveSummary& s) {
  return {{"n_runs", s.n_runs}, {"steps", s.steps}, {"mean_accuracy", s.mean_accuracy},
          {"two_standard_errors", s.two_standard_errors}, {"mean_loss", s.mean_loss}};
}

nlohmann::json to_json(const AblationReport& r) {
  nlohmann::json variants = nlohmann::json::array();
  for (const auto& v : r.variants) {
    nlohmann::json runs = nlohmann::json::array();
    for (const auto& c : v.runs) runs.push_back(to_json(c));
    variants.push_back({{"name", v.name}, {"summary", to_json(v.summary)}, {"runs", runs}});
  }
  return {{"variants", variants}};
}

nlohmann::json report_document(const Provenance& provenance, nlohmann::json results) {
  nlohmann::json prov = {{"experiment", provenance.experiment},
                         {"seed", provenance.seed},
                         {"scale", provenance.scale},
                         {"config", provenance.config},
                         {"config_fingerprint", config_fingerprint(provenance.config)}};
  return {{"provenance", prov}, {"results", std::move(results)}};
}

std::string entropy_csv(const EntropyReport& r) {
  std::ostringstream out;
  out << "draw,entropy";
  for (std::size_t c = 0; c < r.n_classes; ++c) out << ",count_" << c;
  out << '\n';
  for (std::size_t d = 0; d < r.entropies.size(); ++d) {
    out << d << ',' << format_double(r.entropies[d]);
    for (std::size_t count : r.histograms[d]) out << ',' << count;
    out << '\n';
  }
  return out.str();
}

std::string correlation_csv(const CorrelationReport& r) {
  std::ostringstream out;
  out << "pair_type,pair,correlation\n";
  for (std::size_t i = 0; i < r.same_correlations.size(); ++i) {
    out << "same," << i << ',' << format_double(r.same_correlations[i]) << '\n';
  }
  for (std::size_t i = 0; i < r.different_correlations.size(); ++i) {
    out << "different," << i << ',' << format_double(r.different_correlations[i]) << '\n';
  }
  return out.str();
}

std::string cappa_csv(const CappaReport& r) {
  std::ostringstream out;
  out << "draw,accuracy,inverted_accuracy,cappa\n";
  for (std::size_t d = 0; d < r.cappas.size(); ++d) {
    out << d << ',' << format_double(r.accuracies[d]) << ',' << format_double(1.0 - r.accuracies[d]) << ','
        << format_double(r.cappas[d]) << '\n';
  }
  return out.str();
}

std::string curves_csv(const std::string& variant, std::span<const TrainingCurve> runs) {
  std::ostringstream out;
  out << "variant,run,step,train_loss,test_accuracy\n";
  for (std::size_t r = 0; r < runs.size(); ++r) {
    for (const auto& p : runs[r].points) {
      out << variant << ',' << r << ',' << p.step << ',' << format_double(p.train_loss) << ','
          << format_double(p.test_accuracy) << '\n';
    }
  }
  return out.str();
}

std::string summary_csv(const std::string& variant, const CurveSummary& s) {
  std::ostringstream out;
  out << "variant,step,mean_accuracy,two_standard_errors,mean_loss,n_runs\n";
  for (std::size_t i = 0; i < s.steps.size(); ++i) {
    out << variant << ',' << s.steps[i] << ',' << format_double(s.mean_accuracy[i]) << ','
        << format_double(s.two_standard_errors[i]) << ',' << format_double(s.mean_loss[i]) << ',' << s.n_runs
        << '\n';
  }
  return out.str();
}

namespace {

std::string scaled_bytes(std::span<const double> values) {
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double span = *hi - *lo;
  std::string bytes(values.size(), '\0');
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double level = span > 0.0 ? 255.0 * (values[i] - *lo) / span : 127.0;
    bytes[i] = static_cast<char>(static_cast<unsigned char>(std::lround(level)));
  }
  return bytes;
}

}  // namespace

std::string to_pgm(const Tensor& plane) {
  if (plane.rank() != 2 || plane.empty()) throw Error(ErrorCode::kShapeMismatch, "PGM export needs a (h, w) plane");
  return "P5\n" + std::to_string(plane.dim(1)) + " " + std::to_string(plane.dim(0)) + "\n255\n" +
         scaled_bytes(plane.data());
}

std::string to_ppm(const Tensor& filter) {
  if (filter.rank() != 3 || filter.dim(0) != 3 || filter.empty()) {
    throw Error(ErrorCode::kShapeMismatch, "PPM export needs a (3, h, w) filter");
  }
  const std::size_t h = filter.dim(1), w = filter.dim(2), plane = h * w;
  const std::string planar = scaled_bytes(filter.data());
  std::string interleaved(planar.size(), '\0');
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) interleaved[i * 3 + c] = planar[c * plane + i];
  }
  return "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n" + interleaved;
}

void write_text(const std::filesystem::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot open " + path.string() + " for writing");
  out << contents;
  if (!out) throw Error(ErrorCode::kIoError, "failed writing " + path.string());
}

}  // namespace structprior
