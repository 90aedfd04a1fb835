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

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "structprior/evaluation.hpp"
#include "structprior/priors.hpp"
#include "structprior/tensor.hpp"

namespace structprior {

/// What produced a report. Timing and thread counts are deliberately absent
/// so reports compare byte for byte across schedules.
struct Provenance {
  std::string experiment;
  std::uint64_t seed = 0;
  std::string scale;  // "desk" or "paper"
  nlohmann::json config;
};

/// 16 hex digits of FNV-1a over the compact JSON dump.
std::string config_fingerprint(const nlohmann::json& config);

nlohmann::json to_json(const GaborParams& p);
nlohmann::json to_json(const EntropyReport& r);
nlohmann::json to_json(const CorrelationReport& r);
nlohmann::json to_json(const CappaReport& r);
nlohmann::json to_json(const TrainingCurve& c);
nlohmann::json to_json(const CurveSummary& s);
nlohmann::json to_json(const AblationReport& r);

/// {"provenance": {...}, "results": results}
nlohmann::json report_document(const Provenance& provenance, nlohmann::json results);

// CSV tables. Every table starts with a header row naming its columns.

/// draw,entropy,count_0,...,count_{C-1}
std::string entropy_csv(const EntropyReport& r);
/// pair_type,pair,correlation
std::string correlation_csv(const CorrelationReport& r);
/// draw,accuracy,inverted_accuracy,cappa
std::string cappa_csv(const CappaReport& r);
/// variant,run,step,train_loss,test_accuracy
std::string curves_csv(const std::string& variant, std::span<const TrainingCurve> runs);
/// variant,step,mean_accuracy,two_standard_errors,mean_loss,n_runs
std::string summary_csv(const std::string& variant, const CurveSummary& s);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

/// Binary PGM (P5) of a (f, f) plane, affinely mapped so its minimum is 0
/// and its maximum 255. A constant plane maps to mid-gray.
std::string to_pgm(const Tensor& plane);
/// Binary PPM (P6) of a (3, f, f) filter; one affine map shared by all
/// three channels so relative channel weights survive.
std::string to_ppm(const Tensor& filter);

void write_text(const std::filesystem::path& path, const std::string& contents);

}  // namespace structprior
