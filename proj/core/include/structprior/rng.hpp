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
#include <cstdint>
#include <string>
#include <string_view>

namespace structprior {

std::uint64_t splitmix64(std::uint64_t& state);
std::uint64_t fnv1a64(std::string_view text);

/// Deterministic random stream identified by (seed, label).
///
/// The generator is xoshiro256** seeded through splitmix64 from the seed
/// mixed with a hash of the label. Uniform and Gaussian variates are computed
/// here rather than through <random> distributions, whose outputs are
/// implementation-defined, so a given (seed, label) yields the same draws on
/// every standard library.
///
/// Substreams are derived by label, never by consuming draws from the
/// parent, so the order in which substreams are created or used does not
/// affect any of them.
class SeededRng {
 public:
  SeededRng(std::uint64_t seed, std::string label);

  std::uint64_t seed() const noexcept { return seed_; }
  const std::string& label() const noexcept { return label_; }

  SeededRng substream(std::string_view child) const;
  SeededRng substream(std::string_view child, std::uint64_t index) const;

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 bits of resolution.
  double uniform01();
  /// Uniform on [low, high).
  double uniform(double low, double high);
  /// Uniform integer on [0, bound).
  std::uint64_t below(std::uint64_t bound);
  /// Standard normal via Box-Muller; the second variate of each pair is cached.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  std::uint64_t seed_;
  std::string label_;
  std::array<std::uint64_t, 4> state_{};
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace structprior
