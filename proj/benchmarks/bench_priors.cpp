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

#include <benchmark/benchmark.h>

#include "structprior/network.hpp"
#include "structprior/priors.hpp"
#include "structprior/rng.hpp"

namespace sp = structprior;

namespace {

void BM_GaborFilter(benchmark::State& state) {
  sp::SeededRng rng(7, "bench/gabor");
  const auto fw = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    const auto p = sp::sample_gabor_params(rng, fw, sp::ColorMode::kGrayscale);
    benchmark::DoNotOptimize(sp::eval_gabor(p, fw));
  }
}
BENCHMARK(BM_GaborFilter)->Arg(5)->Arg(11);

void BM_InitGaborNetwork(benchmark::State& state) {
  const auto spec = sp::make_cnn({28, 28, 1}, {16}, 10);
  const sp::GaborPrior gabor{};
  const auto prior = sp::PriorSpec::structured(spec, &gabor, nullptr);
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(sp::init_network(sp::SeededRng(seed++, "bench"), spec, prior));
}
BENCHMARK(BM_InitGaborNetwork);

}  // namespace
