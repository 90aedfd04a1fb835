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

sp::Tensor random_batch(std::size_t n, std::uint64_t seed) {
  sp::SeededRng rng(seed, "bench/batch");
  sp::Tensor batch({n, 28, 28, 1});
  for (double& v : batch.data()) v = rng.uniform01() < 0.8 ? 0.0 : rng.uniform01();
  return batch;
}

sp::NetworkSpec spec_for(int depth) {
  if (depth == 0) return sp::make_fcnn({28, 28, 1}, 1, 128, 10);
  std::vector<std::size_t> widths{16, 32};
  widths.resize(static_cast<std::size_t>(depth));
  return sp::make_cnn({28, 28, 1}, widths, 10);
}

void BM_Forward(benchmark::State& state) {
  const auto spec = spec_for(static_cast<int>(state.range(0)));
  const auto params = sp::init_network(sp::SeededRng(1, "bench"), spec, sp::PriorSpec::iid());
  const auto batch = random_batch(128, 2);
  for (auto _ : state) benchmark::DoNotOptimize(sp::forward(spec, params, batch));
  state.SetItemsProcessed(state.iterations() * 128);
}
BENCHMARK(BM_Forward)->Arg(0)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);

void BM_LossAndGrad(benchmark::State& state) {
  const auto spec = spec_for(static_cast<int>(state.range(0)));
  const auto params = sp::init_network(sp::SeededRng(1, "bench"), spec, sp::PriorSpec::iid());
  const auto batch = random_batch(128, 3);
  std::vector<int> labels(128);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 10);
  for (auto _ : state) benchmark::DoNotOptimize(sp::loss_and_grad(spec, params, batch, labels));
  state.SetItemsProcessed(state.iterations() * 128);
}
BENCHMARK(BM_LossAndGrad)->Arg(0)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);

}  // namespace
