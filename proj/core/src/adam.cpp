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

#include "structprior/adam.hpp"

#include <cmath>

#include "structprior/error.hpp"

namespace structprior {

namespace {

ParameterSet zeros_like(const ParameterSet& params) {
  ParameterSet out = params;
  for (auto& block : out.blocks) {
    block.weights.fill(0.0);
    block.biases.fill(0.0);
  }
  return out;
}

bool same_layout(const ParameterSet& a, const ParameterSet& b) {
  if (a.blocks.size() != b.blocks.size()) return false;
  for (std::size_t i = 0; i < a.blocks.size(); ++i) {
    if (a.blocks[i].weights.shape() != b.blocks[i].weights.shape() ||
        a.blocks[i].biases.shape() != b.blocks[i].biases.shape()) {
      return false;
    }
  }
  return true;
}

}  // namespace

AdamState make_adam_state(const ParameterSet& params) { return AdamState{zeros_like(params), zeros_like(params), 0}; }

void adam_step(ParameterSet& params, const ParameterSet& grads, AdamState& state, const AdamConfig& config) {
  if (!same_layout(params, grads) || !same_layout(params, state.first_moment) ||
      !same_layout(params, state.second_moment)) {
    throw Error(ErrorCode::kShapeMismatch, "adam_step: parameters, gradients and moments differ in shape");
  }
  if (!(config.beta1 >= 0.0 && config.beta1 < 1.0 && config.beta2 >= 0.0 && config.beta2 < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "adam betas must lie in [0, 1)");
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(config.beta1, t);
  const double correction2 = 1.0 - std::pow(config.beta2, t);

  auto update = [&](std::span<double> theta, std::span<const double> g, std::span<double> m, std::span<double> v) {
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      theta[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
    }
  };
  for (std::size_t b = 0; b < params.blocks.size(); ++b) {
    update(params.blocks[b].weights.data(), grads.blocks[b].weights.data(), state.first_moment.blocks[b].weights.data(),
           state.second_moment.blocks[b].weights.data());
    update(params.blocks[b].biases.data(), grads.blocks[b].biases.data(), state.first_moment.blocks[b].biases.data(),
           state.second_moment.blocks[b].biases.data());
  }
}

}  // namespace structprior
