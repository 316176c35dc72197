// Copyright 2026 The Cardfuse Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CARDFUSE_OPTIMIZER_HPP_
#define CARDFUSE_OPTIMIZER_HPP_

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cardfuse/error.hpp"

namespace cardfuse {

// A named flat view of one parameter (or gradient) tensor.
template <class T>
struct TensorRef {
  std::string name;
  std::span<T> values;
};

enum class OptimizerKind { kSgd, kAdam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Moments are allocated lazily on the first step and must keep mirroring the
// parameter list handed to every later step.
class OptimizerState {
 public:
  OptimizerState() = default;
  explicit OptimizerState(OptimizerConfig config) : config_(config) {}

  const OptimizerConfig& config() const { return config_; }
  std::uint64_t step() const { return step_; }
  const std::vector<std::vector<double>>& first_moment() const { return m_; }
  const std::vector<std::vector<double>>& second_moment() const { return v_; }

  template <class T>
  void Step(const std::vector<TensorRef<T>>& params,
            const std::vector<TensorRef<T>>& grads);

 private:
  OptimizerConfig config_;
  std::uint64_t step_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

template <class T>
void OptimizerState::Step(const std::vector<TensorRef<T>>& params,
                          const std::vector<TensorRef<T>>& grads) {
  if (!(config_.learning_rate > 0.0)) {
    throw Error(ErrorKind::kParameter, "learning rate must be > 0, got " +
                                           std::to_string(config_.learning_rate));
  }
  if (params.size() != grads.size()) {
    throw Error(ErrorKind::kShape,
                "optimizer got " + std::to_string(params.size()) +
                    " parameter tensors but " + std::to_string(grads.size()) +
                    " gradient tensors");
  }
  for (std::size_t t = 0; t < params.size(); ++t) {
    if (params[t].values.size() != grads[t].values.size()) {
      throw Error(ErrorKind::kShape, "gradient for '" + params[t].name +
                                         "' has " +
                                         std::to_string(grads[t].values.size()) +
                                         " entries, parameter has " +
                                         std::to_string(params[t].values.size()));
    }
    for (std::size_t i = 0; i < grads[t].values.size(); ++i) {
      if (!std::isfinite(grads[t].values[i])) {
        throw Error(ErrorKind::kTraining,
                    "non-finite gradient in parameter '" + params[t].name +
                        "' at index " + std::to_string(i));
      }
    }
  }

  if (config_.kind == OptimizerKind::kAdam) {
    if (m_.empty()) {
      for (const auto& p : params) {
        m_.emplace_back(p.values.size(), 0.0);
        v_.emplace_back(p.values.size(), 0.0);
      }
    } else if (m_.size() != params.size()) {
      throw Error(ErrorKind::kShape, "optimizer moments do not mirror parameters");
    }
  }

  ++step_;
  const double lr = config_.learning_rate;
  if (config_.kind == OptimizerKind::kSgd) {
    for (std::size_t t = 0; t < params.size(); ++t) {
      auto p = params[t].values;
      const auto g = grads[t].values;
      for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] = static_cast<T>(p[i] - lr * g[i]);
      }
    }
    return;
  }

  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto p = params[t].values;
    const auto g = grads[t].values;
    auto& m = m_[t];
    auto& v = v_[t];
    if (m.size() != p.size()) {
      throw Error(ErrorKind::kShape, "optimizer moment for '" + params[t].name +
                                         "' does not mirror the parameter");
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i];
      m[i] = b1 * m[i] + (1.0 - b1) * gi;
      v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      p[i] = static_cast<T>(p[i] - lr * m_hat / (std::sqrt(v_hat) + config_.epsilon));
    }
  }
}

}  // namespace cardfuse

#endif  // CARDFUSE_OPTIMIZER_HPP_
