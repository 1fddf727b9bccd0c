/* Copyright 2026 The Ada2Net Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ada2net/nn/layers.hpp"

namespace ada2net::training {

using nd::Tensor;
using nn::ParamList;

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// lr * 0.5^floor(step / decayEvery); decayEvery = 0 disables decay.
inline double lrSchedule(std::uint64_t step, double initialLr, std::uint64_t decayEvery) {
  if (decayEvery == 0) return initialLr;
  return initialLr * std::pow(0.5, static_cast<double>(step / decayEvery));
}

struct AdamStepResult {
  bool applied = true;
  std::string nonFiniteParam;  // first offending parameter when skipped
};

// Bias-corrected Adam over a fixed parameter list. Moments are kept in the
// parameters' scalar type so checkpoints restore them exactly.
template <typename T>
class Adam {
 public:
  Adam() = default;
  Adam(ParamList<T> params, const AdamOptions& options)
      : params_(std::move(params)), options_(options) {
    for (const auto& p : params_) {
      first_.emplace_back(p.tensor.numel(), T(0));
      second_.emplace_back(p.tensor.numel(), T(0));
    }
  }

  // Applies one update with learning rate `lr` from the accumulated
  // gradients. A step whose gradients contain NaN/Inf is skipped entirely
  // and reported; moments and step count are then left untouched.
  AdamStepResult step(double lr) {
    for (const auto& p : params_) {
      if (!p.tensor.hasGrad()) continue;
      for (T g : p.tensor.grad())
        if (!std::isfinite(static_cast<double>(g))) return {false, p.name};
    }
    ++steps_;
    const double b1 = options_.beta1, b2 = options_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Tensor<T> t = params_[i].tensor;
      const std::vector<T> g = t.grad();
      auto values = t.mutableValues();
      auto& m = first_[i];
      auto& v = second_[i];
      for (std::size_t j = 0; j < values.size(); ++j) {
        const double gj = static_cast<double>(g[j]);
        const double mj = b1 * static_cast<double>(m[j]) + (1.0 - b1) * gj;
        const double vj = b2 * static_cast<double>(v[j]) + (1.0 - b2) * gj * gj;
        m[j] = static_cast<T>(mj);
        v[j] = static_cast<T>(vj);
        const double update = lr * (mj / c1) / (std::sqrt(vj / c2) + options_.eps);
        values[j] = static_cast<T>(static_cast<double>(values[j]) - update);
      }
    }
    return {};
  }

  void zeroGrad() {
    for (auto& p : params_) {
      Tensor<T> t = p.tensor;
      t.zeroGrad();
    }
  }

  // Scales gradients so their global L2 norm is at most maxNorm; returns the
  // norm before clipping.
  double clipGradNorm(double maxNorm) {
    double sq = 0.0;
    for (const auto& p : params_)
      for (T g : p.tensor.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
    const double norm = std::sqrt(sq);
    if (maxNorm > 0.0 && norm > maxNorm) {
      const T factor = static_cast<T>(maxNorm / norm);
      for (auto& p : params_) {
        Tensor<T> t = p.tensor;
        if (!t.hasGrad()) continue;
        for (auto& g : t.mutableGrad()) g *= factor;
      }
    }
    return norm;
  }

  const ParamList<T>& params() const { return params_; }
  const AdamOptions& options() const { return options_; }
  std::uint64_t steps() const { return steps_; }
  void setSteps(std::uint64_t s) { steps_ = s; }
  std::vector<std::vector<T>>& firstMoments() { return first_; }
  std::vector<std::vector<T>>& secondMoments() { return second_; }
  const std::vector<std::vector<T>>& firstMoments() const { return first_; }
  const std::vector<std::vector<T>>& secondMoments() const { return second_; }

 private:
  ParamList<T> params_;
  AdamOptions options_;
  std::vector<std::vector<T>> first_, second_;
  std::uint64_t steps_ = 0;
};

}  // namespace ada2net::training
