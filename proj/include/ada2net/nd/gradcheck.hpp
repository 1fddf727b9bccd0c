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

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "ada2net/nd/ops.hpp"
#include "ada2net/rng.hpp"

namespace ada2net::nd {

struct GradCheckResult {
  double maxRelativeError = 0.0;
  std::size_t input = 0;
  std::size_t coordinate = 0;
  double analytic = 0.0;
  double numeric = 0.0;

  operator double() const { return maxRelativeError; }
};

namespace detail {

// sum(w * out) with fixed pseudo-random weights w, so every output element
// contributes to one scalar.
template <typename T>
class Projection {
 public:
  explicit Projection(std::uint64_t seed) : seed_(seed) {}

  Tensor<T> operator()(const Tensor<T>& out) {
    if (out.numel() == 1) return reshape(out, {1});
    if (weights_.size() != out.numel()) {
      Rng rng(seed_);
      weights_.resize(out.numel());
      for (auto& w : weights_) w = static_cast<T>(rng.uniform(-1.0, 1.0));
    }
    return sumAll(mul(out, Tensor<T>(out.shape(), weights_)));
  }

 private:
  std::uint64_t seed_;
  std::vector<T> weights_;
};

}  // namespace detail

// Compares reverse-mode gradients of `fn` at scalar type T with central
// differences of `reference`, a second instance of the same function built
// at scalar type R from identical values (R wider than T keeps round-off in
// the difference quotient far below the tolerance even for tiny
// gradients).
//
// `inputs` / `referenceInputs` are corresponding leaf tensors the functions
// read (directly or by closure, e.g. layer parameters). Reference inputs are
// perturbed in place and restored. A non-scalar output is reduced by a fixed
// random projection drawn from `projectionSeed`.
template <typename T, typename R>
GradCheckResult gradCheck(const std::function<Tensor<T>()>& fn, std::vector<Tensor<T>> inputs,
                          const std::function<Tensor<R>()>& reference,
                          std::vector<Tensor<R>> referenceInputs, double step,
                          std::uint64_t projectionSeed = 7) {
  if (inputs.size() != referenceInputs.size())
    throw ShapeError("gradCheck: reference has a different number of inputs");
  detail::Projection<T> project(projectionSeed);
  detail::Projection<R> projectReference(projectionSeed);

  std::vector<bool> previous;
  for (auto& in : inputs) {
    previous.push_back(in.requiresGrad());
    in.setRequiresGrad(true);
    in.zeroGrad();
  }
  backward(project(fn()));

  GradCheckResult result;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    const auto analytic = inputs[t].grad();
    auto values = referenceInputs[t].mutableValues();
    if (values.size() != analytic.size())
      throw ShapeError("gradCheck: reference input " + std::to_string(t) + " differs in size");
    for (std::size_t i = 0; i < values.size(); ++i) {
      const R saved = values[i];
      R fp, fm;
      {
        NoGradGuard guard;
        values[i] = saved + static_cast<R>(step);
        fp = projectReference(reference()).item();
        values[i] = saved - static_cast<R>(step);
        fm = projectReference(reference()).item();
      }
      values[i] = saved;
      const double numeric = static_cast<double>((fp - fm) / (R(2) * static_cast<R>(step)));
      const double a = static_cast<double>(analytic[i]);
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double err = std::abs(a - numeric) / denom;
      if (err > result.maxRelativeError) result = {err, t, i, a, numeric};
    }
  }
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    inputs[t].zeroGrad();
    inputs[t].setRequiresGrad(previous[t]);
  }
  return result;
}

// Same-precision check: `fn` is its own reference.
template <typename T>
GradCheckResult gradCheck(const std::function<Tensor<T>()>& fn, std::vector<Tensor<T>> inputs,
                          double step, std::uint64_t projectionSeed = 7) {
  return gradCheck<T, T>(fn, inputs, fn, inputs, step, projectionSeed);
}

}  // namespace ada2net::nd
