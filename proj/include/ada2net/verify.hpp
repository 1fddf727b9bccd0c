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


// Self-check catalogue: finite-difference gradient checks for every
// primitive and composite layer, Gumbel sampling statistics, FID oracles and
// FLOP/parameter invariance. Shared by the `self-check` command and the
// acceptance tests.

#include <Eigen/Cholesky>
#include <chrono>
#include <cmath>
#include <functional>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "ada2net/losses.hpp"
#include "ada2net/metrics/complexity.hpp"
#include "ada2net/metrics/fid.hpp"
#include "ada2net/nd/gradcheck.hpp"
#include "ada2net/nn/networks.hpp"

namespace ada2net::verify {

using D = double;
using nd::Shape;
using Tensor = nd::Tensor<D>;

struct CheckResult {
  std::string name;
  bool passed = false;
  double worst = 0.0;      // the statistic compared against tolerance
  double tolerance = 0.0;
  std::string detail;
};

inline void writeResult(std::ostream& os, const CheckResult& r) {
  os << (r.passed ? "PASS " : "FAIL ") << r.name << "  worst=" << r.worst
     << " tol=" << r.tolerance;
  if (!r.detail.empty()) os << "  " << r.detail;
  os << '\n';
}

// ---------------------------------------------------------------------------
// Gradient checks
// ---------------------------------------------------------------------------

// One randomized instance: fn reads `inputs` (and whatever the closure owns).
template <typename T>
struct GradCase {
  std::function<nd::Tensor<T>()> fn;
  std::vector<nd::Tensor<T>> inputs;
};

// Analytic gradients are taken at 64-bit; the finite-difference reference is
// an identical instance evaluated in extended precision.
using Reference = long double;

struct NamedGradCase {
  std::string name;
  std::function<GradCase<D>(Rng&)> build;
  std::function<GradCase<Reference>(Rng&)> buildReference;
};

// `builder(T{}, rng)` must consume rng identically for every T.
template <typename Builder>
NamedGradCase makeCase(std::string name, Builder builder) {
  return {std::move(name), [builder](Rng& r) { return builder(D{}, r); },
          [builder](Rng& r) { return builder(Reference{}, r); }};
}

struct GradCheckOptions {
  std::size_t seeds = 20;
  double step = 1e-6;
  double tolerance = 1e-4;
};

namespace detail {

// Uniform in +-[0.2, 1]: keeps relu/abs/leaky inputs off their kink.
template <typename T>
nd::Tensor<T> offKink(Shape shape, Rng& rng) {
  std::vector<T> v(nd::numel(shape));
  for (auto& x : v) {
    const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
    x = static_cast<T>(sign * rng.uniform(0.2, 1.0));
  }
  return nd::Tensor<T>(std::move(shape), std::move(v), true);
}

template <typename T>
nd::Tensor<T> uniform(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<T> v(nd::numel(shape));
  for (auto& x : v) x = static_cast<T>(rng.uniform(lo, hi));
  return nd::Tensor<T>(std::move(shape), std::move(v), true);
}

template <typename T, typename Op>
GradCase<T> unaryCase(nd::Tensor<T> x, Op op) {
  return {[x, op] { return op(x); }, {x}};
}

// Re-draws a module's parameters and returns them as check inputs.
template <typename T, typename Module>
std::vector<nd::Tensor<T>> randomizedParams(const Module& m, Rng& rng, double stddev) {
  nn::ParamList<T> params;
  m.collect(params, "m");
  nn::randomizeParams(params, rng, stddev);
  std::vector<nd::Tensor<T>> out;
  for (const auto& p : params) out.push_back(p.tensor);
  return out;
}

inline std::vector<std::size_t> randomLabels(std::size_t n, std::size_t classes, Rng& rng) {
  std::vector<std::size_t> labels(n);
  for (auto& l : labels) l = rng.below(classes);
  return labels;
}

// Flattens and joins several outputs so one projection covers all of them.
template <typename T>
nd::Tensor<T> joinOutputs(const std::vector<nd::Tensor<T>>& parts) {
  std::vector<nd::Tensor<T>> flat;
  for (const auto& p : parts) flat.push_back(nd::reshape(p, {1, p.numel()}));
  return nd::concat(flat, 1);
}

template <typename Op>
NamedGradCase elementwise(std::string name, Op op, int domain) {
  return makeCase(std::move(name), [op, domain](auto tag, Rng& r) {
    using T = decltype(tag);
    nd::Tensor<T> x = domain == 0   ? uniform<T>({3, 5}, r)
                      : domain == 1 ? offKink<T>({3, 5}, r)
                      : domain == 2 ? uniform<T>({3, 5}, r, 0.3, 3.0)
                                    : uniform<T>({3, 5}, r, -2.0, 2.0);
    return unaryCase(x, [op](const nd::Tensor<T>& v) { return op(v); });
  });
}

}  // namespace detail

inline std::vector<NamedGradCase> primitiveCases() {
  using detail::offKink;
  using detail::uniform;
  using detail::unaryCase;
  enum Domain { kAny = 0, kOffKink = 1, kPositive = 2, kWide = 3 };
  std::vector<NamedGradCase> c;
  c.push_back(makeCase("add", [](auto tag, Rng& r) {
    using T = decltype(tag);
    auto a = uniform<T>({2, 3, 4}, r), b = uniform<T>({3, 1}, r);
    return GradCase<T>{[=] { return nd::add(a, b); }, {a, b}};
  }));
  c.push_back(makeCase("sub", [](auto tag, Rng& r) {
    using T = decltype(tag);
    auto a = uniform<T>({3, 4}, r), b = uniform<T>({1, 4}, r);
    return GradCase<T>{[=] { return nd::sub(a, b); }, {a, b}};
  }));
  c.push_back(makeCase("mul", [](auto tag, Rng& r) {
    using T = decltype(tag);
    auto a = uniform<T>({4, 3}, r), b = uniform<T>({4, 1}, r);
    return GradCase<T>{[=] { return nd::mul(a, b); }, {a, b}};
  }));
  c.push_back(makeCase("div", [](auto tag, Rng& r) {
    using T = decltype(tag);
    auto a = uniform<T>({3, 4}, r), b = offKink<T>({3, 4}, r);
    return GradCase<T>{[=] { return nd::div(a, b); }, {a, b}};
  }));
  c.push_back(detail::elementwise("scale", [](const auto& x) { return nd::scale(x, decltype(x.item())(-1.7)); }, kAny));
  c.push_back(detail::elementwise("addScalar", [](const auto& x) { return nd::addScalar(x, decltype(x.item())(0.3)); }, kAny));
  c.push_back(detail::elementwise("relu", [](const auto& x) { return nd::relu(x); }, kOffKink));
  c.push_back(detail::elementwise("leakyRelu", [](const auto& x) { return nd::leakyRelu(x, decltype(x.item())(0.2)); }, kOffKink));
  c.push_back(detail::elementwise("tanh", [](const auto& x) { return nd::tanh(x); }, kWide));
  c.push_back(detail::elementwise("exp", [](const auto& x) { return nd::exp(x); }, kAny));
  c.push_back(detail::elementwise("log", [](const auto& x) { return nd::log(x); }, kPositive));
  c.push_back(detail::elementwise("abs", [](const auto& x) { return nd::abs(x); }, kOffKink));
  c.push_back(detail::elementwise("square", [](const auto& x) { return nd::square(x); }, kAny));
  c.push_back(detail::elementwise("softmax", [](const auto& x) { return nd::softmax(x, 1); }, kWide));
  c.push_back(detail::elementwise("logSoftmax", [](const auto& x) { return nd::logSoftmax(x, 1); }, kWide));
  c.push_back(makeCase("reshape", [](auto tag, Rng& r) {
    using T = decltype(tag);
    return unaryCase(uniform<T>({2, 6}, r),
                     [](const nd::Tensor<T>& x) { return nd::square(nd::reshape(x, {3, 4})); });
  }));
  c.push_back(makeCase("broadcast", [](auto tag, Rng& r) {
    using T = decltype(tag);
    return unaryCase(uniform<T>({3, 1}, r),
                     [](const nd::Tensor<T>& x) { return nd::broadcastTo(x, {2, 3, 4}); });
  }));
  c.push_back(makeCase("concat", [](auto tag, Rng& r) {
    using T = decltype(tag);
    auto a = uniform<T>({2, 2, 3}, r), b = uniform<T>({2, 3, 3}, r);
    return GradCase<T>{[=] { return nd::concat<T>({a, b, a}, 1); }, {a, b}};
  }));
  c.push_back(makeCase("slice", [](auto tag, Rng& r) {
    using T = decltype(tag);
    return unaryCase(uniform<T>({3, 5, 2}, r),
                     [](const nd::Tensor<T>& x) { return nd::slice(x, 1, 1, 3); });
  }));
  c.push_back(makeCase("gatherRows", [](auto tag, Rng& r) {
    using T = decltype(tag);
    return unaryCase(uniform<T>({5, 3}, r),
                     [](const nd::Tensor<T>& x) { return nd::gatherRows(x, {4, 0, 2, 0}); });
  }));
  c.push_back(makeCase("scatterRows", [](auto tag, Rng& r) {
    using T = decltype(tag);
    return unaryCase(uniform<T>({3, 2}, r),
                     [](const nd::Tensor<T>& x) { return nd::scatterRows(x, {1, 3, 4}, 6); });
  }));
  c.push_back(makeCase("straightThrough", [](auto tag, Rng& r) {
    using T = decltype(tag);
    auto x = uniform<T>({2, 3}, r);
    std::vector<T> hard{0, 1, 0, 1, 0, 0}, anchor(6);
    for (auto& a : anchor) a = static_cast<T>(r.uniform());
    return GradCase<T>{[=] { return nd::straightThrough(hard, nd::softmax(x, 1), anchor); }, {x}};
  }));
  c.push_back(makeCase("sum", [](auto tag, Rng& r) {
    using T = decltype(tag);
    return unaryCase(uniform<T>({2, 3, 4}, r),
                     [](const nd::Tensor<T>& x) { return nd::sum(x, {0, 2}); });
  }));
  c.push_back(makeCase("mean", [](auto tag, Rng& r) {
    using T = decltype(tag);
    return unaryCase(uniform<T>({2, 3, 4}, r),
                     [](const nd::Tensor<T>& x) { return nd::mean(x, {1}, true); });
  }));
  c.push_back(makeCase("globalAveragePool", [](auto tag, Rng& r) {
    using T = decltype(tag);
    return unaryCase(uniform<T>({2, 3, 4, 4}, r),
                     [](const nd::Tensor<T>& x) { return nd::globalAveragePool(x); });
  }));
  c.push_back(makeCase("matmul", [](auto tag, Rng& r) {
    using T = decltype(tag);
    auto a = uniform<T>({3, 4}, r), b = uniform<T>({4, 5}, r);
    return GradCase<T>{[=] { return nd::matmul(a, b); }, {a, b}};
  }));
  c.push_back(makeCase("conv2d", [](auto tag, Rng& r) {
    using T = decltype(tag);
    auto x = uniform<T>({2, 3, 6, 6}, r), w = uniform<T>({4, 3, 3, 3}, r), b = uniform<T>({4}, r);
    return GradCase<T>{[=] { return nd::conv2d(x, w, &b, 1, 1); }, {x, w, b}};
  }));
  c.push_back(makeCase("conv2d.stride2", [](auto tag, Rng& r) {
    using T = decltype(tag);
    auto x = uniform<T>({2, 2, 8, 8}, r), w = uniform<T>({3, 2, 4, 4}, r);
    return GradCase<T>{[=] { return nd::conv2d(x, w, static_cast<const nd::Tensor<T>*>(nullptr), 2, 1); },
                       {x, w}};
  }));
  c.push_back(makeCase("conv2d.1x1", [](auto tag, Rng& r) {
    using T = decltype(tag);
    auto x = uniform<T>({1, 4, 5, 5}, r), w = uniform<T>({2, 4, 1, 1}, r), b = uniform<T>({2}, r);
    return GradCase<T>{[=] { return nd::conv2d(x, w, &b, 1, 0); }, {x, w, b}};
  }));
  c.push_back(makeCase("pad.zero", [](auto tag, Rng& r) {
    using T = decltype(tag);
    return unaryCase(uniform<T>({1, 2, 5, 5}, r),
                     [](const nd::Tensor<T>& x) { return nd::pad(x, 2, nd::PadMode::kZero); });
  }));
  c.push_back(makeCase("pad.reflect", [](auto tag, Rng& r) {
    using T = decltype(tag);
    return unaryCase(uniform<T>({1, 2, 5, 5}, r),
                     [](const nd::Tensor<T>& x) { return nd::pad(x, 3, nd::PadMode::kReflect); });
  }));
  c.push_back(makeCase("upsampleNearest2x", [](auto tag, Rng& r) {
    using T = decltype(tag);
    return unaryCase(uniform<T>({2, 2, 3, 3}, r),
                     [](const nd::Tensor<T>& x) { return nd::upsampleNearest2x(x); });
  }));
  c.push_back(makeCase("avgPool2x2", [](auto tag, Rng& r) {
    using T = decltype(tag);
    return unaryCase(uniform<T>({2, 2, 4, 6}, r),
                     [](const nd::Tensor<T>& x) { return nd::avgPool2x2(x); });
  }));
  c.push_back(makeCase("instanceNorm", [](auto tag, Rng& r) {
    using T = decltype(tag);
    return unaryCase(uniform<T>({2, 3, 4, 4}, r),
                     [](const nd::Tensor<T>& x) { return nd::instanceNorm(x, T(1e-5)); });
  }));
  return c;
}

inline std::vector<NamedGradCase> compositeCases() {
  using detail::randomizedParams;
  using detail::uniform;
  std::vector<NamedGradCase> c;
  c.push_back(makeCase("layer.convInstanceNorm", [](auto tag, Rng& r) {
    using T = decltype(tag);
    auto block = std::make_shared<nn::ConvBlock<T>>(
        nn::ConvBlockSpec{3, 4, 3, 1, nn::Activation::kRelu, nn::Normalization::kInstance,
                          nd::PadMode::kReflect},
        r);
    auto inputs = randomizedParams<T>(*block, r, 0.5);
    auto x = uniform<T>({2, 3, 5, 5}, r);
    inputs.push_back(x);
    return GradCase<T>{[block, x] { return (*block)(x); }, inputs};
  }));
  c.push_back(makeCase("layer.adaIN", [](auto tag, Rng& r) {
    using T = decltype(tag);
    auto net = std::make_shared<nn::AdaINParamNet<T>>(5, 6, 3, r);
    auto inputs = randomizedParams<T>(*net, r, 0.5);
    auto x = uniform<T>({2, 3, 4, 4}, r), s = uniform<T>({2, 5}, r);
    inputs.push_back(x);
    inputs.push_back(s);
    return GradCase<T>{[net, x, s] { return nn::adaIN(x, s, *net); }, inputs};
  }));
  c.push_back(makeCase("layer.residual", [](auto tag, Rng& r) {
    using T = decltype(tag);
    auto block = std::make_shared<nn::ResidualBlock<T>>(3, 3, nn::Normalization::kInstance, r);
    auto inputs = randomizedParams<T>(*block, r, 0.5);
    auto x = uniform<T>({2, 3, 4, 4}, r);
    inputs.push_back(x);
    return GradCase<T>{[block, x] { return (*block)(x); }, inputs};
  }));
  c.push_back(makeCase("layer.adaptiveBlock", [](auto tag, Rng& r) {
    using T = decltype(tag);
    nn::AdaptiveBlockSpec spec;
    spec.channels = 3;
    spec.kernel = 3;
    spec.branches = 3;
    spec.styleDim = 4;
    spec.adainHidden = 5;
    spec.gateHidden = 4;
    auto block = std::make_shared<nn::AdaptiveResidualBlock<T>>(spec, r);
    auto inputs = randomizedParams<T>(*block, r, 0.5);
    auto x = uniform<T>({4, 3, 4, 4}, r), s = uniform<T>({4, 4}, r);
    inputs.push_back(x);
    inputs.push_back(s);
    // Draw the Gumbel decisions once; every evaluation replays them.
    auto frozen = std::make_shared<std::vector<nn::GateDecision>>();
    {
      nd::NoGradGuard noGrad;
      nn::GateControl control;
      control.phase = nn::Phase::kTrain;
      control.rng = &r;
      block->forward(x, s, x, control, *frozen, 0);
    }
    return GradCase<T>{[block, x, s, frozen] {
                         nn::GateControl control;
                         control.phase = nn::Phase::kTrain;
                         control.replay = frozen.get();
                         std::vector<nn::GateDecision> trace;
                         return block->forward(x, s, x, control, trace, 0);
                       },
                       inputs};
  }));
  c.push_back(makeCase("layer.discriminator", [](auto tag, Rng& r) {
    using T = decltype(tag);
    auto dis = std::make_shared<nn::Discriminator<T>>("C4S2-4, C4S2-4, C1S1-1+c(4:scale)s1-D",
                                                      2, 1, 16, r);
    const auto params = dis->params();
    nn::randomizeParams(params, r, 0.3);
    std::vector<nd::Tensor<T>> inputs;
    for (const auto& p : params) inputs.push_back(p.tensor);
    auto x = uniform<T>({2, 3, 16, 16}, r);
    inputs.push_back(x);
    return GradCase<T>{[dis, x] {
                         auto out = (*dis)(x);
                         auto parts = out.adversarial;
                         parts.push_back(out.classLogits);
                         return detail::joinOutputs(parts);
                       },
                       inputs};
  }));

  // L1 terms: |a - b| kept away from its kink.
  const auto l1Case = [](std::string name, auto loss) {
    return makeCase(std::move(name), [loss](auto tag, Rng& r) {
      using T = decltype(tag);
      auto a = uniform<T>({2, 3, 3}, r), b = uniform<T>({2, 3, 3}, r);
      auto bv = b.mutableValues();
      for (std::size_t i = 0; i < bv.size(); ++i)
        if (std::abs(static_cast<double>(bv[i] - a.at(i))) < 0.1) bv[i] += T(0.2);
      return GradCase<T>{[=] { return loss(a, b); }, {a, b}};
    });
  };
  c.push_back(l1Case("loss.recCyc", [](const auto& a, const auto& b) { return losses::cycleLoss(a, b); }));
  c.push_back(l1Case("loss.recIn", [](const auto& a, const auto& b) { return losses::identityLoss(a, b); }));
  c.push_back(l1Case("loss.recS", [](const auto& a, const auto& b) { return losses::styleRecLoss(a, b); }));
  c.push_back(l1Case("loss.recC", [](const auto& a, const auto& b) { return losses::contentRecLoss(a, b); }));
  c.push_back(makeCase("loss.advDis", [](auto tag, Rng& r) {
    using T = decltype(tag);
    std::vector<nd::Tensor<T>> real{uniform<T>({2, 1, 2, 2}, r), uniform<T>({2, 1, 1, 1}, r)};
    std::vector<nd::Tensor<T>> fake{uniform<T>({2, 1, 2, 2}, r), uniform<T>({2, 1, 1, 1}, r)};
    auto inputs = real;
    inputs.insert(inputs.end(), fake.begin(), fake.end());
    return GradCase<T>{[=] { return losses::lsganDisLoss(real, fake); }, inputs};
  }));
  c.push_back(makeCase("loss.advGen", [](auto tag, Rng& r) {
    using T = decltype(tag);
    std::vector<nd::Tensor<T>> fake{uniform<T>({2, 1, 2, 2}, r), uniform<T>({2, 1, 1, 1}, r)};
    return GradCase<T>{[=] { return losses::lsganGenLoss(fake); }, fake};
  }));
  c.push_back(makeCase("loss.clsDis", [](auto tag, Rng& r) {
    using T = decltype(tag);
    auto logits = uniform<T>({4, 3}, r, -2, 2);
    auto labels = detail::randomLabels(4, 3, r);
    return GradCase<T>{[=] { return losses::clsDisLoss(logits, labels); }, {logits}};
  }));
  c.push_back(makeCase("loss.clsGen", [](auto tag, Rng& r) {
    using T = decltype(tag);
    auto logits = uniform<T>({4, 3}, r, -2, 2);
    auto labels = detail::randomLabels(4, 3, r);
    return GradCase<T>{[=] { return losses::clsGenLoss(logits, labels); }, {logits}};
  }));
  return c;
}

inline CheckResult runGradCase(const NamedGradCase& c, const GradCheckOptions& options = {}) {
  CheckResult result{"gradcheck/" + c.name, true, 0.0, options.tolerance, ""};
  for (std::size_t seed = 0; seed < options.seeds; ++seed) {
    const auto key = std::hash<std::string>{}(c.name);
    Rng rng = Rng::derive(0x6AD, {key, seed});
    Rng referenceRng = Rng::derive(0x6AD, {key, seed});
    nd::GradCheckResult g;
    try {
      auto instance = c.build(rng);
      auto reference = c.buildReference(referenceRng);
      g = nd::gradCheck<D, Reference>(instance.fn, instance.inputs, reference.fn,
                                      reference.inputs, options.step);
    } catch (const std::exception& e) {
      result.passed = false;
      result.detail = "seed " + std::to_string(seed) + " threw: " + e.what();
      return result;
    }
    if (g.maxRelativeError > result.worst) {
      result.worst = g.maxRelativeError;
      std::ostringstream os;
      os << "seed " << seed << " input " << g.input << "[" << g.coordinate
         << "] analytic=" << g.analytic << " numeric=" << g.numeric;
      result.detail = os.str();
    }
  }
  result.passed = result.worst < options.tolerance;
  return result;
}

// ---------------------------------------------------------------------------
// Gumbel sampling
// ---------------------------------------------------------------------------

struct GumbelStats {
  std::vector<double> frequencies;
  double maxDeviation = 0.0;
  bool exactlyOneHot = true;
};

inline GumbelStats gumbelFrequencies(const std::vector<double>& probs, std::size_t draws,
                                     std::uint64_t seed) {
  const std::size_t k = probs.size();
  std::vector<double> tiled;
  tiled.reserve(draws * k);
  for (std::size_t i = 0; i < draws; ++i) tiled.insert(tiled.end(), probs.begin(), probs.end());
  Rng rng(seed);
  nd::NoGradGuard noGrad;
  const auto sample = nn::gumbelSelect(Tensor({draws, k}, std::move(tiled)), 1.0, rng);
  GumbelStats s;
  std::vector<std::size_t> counts(k, 0);
  const auto w = sample.weights.values();
  for (std::size_t i = 0; i < draws; ++i) {
    const std::size_t sel = sample.decisions[i].selected;
    ++counts[sel];
    for (std::size_t j = 0; j < k; ++j)
      if (w[i * k + j] != (j == sel ? 1.0 : 0.0)) s.exactlyOneHot = false;
  }
  for (std::size_t j = 0; j < k; ++j) {
    s.frequencies.push_back(static_cast<double>(counts[j]) / static_cast<double>(draws));
    s.maxDeviation = std::max(s.maxDeviation, std::abs(s.frequencies[j] - probs[j]));
  }
  return s;
}

// Two eval-phase passes through an adaptive block agree bit for bit.
inline bool evalPhaseDeterministic(std::uint64_t seed) {
  Rng rng(seed);
  nn::AdaptiveBlockSpec spec;
  spec.channels = 4;
  spec.branches = 3;
  spec.styleDim = 5;
  spec.adainHidden = 6;
  spec.gateHidden = 4;
  nn::AdaptiveResidualBlock<D> block(spec, rng);
  nn::ParamList<D> params;
  block.collect(params, "b");
  nn::randomizeParams(params, rng, 0.5);
  auto x = detail::uniform<D>({6, 4, 4, 4}, rng), s = detail::uniform<D>({6, 5}, rng);
  std::vector<nn::GateDecision> t1, t2;
  nn::GateControl c1, c2;
  Rng unused1(1), unused2(2);  // eval must not consume randomness
  c1.rng = &unused1;
  c2.rng = &unused2;
  const auto y1 = block.forward(x, s, x, c1, t1, 0);
  const auto y2 = block.forward(x, s, x, c2, t2, 0);
  if (!std::equal(y1.values().begin(), y1.values().end(), y2.values().begin())) return false;
  for (std::size_t i = 0; i < t1.size(); ++i)
    if (t1[i].selected != t2[i].selected) return false;
  return true;
}

inline std::vector<CheckResult> gumbelChecks(std::size_t draws = 100000) {
  const std::vector<std::pair<std::string, std::vector<double>>> cases{
      {"uniformK4", {0.25, 0.25, 0.25, 0.25}},
      {"skewed", {0.7, 0.2, 0.1}},
      {"degenerate", {1.0, 0.0, 0.0}}};
  std::vector<CheckResult> out;
  std::uint64_t seed = 11;
  for (const auto& [name, probs] : cases) {
    const auto s = gumbelFrequencies(probs, draws, seed++);
    std::ostringstream os;
    os << "freq";
    for (double f : s.frequencies) os << ' ' << f;
    out.push_back({"gumbel/frequency." + name, s.maxDeviation < 0.01, s.maxDeviation, 0.01,
                   os.str()});
    out.push_back({"gumbel/oneHot." + name, s.exactlyOneHot, s.exactlyOneHot ? 0.0 : 1.0, 0.0,
                   ""});
  }
  const bool det = evalPhaseDeterministic(5);
  out.push_back({"gumbel/evalDeterministic", det, det ? 0.0 : 1.0, 0.0, ""});
  return out;
}

// ---------------------------------------------------------------------------
// FID oracles
// ---------------------------------------------------------------------------

inline metrics::Matrix sampleGaussian(const metrics::Vector& mean, const metrics::Matrix& cov,
                                      std::size_t n, Rng& rng) {
  const metrics::Matrix l = cov.llt().matrixL();
  metrics::Matrix out(static_cast<Eigen::Index>(n), mean.size());
  metrics::Vector z(mean.size());
  for (std::size_t i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < z.size(); ++j) z(j) = rng.normal();
    out.row(static_cast<Eigen::Index>(i)) = (mean + l * z).transpose();
  }
  return out;
}

inline std::vector<CheckResult> fidChecks() {
  using metrics::GaussianStats;
  using metrics::Matrix;
  using metrics::Vector;
  std::vector<CheckResult> out;
  Rng rng(3);

  Matrix x(50, 6);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  const auto sx = metrics::fitStats(x);
  const double self = metrics::fid(sx, sx);
  out.push_back({"fid/selfIsZero", std::abs(self) <= 1e-6, std::abs(self), 1e-6, ""});

  GaussianStats a{Vector::Constant(1, 0.0), Matrix::Constant(1, 1, 1.0)};
  GaussianStats b{Vector::Constant(1, 1.0), Matrix::Constant(1, 1, 1.0)};
  const double oneD = metrics::fid(a, b);
  out.push_back({"fid/oneDimensional", oneD == 1.0, std::abs(oneD - 1.0), 0.0,
                 "value " + std::to_string(oneD)});

  GaussianStats c{Vector::Zero(2), Matrix::Identity(2, 2)};
  GaussianStats d{(Vector(2) << 3.0, 4.0).finished(), Matrix::Identity(2, 2)};
  const double meanShift = metrics::fid(c, d);
  out.push_back({"fid/meanShift", std::abs(meanShift - 25.0) <= 1e-9,
                 std::abs(meanShift - 25.0), 1e-9, ""});

  // Sampled statistics against the closed form of the true parameters.
  const Eigen::Index f = 8;
  Matrix ar(f, f), ag(f, f);
  for (Eigen::Index i = 0; i < ar.size(); ++i) ar.data()[i] = rng.normal() * 0.5;
  for (Eigen::Index i = 0; i < ag.size(); ++i) ag.data()[i] = rng.normal() * 0.5;
  GaussianStats truthR{Vector::Zero(f), ar * ar.transpose() + Matrix::Identity(f, f)};
  GaussianStats truthG{Vector::Constant(f, 1.0), ag * ag.transpose() + 0.5 * Matrix::Identity(f, f)};
  const double analytic = metrics::fid(truthR, truthG);
  const double sampled = metrics::fid(metrics::fitStats(sampleGaussian(truthR.mean, truthR.cov, 5000, rng)),
                                      metrics::fitStats(sampleGaussian(truthG.mean, truthG.cov, 5000, rng)));
  const double rel = std::abs(sampled - analytic) / analytic;
  out.push_back({"fid/sampledVsAnalytic", rel < 0.05, rel, 0.05,
                 "analytic " + std::to_string(analytic) + " sampled " + std::to_string(sampled)});
  return out;
}

// ---------------------------------------------------------------------------
// Parameter / FLOP invariance across K
// ---------------------------------------------------------------------------

inline std::vector<CheckResult> complexityChecks(const nn::ModelOptions& options = {}) {
  std::vector<CheckResult> out;
  const auto base = metrics::measureGenerator(options, 1);
  nn::ModelOptions one = options;
  one.branches = 1;
  Rng rng(0);
  const std::size_t perBranch = nn::Generator<float>(one, rng).paramsPerBranch();
  for (std::size_t k = 1; k <= 4; ++k) {
    const auto m = metrics::measureGenerator(options, k);
    const std::size_t expected = base.params.total() + (k - 1) * perBranch;
    const std::size_t actual = m.params.total();
    out.push_back({"complexity/params.K" + std::to_string(k), actual == expected,
                   std::abs(static_cast<double>(actual) - static_cast<double>(expected)), 0.0,
                   std::to_string(actual) + " vs " + std::to_string(expected)});
    const double ratio = static_cast<double>(m.flops) / static_cast<double>(base.flops);
    out.push_back({"complexity/flopRatio.K" + std::to_string(k), ratio <= 1.01, ratio, 1.01, ""});
    const double share = static_cast<double>(m.gateFlops) / static_cast<double>(m.flops);
    out.push_back({"complexity/gateShare.K" + std::to_string(k), share < 0.01, share, 0.01, ""});
  }
  return out;
}

// ---------------------------------------------------------------------------

// Runs the whole catalogue; `progress` (optional) receives one line per
// check as it finishes.
inline std::vector<CheckResult> runSelfCheck(std::ostream* progress = nullptr,
                                             const GradCheckOptions& options = {}) {
  std::vector<CheckResult> all;
  const auto emit = [&](CheckResult r) {
    if (progress) writeResult(*progress, r);
    all.push_back(std::move(r));
  };
  for (const auto& c : primitiveCases()) emit(runGradCase(c, options));
  for (const auto& c : compositeCases()) emit(runGradCase(c, options));
  for (auto& r : gumbelChecks()) emit(std::move(r));
  for (auto& r : fidChecks()) emit(std::move(r));
  for (auto& r : complexityChecks()) emit(std::move(r));
  return all;
}

}  // namespace ada2net::verify
