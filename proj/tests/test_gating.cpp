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

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "ada2net/nd/gradcheck.hpp"
#include "ada2net/nn/gating.hpp"
#include "ada2net/verify.hpp"

namespace ada2net::nn {
namespace {

using D = Tensor<double>;

D random(Shape shape, Rng& rng, bool grad = false) {
  std::vector<double> v(nd::numel(shape));
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return D(std::move(shape), std::move(v), grad);
}

AdaptiveBlockSpec smallSpec(std::size_t branches, GateMode mode = GateMode::kContentBased) {
  AdaptiveBlockSpec s;
  s.channels = 3;
  s.branches = branches;
  s.styleDim = 4;
  s.adainHidden = 5;
  s.gateHidden = 6;
  s.numDomains = 3;
  s.mode = mode;
  return s;
}

ParamList<double> paramsOf(const AdaptiveResidualBlock<double>& block) {
  ParamList<double> p;
  block.collect(p, "block");
  return p;
}

TEST(GateProbs, SumToOne) {
  Rng rng(1);
  GatingUnit<double> gate(3, 6, 4, true, rng);
  randomizeParams(ParamList<double>{{"", gate.hidden().weight()}, {"", gate.output().weight()}},
                  rng, 1.0);
  auto p = gate.probs(random({5, 3, 4, 4}, rng));
  for (std::size_t i = 0; i < 5; ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < 4; ++k) s += p.at(i * 4 + k);
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
}

TEST(GateProbs, ZeroWeightGateIsUniform) {
  Rng rng(2);
  GatingUnit<double> gate(3, 6, 4, true, rng);
  for (auto* t : {&gate.hidden().weight(), &gate.output().weight()})
    for (auto& v : t->mutableValues()) v = 0.0;
  auto p = gate.probs(random({2, 3, 4, 4}, rng));
  for (double v : p.values()) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(GateProbs, GradientsMatchFiniteDifferences) {
  Rng rng(3);
  GatingUnit<double> gate(3, 6, 4, true, rng);
  ParamList<double> params;
  gate.collect(params, "gate");
  randomizeParams(params, rng, 0.7);
  auto x = random({2, 3, 3, 3}, rng, true);
  std::vector<D> inputs{x};
  for (const auto& p : params) inputs.push_back(p.tensor);
  EXPECT_LT(nd::gradCheck<double>([&] { return gate.probs(x); }, inputs, 1e-6).maxRelativeError,
            1e-4);
}

TEST(Gumbel, RejectsNonPositiveTemperature) {
  Rng rng(4);
  EXPECT_THROW(gumbelSelect(D({1, 2}, {0.5, 0.5}), 0.0, rng), ConfigError);
}

TEST(Gumbel, DegenerateProbabilitiesAlwaysPickTheCertainBranch) {
  const auto s = verify::gumbelFrequencies({1.0, 0.0, 0.0}, 20000, 9);
  EXPECT_EQ(s.frequencies[0], 1.0);
  EXPECT_TRUE(s.exactlyOneHot);
}

TEST(Gumbel, FrequenciesStayWithinBinomialBound) {
  const std::vector<double> probs{0.7, 0.2, 0.1};
  const std::size_t draws = 100000;
  int within = 0;
  const int seeds = 20;
  for (int seed = 0; seed < seeds; ++seed) {
    const auto s = verify::gumbelFrequencies(probs, draws, 100 + seed);
    bool ok = true;
    for (std::size_t j = 0; j < probs.size(); ++j)
      ok = ok && std::abs(s.frequencies[j] - probs[j]) <
                     4.0 * std::sqrt(probs[j] * (1 - probs[j]) / draws);
    within += ok ? 1 : 0;
  }
  EXPECT_GE(within, 19);
}

TEST(Gumbel, StraightThroughBackwardIsRelaxedSoftmax) {
  Rng rng(5);
  auto logits = random({3, 4}, rng, true);
  std::vector<GateDecision> frozen;
  {
    nd::NoGradGuard guard;
    frozen = gumbelSelect(nd::softmax(logits, 1), 0.7, rng).decisions;
  }
  auto fn = [&] { return gumbelReplay(nd::softmax(logits, 1), frozen).weights; };
  const auto y = fn();
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t k = 0; k < 4; ++k)
      EXPECT_EQ(y.at(i * 4 + k), k == frozen[i].selected ? 1.0 : 0.0);
  EXPECT_LT(nd::gradCheck<double>(fn, {logits}, 1e-6).maxRelativeError, 1e-4);
}

TEST(AdaptiveBlock, DisabledModeRejectsSeveralBranches) {
  Rng rng(6);
  EXPECT_THROW(AdaptiveResidualBlock<double>(smallSpec(3, GateMode::kDisabled), rng),
               ConfigError);
}

TEST(AdaptiveBlock, SingleBranchMatchesStyledResidual) {
  Rng rng(7);
  AdaptiveResidualBlock<double> block(smallSpec(1), rng);
  randomizeParams(paramsOf(block), rng, 0.5);
  auto x = random({2, 3, 4, 4}, rng), s = random({2, 4}, rng);
  GateControl control;
  control.phase = Phase::kTrain;
  control.rng = &rng;
  std::vector<GateDecision> trace;
  auto y = block.forward(x, s, x, control, trace, 0);
  auto ref = block.branch(0)(x, &s);
  for (std::size_t i = 0; i < y.numel(); ++i) EXPECT_NEAR(y.at(i), ref.at(i), 1e-12);
}

TEST(AdaptiveBlock, EvalPhaseIsDeterministic) { EXPECT_TRUE(verify::evalPhaseDeterministic(3)); }

TEST(AdaptiveBlock, ExactlyOneBranchRunsPerSample) {
  Rng rng(8);
  AdaptiveResidualBlock<double> block(smallSpec(3), rng);
  randomizeParams(paramsOf(block), rng, 1.0);
  for (Phase phase : {Phase::kTrain, Phase::kEval}) {
    block.resetCounters();
    GateControl control;
    control.phase = phase;
    control.rng = &rng;
    std::vector<GateDecision> trace;
    for (int rep = 0; rep < 5; ++rep) {
      auto x = random({7, 3, 4, 4}, rng);
      block.forward(x, random({7, 4}, rng), x, control, trace, 0);
    }
    std::size_t forwarded = 0;
    for (std::size_t k = 0; k < 3; ++k) forwarded += block.branch(k).samplesForwarded();
    EXPECT_EQ(block.samplesRouted(), 35u);
    EXPECT_EQ(forwarded, 35u);
    EXPECT_EQ(trace.size(), 35u);
  }
}

TEST(AdaptiveBlock, FrozenNoiseGradientsMatchFiniteDifferences) {
  Rng rng(9);
  AdaptiveResidualBlock<double> block(smallSpec(3), rng);
  const auto params = paramsOf(block);
  randomizeParams(params, rng, 0.5);
  auto x = random({4, 3, 3, 3}, rng, true), s = random({4, 4}, rng, true);
  std::vector<GateDecision> frozen;
  {
    nd::NoGradGuard guard;
    GateControl control;
    control.phase = Phase::kTrain;
    control.rng = &rng;
    block.forward(x, s, x, control, frozen, 0);
  }
  auto fn = [&] {
    GateControl control;
    control.phase = Phase::kTrain;
    control.replay = &frozen;
    std::vector<GateDecision> trace;
    return block.forward(x, s, x, control, trace, 0);
  };
  std::vector<D> inputs{x, s};
  for (const auto& p : params) inputs.push_back(p.tensor);
  EXPECT_LT(nd::gradCheck<double>(fn, inputs, 1e-6).maxRelativeError, 1e-4);
}

TEST(AdaptiveBlock, ScalingGateLogitsKeepsEvalChoice) {
  Rng rng(10);
  AdaptiveResidualBlock<double> block(smallSpec(4), rng);
  randomizeParams(paramsOf(block), rng, 1.0);
  auto x = random({9, 3, 4, 4}, rng), s = random({9, 4}, rng);
  auto run = [&] {
    GateControl control;
    std::vector<GateDecision> trace;
    block.forward(x, s, x, control, trace, 0);
    std::vector<std::size_t> picks;
    for (const auto& d : trace) picks.push_back(d.selected);
    return picks;
  };
  const auto before = run();
  auto& out = block.gate()->output();
  for (auto* t : {&out.weight(), &out.bias()})
    for (auto& v : t->mutableValues()) v *= 3.5;
  EXPECT_EQ(run(), before);
}

TEST(AdaptiveBlock, LabelModeRoutesByLabelOnly) {
  Rng rng(11);
  AdaptiveResidualBlock<double> block(smallSpec(3, GateMode::kLabelBased), rng);
  randomizeParams(paramsOf(block), rng, 2.0);
  const std::vector<std::size_t> labels{0, 1, 2, 0, 1, 2, 0, 1};
  auto x = random({8, 3, 4, 4}, rng), s = random({8, 4}, rng);
  std::vector<double> onehot(8 * 3, 0.0);
  for (std::size_t i = 0; i < 8; ++i) onehot[i * 3 + labels[i]] = 1.0;
  GateControl control;
  std::vector<GateDecision> trace;
  block.forward(x, s, D({8, 3}, onehot), control, trace, 0);
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = 0; j < 8; ++j)
      if (labels[i] == labels[j]) {
        EXPECT_EQ(trace[i].selected, trace[j].selected);
      }
}

TEST(RouteHistogram, AllZeroDecisions) {
  std::vector<GateDecision> d(3);
  const auto h = routeHistogram(d, 3);
  EXPECT_EQ(h.at(0), (std::vector<double>{1.0, 0.0, 0.0}));
}

TEST(RouteHistogram, MixedDecisions) {
  std::vector<GateDecision> d(4);
  d[2].selected = 1;
  d[3].selected = 2;
  const auto h = routeHistogram(d, 3);
  EXPECT_EQ(h.at(0), (std::vector<double>{0.5, 0.25, 0.25}));
}

TEST(RouteHistogram, UniformDecisionsGiveEqualShares) {
  std::vector<GateDecision> d(400);
  for (std::size_t i = 0; i < d.size(); ++i) d[i].selected = i % 4;
  const auto h = routeHistogram(d, 4);
  for (double f : h.at(0)) EXPECT_DOUBLE_EQ(f, 0.25);
}

TEST(RouteHistogram, EmptyListIsAnError) {
  EXPECT_THROW(routeHistogram({}, 3), Error);
}

TEST(GateTrace, OneRowPerDecision) {
  std::vector<GateDecision> d(2);
  d[0].probs = {0.25, 0.75};
  d[1].block = 1;
  d[1].selected = 1;
  d[1].probs = {0.5, 0.5};
  std::ostringstream os;
  writeGateTraceHeader(os);
  writeGateTrace(os, 7, d);
  EXPECT_EQ(os.str(),
            "iteration,blockIndex,sampleIndex,selectedBranch,probs\n"
            "7,0,0,0,0.25;0.75\n"
            "7,1,0,1,0.5;0.5\n");
}

}  // namespace
}  // namespace ada2net::nn
