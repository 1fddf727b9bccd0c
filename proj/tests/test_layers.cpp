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

#include "ada2net/nd/gradcheck.hpp"
#include "ada2net/nn/layers.hpp"

namespace ada2net::nn {
namespace {

using D = Tensor<double>;

D random(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0, bool grad = true) {
  std::vector<double> v(nd::numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return D(std::move(shape), std::move(v), grad);
}

void zeroAll(const ParamList<double>& params) {
  for (const auto& p : params) {
    D t = p.tensor;
    for (auto& v : t.mutableValues()) v = 0.0;
  }
}

std::vector<D> tensorsOf(const ParamList<double>& params) {
  std::vector<D> out;
  for (const auto& p : params) out.push_back(p.tensor);
  return out;
}

TEST(InstanceNorm, ConstantChannelMapsToZero) {
  auto y = instanceNorm(D::full({1, 2, 3, 3}, 5.0));
  for (double v : y.values()) EXPECT_EQ(v, 0.0);
}

TEST(InstanceNorm, ZeroMeanUnitVarianceInputIsUnchanged) {
  auto y = nn::instanceNorm(D({1, 1, 1, 2}, {1.0, -1.0}), 0.0);
  EXPECT_DOUBLE_EQ(y.at(0), 1.0);
  EXPECT_DOUBLE_EQ(y.at(1), -1.0);
}

TEST(InstanceNorm, RandomInputIsStandardizedPerChannel) {
  Rng rng(1);
  auto y = instanceNorm(random({2, 3, 6, 5}, rng, -3.0, 7.0, false));
  const std::size_t plane = 30;
  for (std::size_t p = 0; p < 6; ++p) {
    double mean = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < plane; ++i) mean += y.at(p * plane + i);
    mean /= plane;
    for (std::size_t i = 0; i < plane; ++i) sq += std::pow(y.at(p * plane + i) - mean, 2);
    EXPECT_LT(std::abs(mean), 1e-5);
    EXPECT_LT(std::abs(sq / plane - 1.0), 1e-3);
  }
}

TEST(InstanceNorm, SinglePixelWithoutEpsilonIsAnError) {
  EXPECT_THROW(nn::instanceNorm(D({1, 1, 1, 1}, {2.0}), 0.0), NumericError);
}

TEST(InstanceNorm, IsScaleInvariant) {
  Rng rng(2);
  auto x = random({1, 3, 4, 4}, rng, -1.0, 1.0, false);
  // exact only with eps = 0; eps breaks invariance at the 1e-5 level
  auto a = nn::instanceNorm(x, 0.0), b = nn::instanceNorm(nd::scale(x, 7.5), 0.0);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_NEAR(a.at(i), b.at(i), 1e-9);
}

TEST(AdaIN, UnitScaleZeroShiftIsInstanceNorm) {
  Rng rng(3);
  AdaINParamNet<double> net(5, 8, 3, rng);
  zeroAll({{"w", net.alpha().weight()}, {"b", net.beta().weight()}, {"c", net.beta().bias()}});
  for (auto& v : net.alpha().bias().mutableValues()) v = 1.0;
  auto x = random({2, 3, 4, 4}, rng, -1.0, 1.0, false);
  auto s = random({2, 5}, rng, -1.0, 1.0, false);
  auto y = adaIN(x, s, net), ref = instanceNorm(x);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_NEAR(y.at(i), ref.at(i), 1e-12);
}

TEST(AdaIN, ZeroScaleOutputsShiftOnly) {
  Rng rng(4);
  AdaINParamNet<double> net(5, 8, 3, rng);
  zeroAll({{"w", net.alpha().weight()}, {"b", net.alpha().bias()}});
  auto s = random({1, 5}, rng, -1.0, 1.0, false);
  auto y1 = adaIN(random({1, 3, 4, 4}, rng, -1.0, 1.0, false), s, net);
  auto y2 = adaIN(random({1, 3, 4, 4}, rng, -1.0, 1.0, false), s, net);
  for (std::size_t i = 0; i < y1.numel(); ++i) EXPECT_DOUBLE_EQ(y1.at(i), y2.at(i));
  const auto beta = net(s).second;
  for (std::size_t c = 0; c < 3; ++c) EXPECT_DOUBLE_EQ(y1.at(c * 16 + 5), beta.at(c));
}

TEST(AdaIN, IsTranslationInvariantPerChannel) {
  Rng rng(5);
  AdaINParamNet<double> net(4, 8, 2, rng);
  auto x = random({1, 2, 3, 3}, rng, -1.0, 1.0, false);
  auto s = random({1, 4}, rng, -1.0, 1.0, false);
  auto shifted = nd::add(x, D({1, 2, 1, 1}, {3.0, -11.0}));
  auto a = adaIN(x, s, net), b = adaIN(shifted, s, net);
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(a.at(i), b.at(i), 1e-5);
}

TEST(AdaIN, HeadWidthMismatchIsConfigError) {
  Rng rng(6);
  AdaINParamNet<double> net(4, 8, 3, rng);
  EXPECT_THROW(adaIN(D::zeros({1, 2, 3, 3}), D::zeros({1, 4}), net), ConfigError);
}

TEST(AdaIN, GradientsMatchFiniteDifferences) {
  Rng rng(7);
  AdaINParamNet<double> net(4, 6, 3, rng);
  randomizeParams(ParamList<double>{{"", net.hidden().weight()}, {"", net.alpha().weight()},
                                    {"", net.beta().weight()}},
                  rng, 0.5);
  auto x = random({2, 3, 3, 3}, rng);
  auto s = random({2, 4}, rng);
  ParamList<double> params;
  net.collect(params, "adain");
  auto inputs = tensorsOf(params);
  inputs.push_back(x);
  inputs.push_back(s);
  const auto err = nd::gradCheck<double>([&] { return adaIN(x, s, net); }, inputs, 1e-6);
  EXPECT_LT(err.maxRelativeError, 1e-4);
}

TEST(Residual, ZeroWeightsGiveIdentity) {
  Rng rng(8);
  ResidualBlock<double> block(3, 3, Normalization::kInstance, rng);
  ParamList<double> params;
  block.collect(params, "res");
  zeroAll(params);
  auto x = random({2, 3, 5, 5}, rng, -1.0, 1.0, false);
  auto y = block(x);
  ASSERT_EQ(y.shape(), x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y.at(i), x.at(i));
}

TEST(Residual, RejectsChannelMismatch) {
  Rng rng(9);
  ResidualBlock<double> block(3, 3, Normalization::kInstance, rng);
  EXPECT_THROW(block(D::zeros({1, 4, 5, 5})), ShapeError);
}

TEST(Residual, GradientsMatchFiniteDifferences) {
  Rng rng(10);
  ResidualBlock<double> block(2, 3, Normalization::kInstance, rng);
  ParamList<double> params;
  block.collect(params, "res");
  randomizeParams(params, rng, 0.5);
  auto x = random({2, 2, 4, 4}, rng);
  auto inputs = tensorsOf(params);
  inputs.push_back(x);
  EXPECT_LT(nd::gradCheck<double>([&] { return block(x); }, inputs, 1e-6).maxRelativeError, 1e-4);
}

TEST(Upsample, DoublesExtentWithRequestedFilters) {
  Rng rng(11);
  UpsampleBlock<double> up(4, 2, rng);
  auto y = up(random({1, 4, 8, 8}, rng, -1.0, 1.0, false));
  EXPECT_EQ(y.shape(), (Shape{1, 2, 16, 16}));
}

TEST(Upsample, CenterTapKernelKeepsConstantInput) {
  Rng rng(12);
  UpsampleBlock<double> up(1, 1, rng);
  auto w = up.block().conv().weight().mutableValues();
  std::fill(w.begin(), w.end(), 0.0);
  w[12] = 1.0;  // center of 5x5
  auto y = up(D::full({1, 1, 4, 4}, 0.75));
  for (double v : y.values()) EXPECT_DOUBLE_EQ(v, 0.75);
}

TEST(Upsample, GradientsMatchFiniteDifferences) {
  Rng rng(13);
  UpsampleBlock<double> up(2, 2, rng);
  ParamList<double> params;
  up.collect(params, "up");
  randomizeParams(params, rng, 0.3);
  auto x = random({1, 2, 3, 3}, rng, 0.1, 1.0);
  auto inputs = tensorsOf(params);
  inputs.push_back(x);
  EXPECT_LT(nd::gradCheck<double>([&] { return up(x); }, inputs, 1e-6).maxRelativeError, 1e-4);
}

TEST(Linear, ParameterCountIncludesBias) {
  Rng rng(14);
  Linear<float> fc(256, 50, rng);
  ParamList<float> params;
  fc.collect(params, "fc");
  EXPECT_EQ(countScalars(params), 12850u);
}

TEST(Conv, ParameterCountIncludesBias) {
  Rng rng(15);
  ConvBlock<float> block(ConvBlockSpec{2, 4, 3, 1, Activation::kRelu, Normalization::kNone}, rng);
  ParamList<float> params;
  block.collect(params, "conv");
  EXPECT_EQ(countScalars(params), 76u);
}

}  // namespace
}  // namespace ada2net::nn
