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
#include <complex>
#include <limits>
#include <sstream>

#include "ada2net/training/trainer.hpp"

namespace ada2net::training {
namespace {

using D = Tensor<double>;

TrainConfig tinyConfig(std::uint64_t seed = 3) {
  TrainConfig c;
  c.seed = seed;
  c.batchSize = 4;
  c.iterations = 6;
  c.model.imageSize = 16;
  c.model.filterDivisor = 8;
  c.model.discriminatorArch = "C4S2-64, C4S2-128, C1S1-1+c(4:scale)s1-D";
  return c;
}

std::shared_ptr<const ImageSet> tinyData(std::size_t size = 16) {
  return std::make_shared<ImageSet>(synthesize(SyntheticDataset(2, size, 17), 8));
}

std::vector<float> snapshot(const nn::ParamList<float>& params) {
  std::vector<float> out;
  for (const auto& p : params) out.insert(out.end(), p.tensor.values().begin(), p.tensor.values().end());
  return out;
}

std::string saved(const Trainer& t) {
  std::ostringstream os;
  t.save(os);
  return os.str();
}

double hueOf(const std::vector<float>& img, std::size_t plane) {
  double r = 0, g = 0, b = 0;
  for (std::size_t i = 0; i < plane; ++i) {
    r += img[i];
    g += img[plane + i];
    b += img[2 * plane + i];
  }
  return std::atan2(std::sqrt(3.0) * (g - b), 2 * r - g - b);
}

TEST(Adam, ConvergesOnSquare) {
  D x({1}, {1.0}, true);
  Adam<double> opt({{"x", x}}, {0.1, 0.5, 0.999, 1e-8});
  for (int i = 0; i < 200; ++i) {
    nd::backward(nd::sumAll(nd::mul(x, x)));
    ASSERT_TRUE(opt.step(0.1).applied);
    opt.zeroGrad();
  }
  EXPECT_LT(std::abs(x.at(0)), 1e-3);
}

TEST(Adam, FirstStepMovesByLearningRateAgainstGradient) {
  D x({3}, {1.0, -2.0, 0.5}, true);
  Adam<double> opt({{"x", x}}, AdamOptions{});
  nd::backward(nd::sumAll(nd::mul(x, D({3}, {3.0, -0.25, 1e-3}))));
  opt.step(1e-4);
  const std::vector<double> g{3.0, -0.25, 1e-3}, x0{1.0, -2.0, 0.5};
  for (std::size_t i = 0; i < 3; ++i)
    EXPECT_NEAR(x.at(i), x0[i] - 1e-4 * g[i] / (std::abs(g[i]) + 1e-8), 1e-15);
}

TEST(Adam, ZeroGradientLeavesParametersButDecaysMoments) {
  D x({2}, {1.0, 2.0}, true);
  Adam<double> opt({{"x", x}}, AdamOptions{});
  nd::backward(nd::sumAll(x));
  opt.step(0.1);
  opt.zeroGrad();
  const double m = opt.firstMoments()[0][0];
  const double before = x.at(0);
  opt.step(0.0);
  EXPECT_EQ(x.at(0), before);
  EXPECT_DOUBLE_EQ(opt.firstMoments()[0][0], 0.5 * m);
}

TEST(Adam, NonFiniteGradientSkipsAndNamesParameter) {
  D x({1}, {1.0}, true);
  Adam<double> opt({{"weights", x}}, AdamOptions{});
  x.mutableGrad()[0] = std::numeric_limits<double>::infinity();
  const auto r = opt.step(0.1);
  EXPECT_FALSE(r.applied);
  EXPECT_EQ(r.nonFiniteParam, "weights");
  EXPECT_EQ(opt.steps(), 0u);
  EXPECT_EQ(x.at(0), 1.0);
}

TEST(LearningRate, HalvesEveryInterval) {
  EXPECT_DOUBLE_EQ(lrSchedule(0, 1e-4, 1000), 1e-4);
  EXPECT_DOUBLE_EQ(lrSchedule(1000, 1e-4, 1000), 5e-5);
  EXPECT_DOUBLE_EQ(lrSchedule(2000, 1e-4, 1000), 2.5e-5);
  double previous = 1.0;
  for (std::uint64_t s = 0; s < 5000; s += 37) {
    EXPECT_LE(lrSchedule(s, 1e-4, 1000), previous);
    previous = lrSchedule(s, 1e-4, 1000);
  }
}

TEST(SyntheticData, SameArgumentsGiveIdenticalBits) {
  SyntheticDataset ds(3, 32, 5);
  EXPECT_EQ(ds.sample(1, 42), ds.sample(1, 42));
  EXPECT_NE(ds.sample(1, 42), ds.sample(1, 43));
  EXPECT_NE(ds.sample(1, 42), SyntheticDataset(3, 32, 6).sample(1, 42));
}

TEST(SyntheticData, PixelsStayInRange) {
  SyntheticDataset ds(4, 24, 1);
  for (std::size_t d = 0; d < 4; ++d)
    for (std::uint64_t i = 0; i < 10; ++i)
      for (float v : ds.sample(d, i)) {
        EXPECT_GE(v, -1.0f);
        EXPECT_LE(v, 1.0f);
      }
}

TEST(SyntheticData, DomainsHaveDistinctMeanHue) {
  SyntheticDataset ds(2, 32, 9);
  // circular mean of per-image hue angles
  std::complex<double> mean[2];
  for (std::size_t d = 0; d < 2; ++d)
    for (std::uint64_t i = 0; i < 100; ++i) mean[d] += std::polar(1.0, hueOf(ds.sample(d, i), 32 * 32));
  EXPECT_GT(std::abs(std::arg(mean[0] / mean[1])), 0.5);
}

TEST(SyntheticData, RejectsUnknownDomain) {
  EXPECT_THROW(SyntheticDataset(2, 16, 1).sample(2, 0), ConfigError);
}

TEST(Config, ParsesKeyValueLines) {
  const auto c = parseConfigString(
      "# desk run\n"
      "iterations = 50\n"
      "gateMode=labelBased  # ablation\n"
      "\n"
      "lambdaX=5\n"
      "useStyleLoss=false\n");
  EXPECT_EQ(c.iterations, 50u);
  EXPECT_EQ(c.model.gateMode, nn::GateMode::kLabelBased);
  EXPECT_EQ(c.weights.reconstruction, 5.0);
  EXPECT_FALSE(c.terms.style);
  EXPECT_EQ(c.batchSize, 16u);
}

TEST(Config, UnknownKeyIsNamed) {
  try {
    parseConfigString("iterations=5\nbatchSzie=3\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("batchSzie"), std::string::npos);
  }
}

TEST(Config, BadValueIsNamed) {
  try {
    parseConfigString("lr=fast\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("'lr'"), std::string::npos);
  }
  EXPECT_THROW(parseConfigString("batchSize=0\n"), ConfigError);
  EXPECT_THROW(parseConfigString("gateMode=disabled\n"), ConfigError);
  EXPECT_NO_THROW(parseConfigString("gateMode=disabled\nK=1\n"));
}

TEST(Config, FormatRoundTrips) {
  auto c = tinyConfig();
  c.adam.lr = 3.5e-4;
  c.model.gateSource = nn::GateSource::kContentCode;
  const auto text = formatConfig(c);
  EXPECT_EQ(formatConfig(parseConfigString(text)), text);
}

TEST(Trainer, ZeroLearningRateLeavesParameters) {
  auto c = tinyConfig();
  c.adam.lr = 0.0;
  Trainer t(c, tinyData());
  const auto g0 = snapshot(t.generator().params());
  const auto d0 = snapshot(t.discriminator().params());
  t.step();
  t.step();
  EXPECT_EQ(snapshot(t.generator().params()), g0);
  EXPECT_EQ(snapshot(t.discriminator().params()), d0);
}

TEST(Trainer, SameSeedGivesIdenticalLossSequence) {
  const auto data = tinyData();
  Trainer a(tinyConfig(), data), b(tinyConfig(), data);
  for (int i = 0; i < 4; ++i) {
    std::ostringstream ra, rb;
    losses::writeLossRow(ra, i, a.step());
    losses::writeLossRow(rb, i, b.step());
    EXPECT_EQ(ra.str(), rb.str());
  }
  EXPECT_EQ(saved(a), saved(b));
}

TEST(Trainer, RejectsMismatchedDataset) {
  EXPECT_THROW(Trainer(tinyConfig(), tinyData(32)), ConfigError);
}

TEST(Trainer, OneBranchPerSampleDuringTraining) {
  Trainer t(tinyConfig(), tinyData());
  auto& g = t.generator();
  for (std::size_t b = 0; b < g.blockCount(); ++b) {
    g.block(b).resetCounters();
    for (std::size_t k = 0; k < g.block(b).branchCount(); ++k) g.block(b).branch(k).resetCounter();
  }
  std::size_t decisions = 0;
  for (int i = 0; i < 3; ++i) {
    t.step();
    decisions += t.lastDecisions().size();
  }
  std::size_t routed = 0;
  for (std::size_t b = 0; b < g.blockCount(); ++b) {
    std::size_t forwarded = 0;
    for (std::size_t k = 0; k < g.block(b).branchCount(); ++k)
      forwarded += g.block(b).branch(k).samplesForwarded();
    EXPECT_EQ(forwarded, g.block(b).samplesRouted());
    routed += g.block(b).samplesRouted();
  }
  EXPECT_EQ(routed, decisions);
}

TEST(Trainer, DiscriminatorLossLeavesGeneratorWithoutGradient) {
  auto c = tinyConfig();
  Rng rng(4);
  Generator g(c.model, rng);
  Discriminator d(c.model.discriminatorArch, 2, c.model.filterDivisor, 16, rng);
  const auto data = tinyData();
  auto batch = drawBatch(*data, 4, rng);
  nn::GateControl control;
  control.phase = nn::Phase::kTrain;
  control.rng = &rng;
  auto fake = g.generate(batch.images, batch.targets, control).image;
  auto real = d(batch.images), fakeOut = d(fake.detach());
  nd::backward(nd::add(losses::lsganDisLoss(real.adversarial, fakeOut.adversarial),
                       losses::clsDisLoss(real.classLogits, batch.domains)));
  for (const auto& p : g.params()) EXPECT_FALSE(p.tensor.hasGrad()) << p.name;

  // Frozen classifier: the generator-side classification term reaches the
  // generator, including its gates, but not the discriminator.
  for (const auto& p : d.params()) {
    Tensor<float> t = p.tensor;
    t.zeroGrad();
    t.setRequiresGrad(false);
  }
  nd::backward(losses::clsGenLoss(d(fake).classLogits, batch.targets));
  for (const auto& p : d.params()) {
    for (float v : p.tensor.grad()) ASSERT_EQ(v, 0.0f) << p.name;
  }
  bool gateGradient = false;
  for (const auto& p : g.params())
    if (p.name.find(".gate.") != std::string::npos && p.tensor.hasGrad())
      for (float v : p.tensor.grad()) gateGradient = gateGradient || v != 0.0f;
  EXPECT_TRUE(gateGradient);
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  const auto data = tinyData();
  Trainer t(tinyConfig(), data);
  t.step();
  t.step();
  const auto bytes = saved(t);
  std::istringstream in(bytes);
  const auto loaded = Trainer::load(in, data);
  EXPECT_EQ(loaded.iteration(), 2u);
  EXPECT_EQ(saved(loaded), bytes);
}

TEST(Checkpoint, ResumedRunContinuesIdentically) {
  const auto data = tinyData();
  Trainer reference(tinyConfig(), data), first(tinyConfig(), data);
  for (int i = 0; i < 3; ++i) {
    reference.step();
    first.step();
  }
  std::istringstream in(saved(first));
  auto resumed = Trainer::load(in, data);
  for (int i = 3; i < 6; ++i) {
    std::ostringstream a, b;
    losses::writeLossRow(a, i, reference.step());
    losses::writeLossRow(b, i, resumed.step());
    EXPECT_EQ(a.str(), b.str());
  }
}

TEST(Checkpoint, TruncatedFileIsFormatError) {
  Trainer t(tinyConfig(), tinyData());
  const auto bytes = saved(t);
  for (std::size_t cut : {std::size_t{2}, std::size_t{10}, bytes.size() / 2, bytes.size() - 1}) {
    std::istringstream in(bytes.substr(0, cut));
    EXPECT_THROW(Trainer::load(in), FormatError) << "cut at " << cut;
  }
}

TEST(Checkpoint, WrongMagicOrVersionIsFormatError) {
  Trainer t(tinyConfig(), tinyData());
  auto bytes = saved(t);
  auto badMagic = bytes;
  badMagic[0] = 'X';
  std::istringstream a(badMagic);
  EXPECT_THROW(Trainer::load(a), FormatError);
  auto badVersion = bytes;
  badVersion[4] = 99;
  std::istringstream b(badVersion);
  EXPECT_THROW(Trainer::load(b), FormatError);
}

}  // namespace
}  // namespace ada2net::training
