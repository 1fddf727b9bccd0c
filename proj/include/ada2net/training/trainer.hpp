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

// Alternating discriminator / generator optimization.
//
// Iteration t draws everything random (batch, target domains, Gumbel noise,
// prior style codes) from Rng::derive(seed, {t}), so a run resumed at t
// continues bit-identically.

#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "ada2net/losses.hpp"
#include "ada2net/nd/serialize.hpp"
#include "ada2net/nn/networks.hpp"
#include "ada2net/training/adam.hpp"
#include "ada2net/training/config.hpp"
#include "ada2net/training/dataset.hpp"

namespace ada2net::training {

using Generator = nn::Generator<float>;
using Discriminator = nn::Discriminator<float>;

struct Batch {
  Tensor<float> images;
  std::vector<std::size_t> domains;
  std::vector<std::size_t> targets;  // uniform over domains other than the source
};

inline Batch drawBatch(const ImageSet& data, std::size_t batchSize, Rng& rng) {
  if (data.images.empty()) throw ConfigError("training: empty dataset");
  if (data.numDomains < 2) throw ConfigError("training: needs at least two domains");
  Batch b;
  std::vector<std::size_t> which;
  for (std::size_t i = 0; i < batchSize; ++i) {
    const std::size_t idx = rng.below(data.images.size());
    which.push_back(idx);
    const std::size_t d = data.domains[idx];
    std::size_t t = rng.below(data.numDomains - 1);
    if (t >= d) ++t;
    b.domains.push_back(d);
    b.targets.push_back(t);
  }
  b.images = data.batch(which);
  return b;
}

// Model pair plus optimizer state; owns every trainable parameter.
class Trainer {
 public:
  static constexpr std::uint32_t kCheckpointVersion = 1;

  Trainer(const TrainConfig& config, std::shared_ptr<const ImageSet> data)
      : config_(config), data_(std::move(data)) {
    validate(config_);
    Rng init = Rng::derive(config_.seed, {0x1417});
    generator_ = std::make_unique<Generator>(config_.model, init);
    discriminator_ = std::make_unique<Discriminator>(
        config_.model.discriminatorArch, config_.model.numDomains, config_.model.filterDivisor,
        config_.model.imageSize, init);
    genOpt_ = Adam<float>(generator_->params(), config_.adam);
    disOpt_ = Adam<float>(discriminator_->params(), config_.adam);
    if (data_ && (data_->height != config_.model.imageSize ||
                  data_->width != config_.model.imageSize))
      throw ConfigError("training: dataset images are " + std::to_string(data_->height) + "x" +
                        std::to_string(data_->width) + ", config imageSize is " +
                        std::to_string(config_.model.imageSize));
    if (data_ && data_->numDomains != config_.model.numDomains)
      throw ConfigError("training: dataset has " + std::to_string(data_->numDomains) +
                        " domains, config numDomains is " +
                        std::to_string(config_.model.numDomains));
  }

  // One discriminator update (totalDis) then one generator update
  // (totalGen). Throws NumericError naming the term if a loss is not finite.
  losses::LossReport step() {
    if (!data_) throw ConfigError("training: no dataset attached");
    Rng rng = Rng::derive(config_.seed, {iteration_});
    const Batch batch = drawBatch(*data_, config_.batchSize, rng);
    const double lr = lrSchedule(iteration_, config_.adam.lr, config_.lrDecayEvery);
    const auto& w = config_.weights;
    const auto& use = config_.terms;
    losses::LossReport report;
    lastDecisions_.clear();

    nn::GateControl control;
    control.phase = nn::Phase::kTrain;
    control.temperature = config_.temperature;
    control.rng = &rng;

    auto translated = generator_->generate(batch.images, batch.targets, control);
    appendDecisions(translated.decisions);
    translationDecisions_ = translated.decisions;
    lastTargets_ = batch.targets;
    const Tensor<float> fake = translated.image;

    // Discriminator half-step on detached fakes.
    {
      const auto real = (*discriminator_)(batch.images);
      const auto fakeOut = (*discriminator_)(fake.detach());
      auto advDis = losses::lsganDisLoss(real.adversarial, fakeOut.adversarial);
      report.advDis = advDis.item();
      Tensor<float> total = advDis;
      if (use.classification) {
        auto clsDis = losses::clsDisLoss(real.classLogits, batch.domains);
        report.clsDis = clsDis.item();
        total = nd::add(total, nd::scale(clsDis, static_cast<float>(w.classification)));
      }
      losses::requireFiniteTerm("advDis", report.advDis);
      losses::requireFiniteTerm("clsDis", report.clsDis);
      nd::backward(total);
      applyUpdate(disOpt_, lr, "discriminator");
    }

    // Generator half-step with the discriminator frozen.
    {
      FrozenParams frozen(discriminator_->params());
      const auto fakeOut = (*discriminator_)(fake);
      auto advGen = losses::lsganGenLoss(fakeOut.adversarial);
      report.advGen = advGen.item();
      Tensor<float> total = advGen;
      if (use.classification) {
        auto clsGen = losses::clsGenLoss(fakeOut.classLogits, batch.targets);
        report.clsGen = clsGen.item();
        total = nd::add(total, nd::scale(clsGen, static_cast<float>(w.classification)));
      }
      Tensor<float> content = generator_->encodeContent(batch.images, batch.domains);
      if (use.reconstruction) {
        auto roundTrip = generator_->generate(fake, batch.domains, control);
        appendDecisions(roundTrip.decisions);
        auto recCyc = losses::cycleLoss(batch.images, roundTrip.image);
        const Tensor<float> style = generator_->encodeStyle(batch.images, batch.domains);
        auto same = generator_->decode(content, style, batch.domains, control);
        appendDecisions(same.decisions);
        auto recIn = losses::identityLoss(batch.images, same.image);
        report.recCyc = recCyc.item();
        report.recIn = recIn.item();
        total = nd::add(total,
                        nd::scale(nd::add(recCyc, recIn), static_cast<float>(w.reconstruction)));
      }
      if (use.style || use.content) {
        std::vector<float> prior(config_.batchSize * generator_->styleDim());
        for (auto& v : prior) v = static_cast<float>(rng.normal());
        Tensor<float> sampled({config_.batchSize, generator_->styleDim()}, std::move(prior));
        auto decoded = generator_->decode(content, sampled, batch.domains, control);
        appendDecisions(decoded.decisions);
        if (use.style) {
          auto recS = losses::styleRecLoss(
              generator_->encodeStyle(decoded.image, batch.domains), sampled);
          report.recS = recS.item();
          total = nd::add(total, nd::scale(recS, static_cast<float>(w.style)));
        }
        if (use.content) {
          auto recC = losses::contentRecLoss(
              generator_->encodeContent(decoded.image, batch.domains), content);
          report.recC = recC.item();
          total = nd::add(total, nd::scale(recC, static_cast<float>(w.content)));
        }
      }
      losses::totalLosses(report, w);
      nd::backward(total);
      applyUpdate(genOpt_, lr, "generator");
    }
    ++iteration_;
    return report;
  }

  // --- checkpoints ---------------------------------------------------------
  //
  //   "ADA2" | version u32 | numDomains u32 | K u32
  //   | u32 count, then that many length-prefixed strings:
  //     content arch, style arch, decoder arch, discriminator arch, config
  //   | u32 record count | tensor records
  void save(std::ostream& os) const {
    os.write("ADA2", 4);
    nd::wire::putU32(os, kCheckpointVersion);
    nd::wire::putU32(os, static_cast<std::uint32_t>(config_.model.numDomains));
    nd::wire::putU32(os, static_cast<std::uint32_t>(config_.model.branches));
    const std::vector<std::string> strings{config_.model.contentArch, config_.model.styleArch,
                                           config_.model.decoderArch,
                                           config_.model.discriminatorArch, formatConfig(config_)};
    nd::wire::putU32(os, static_cast<std::uint32_t>(strings.size()));
    for (const auto& s : strings) nd::wire::putString(os, s);

    std::vector<std::pair<std::string, Tensor<float>>> records;
    for (const auto& p : generator_->params()) records.emplace_back(p.name, p.tensor);
    for (const auto& p : discriminator_->params()) records.emplace_back(p.name, p.tensor);
    addMoments(records, "adam.gen", genOpt_);
    addMoments(records, "adam.dis", disOpt_);
    records.emplace_back("meta.iteration", counter(iteration_));
    records.emplace_back("adam.gen.steps", counter(genOpt_.steps()));
    records.emplace_back("adam.dis.steps", counter(disOpt_.steps()));
    nd::wire::putU32(os, static_cast<std::uint32_t>(records.size()));
    for (const auto& [name, t] : records) nd::writeTensor(os, name, t);
    if (!os) throw FormatError("checkpoint: write failed");
  }

  void save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("checkpoint: cannot open '" + path + "' for writing");
    save(os);
  }

  // Rebuilds the trainer recorded in a checkpoint; `data` may be null for
  // inference-only use.
  static Trainer load(std::istream& is, std::shared_ptr<const ImageSet> data = nullptr) {
    char magic[4];
    if (!is.read(magic, 4) || std::string(magic, 4) != "ADA2")
      throw FormatError("checkpoint: bad magic (expected ADA2)");
    const auto version = nd::wire::getU32(is, "checkpoint version");
    if (version != kCheckpointVersion)
      throw FormatError("checkpoint: unsupported version " + std::to_string(version));
    const auto numDomains = nd::wire::getU32(is, "checkpoint numDomains");
    const auto branches = nd::wire::getU32(is, "checkpoint K");
    const auto count = nd::wire::getU32(is, "checkpoint string count");
    if (count != 5) throw FormatError("checkpoint: expected 5 header strings");
    std::vector<std::string> strings;
    for (std::uint32_t i = 0; i < count; ++i)
      strings.push_back(nd::wire::getString(is, "checkpoint header string"));
    TrainConfig config;
    try {
      config = parseConfigString(strings[4]);
    } catch (const ConfigError& e) {
      throw FormatError(std::string("checkpoint: stored config is invalid: ") + e.what());
    }
    if (config.model.numDomains != numDomains || config.model.branches != branches ||
        config.model.contentArch != strings[0] || config.model.styleArch != strings[1] ||
        config.model.decoderArch != strings[2] || config.model.discriminatorArch != strings[3])
      throw FormatError("checkpoint: header disagrees with stored config");

    Trainer t(config, std::move(data));
    std::map<std::string, nd::TensorRecord> records;
    const auto n = nd::wire::getU32(is, "checkpoint record count");
    for (std::uint32_t i = 0; i < n; ++i) {
      auto r = nd::readTensor(is);
      records[r.name] = std::move(r);
    }
    const auto take = [&](const std::string& name) -> const nd::TensorRecord& {
      const auto it = records.find(name);
      if (it == records.end()) throw FormatError("checkpoint: missing tensor '" + name + "'");
      return it->second;
    };
    const auto restore = [&](const nn::ParamList<float>& params) {
      for (const auto& p : params) {
        const auto& r = take(p.name);
        if (r.shape != p.tensor.shape())
          throw FormatError("checkpoint: tensor '" + p.name + "' has shape " +
                            nd::toString(r.shape) + ", model expects " +
                            nd::toString(p.tensor.shape()));
        Tensor<float> dst = p.tensor;
        std::copy(r.values.begin(), r.values.end(), dst.mutableValues().begin());
      }
    };
    restore(t.generator_->params());
    restore(t.discriminator_->params());
    restoreMoments(take, "adam.gen", t.genOpt_);
    restoreMoments(take, "adam.dis", t.disOpt_);
    t.iteration_ = fromCounter(take("meta.iteration"));
    t.genOpt_.setSteps(fromCounter(take("adam.gen.steps")));
    t.disOpt_.setSteps(fromCounter(take("adam.dis.steps")));
    return t;
  }

  static Trainer load(const std::string& path, std::shared_ptr<const ImageSet> data = nullptr) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("checkpoint: cannot open '" + path + "'");
    return load(is, std::move(data));
  }

  const TrainConfig& config() const { return config_; }
  std::uint64_t iteration() const { return iteration_; }
  Generator& generator() { return *generator_; }
  const Generator& generator() const { return *generator_; }
  Discriminator& discriminator() { return *discriminator_; }
  Adam<float>& generatorOptimizer() { return genOpt_; }
  Adam<float>& discriminatorOptimizer() { return disOpt_; }
  // Every gate decision of the last step, all generator passes in order.
  const std::vector<nn::GateDecision>& lastDecisions() const { return lastDecisions_; }
  // Decisions of the last step's x -> G(x, d') pass and its target labels.
  const std::vector<nn::GateDecision>& translationDecisions() const {
    return translationDecisions_;
  }
  const std::vector<std::size_t>& lastTargets() const { return lastTargets_; }
  void attachData(std::shared_ptr<const ImageSet> data) { data_ = std::move(data); }

 private:
  // Turns off requiresGrad on a parameter set for one scope.
  class FrozenParams {
   public:
    explicit FrozenParams(nn::ParamList<float> params) : params_(std::move(params)) {
      for (auto& p : params_) p.tensor.setRequiresGrad(false);
    }
    ~FrozenParams() {
      for (auto& p : params_) p.tensor.setRequiresGrad(true);
    }
    FrozenParams(const FrozenParams&) = delete;
    FrozenParams& operator=(const FrozenParams&) = delete;

   private:
    nn::ParamList<float> params_;
  };

  void applyUpdate(Adam<float>& opt, double lr, const char* which) {
    if (config_.clipNorm > 0.0) opt.clipGradNorm(config_.clipNorm);
    const auto result = opt.step(lr);
    opt.zeroGrad();
    if (!result.applied)
      throw NumericError(std::string("training: non-finite gradient in ") + which +
                         " parameter '" + result.nonFiniteParam + "'");
  }

  void appendDecisions(const std::vector<nn::GateDecision>& d) {
    lastDecisions_.insert(lastDecisions_.end(), d.begin(), d.end());
  }

  // Exact in float: three base-4096 digits.
  static Tensor<float> counter(std::uint64_t v) {
    if (v >= (std::uint64_t{1} << 36)) throw FormatError("checkpoint: counter overflow");
    return Tensor<float>({3}, {static_cast<float>(v & 4095), static_cast<float>((v >> 12) & 4095),
                               static_cast<float>(v >> 24)});
  }

  static std::uint64_t fromCounter(const nd::TensorRecord& r) {
    if (r.values.size() != 3) throw FormatError("checkpoint: malformed counter '" + r.name + "'");
    std::uint64_t v = 0;
    for (int i = 2; i >= 0; --i) {
      const float digit = r.values[static_cast<std::size_t>(i)];
      if (!(digit >= 0.0f && digit < 4096.0f) || digit != std::floor(digit))
        throw FormatError("checkpoint: malformed counter '" + r.name + "'");
      v = (v << 12) | static_cast<std::uint64_t>(digit);
    }
    return v;
  }

  static void addMoments(std::vector<std::pair<std::string, Tensor<float>>>& records,
                         const std::string& prefix, const Adam<float>& opt) {
    for (std::size_t i = 0; i < opt.params().size(); ++i) {
      const auto& p = opt.params()[i];
      records.emplace_back(prefix + ".m." + p.name, Tensor<float>(p.tensor.shape(), opt.firstMoments()[i]));
      records.emplace_back(prefix + ".v." + p.name, Tensor<float>(p.tensor.shape(), opt.secondMoments()[i]));
    }
  }

  template <typename Take>
  static void restoreMoments(Take& take, const std::string& prefix, Adam<float>& opt) {
    for (std::size_t i = 0; i < opt.params().size(); ++i) {
      const auto& p = opt.params()[i];
      const auto& m = take(prefix + ".m." + p.name);
      const auto& v = take(prefix + ".v." + p.name);
      if (m.values.size() != p.tensor.numel() || v.values.size() != p.tensor.numel())
        throw FormatError("checkpoint: optimizer state for '" + p.name + "' has the wrong size");
      opt.firstMoments()[i] = m.values;
      opt.secondMoments()[i] = v.values;
    }
  }

  TrainConfig config_;
  std::shared_ptr<const ImageSet> data_;
  std::unique_ptr<Generator> generator_;
  std::unique_ptr<Discriminator> discriminator_;
  Adam<float> genOpt_, disOpt_;
  std::uint64_t iteration_ = 0;
  std::vector<nn::GateDecision> lastDecisions_, translationDecisions_;
  std::vector<std::size_t> lastTargets_;
};

// Translates a batch with eval-phase (argmax) gating, without recording.
inline nn::Decoded<float> translate(const Generator& g, const Tensor<float>& images,
                                    const std::vector<std::size_t>& targets) {
  nd::NoGradGuard noGrad;
  nn::GateControl control;
  control.phase = nn::Phase::kEval;
  return g.generate(images, targets, control);
}

}  // namespace ada2net::training
