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


// Independent domain classifier used to score translations: a small convnet
// trained on real labelled images only, never on generator output.

#include <vector>

#include "ada2net/losses.hpp"
#include "ada2net/training/adam.hpp"
#include "ada2net/training/dataset.hpp"

namespace ada2net::metrics {

class DomainClassifier {
 public:
  static constexpr const char* kArch = "C3S2-16, C3S2-32, C3S2-32, GAP";

  DomainClassifier(std::size_t numDomains, std::uint64_t seed) : numDomains_(numDomains) {
    Rng rng = Rng::derive(seed, {0xC1A5});
    nn::LayerStack<float>::Style style;
    style.activation = nn::Activation::kLeakyRelu;
    features_ = nn::LayerStack<float>(nn::parseArchString(kArch), 3, style, rng);
    head_ = nn::Linear<float>(features_.outChannels(), numDomains, rng, 0.1);
    nn::ParamList<float> params;
    features_.collect(params, "cls.features");
    // Unit-gain init; the 0.02 GAN init trains slowly without normalization.
    for (auto& p : params) {
      auto t = p.tensor;
      if (t.rank() != 4) continue;
      const double std = std::sqrt(2.0 / static_cast<double>(t.dim(1) * t.dim(2) * t.dim(3)));
      for (auto& v : t.mutableValues()) v = static_cast<float>(std * rng.normal());
    }
    head_.collect(params, "cls.head");
    params_ = params;
  }

  nd::Tensor<float> logits(const nd::Tensor<float>& images) const {
    return head_(features_(images));
  }

  // Adam on cross-entropy over random minibatches of `set`.
  void fit(const training::ImageSet& set, std::size_t iterations, std::size_t batchSize,
           std::uint64_t seed) {
    training::Adam<float> opt(params_, {1e-3, 0.9, 0.999, 1e-8});
    for (std::size_t it = 0; it < iterations; ++it) {
      Rng rng = Rng::derive(seed, {0xF17, it});
      std::vector<std::size_t> which, labels;
      for (std::size_t i = 0; i < batchSize; ++i) {
        which.push_back(rng.below(set.images.size()));
        labels.push_back(set.domains[which.back()]);
      }
      nd::backward(losses::crossEntropy(logits(set.batch(which)), labels));
      opt.step(1e-3);
      opt.zeroGrad();
    }
  }

  std::vector<std::size_t> predict(const std::vector<std::vector<float>>& images,
                                   std::size_t height, std::size_t width) const {
    nd::NoGradGuard noGrad;
    std::vector<std::size_t> out;
    constexpr std::size_t kChunk = 64;
    for (std::size_t first = 0; first < images.size(); first += kChunk) {
      const std::size_t n = std::min(kChunk, images.size() - first);
      std::vector<float> v;
      for (std::size_t i = first; i < first + n; ++i)
        v.insert(v.end(), images[i].begin(), images[i].end());
      const auto z = logits(nd::Tensor<float>({n, 3, height, width}, std::move(v)));
      for (std::size_t i = 0; i < n; ++i) {
        std::size_t best = 0;
        for (std::size_t d = 1; d < numDomains_; ++d)
          if (z.at(i * numDomains_ + d) > z.at(i * numDomains_ + best)) best = d;
        out.push_back(best);
      }
    }
    return out;
  }

  // Fraction of images predicted as `domain`.
  double agreement(const std::vector<std::vector<float>>& images, std::size_t height,
                   std::size_t width, std::size_t domain) const {
    const auto p = predict(images, height, width);
    double hits = 0;
    for (auto d : p) hits += d == domain ? 1.0 : 0.0;
    return p.empty() ? 0.0 : hits / static_cast<double>(p.size());
  }

 private:
  std::size_t numDomains_;
  nn::LayerStack<float> features_;
  nn::Linear<float> head_;
  nn::ParamList<float> params_;
};

}  // namespace ada2net::metrics
