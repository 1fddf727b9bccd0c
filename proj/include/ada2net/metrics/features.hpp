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


// Image -> feature-vector maps for FID at desk scale. Both are fixed
// functions of the image (the convnet's weights are drawn once from a seed
// and never trained).

#include <cmath>
#include <string>
#include <vector>

#include "ada2net/metrics/fid.hpp"
#include "ada2net/nn/networks.hpp"
#include "ada2net/training/dataset.hpp"

namespace ada2net::metrics {

enum class FeatureKind { kRawPixels, kRandomConvNet };

inline FeatureKind parseFeatureKind(const std::string& s) {
  if (s == "rawPixels") return FeatureKind::kRawPixels;
  if (s == "randomConvNet") return FeatureKind::kRandomConvNet;
  throw ConfigError("unknown feature extractor '" + s + "' (rawPixels|randomConvNet)");
}

inline std::string toString(FeatureKind k) {
  return k == FeatureKind::kRawPixels ? "rawPixels" : "randomConvNet";
}

class FeatureExtractor {
 public:
  static constexpr std::size_t kGrid = 8;
  static constexpr const char* kConvNetArch = "C3S1-16, C3S2-32, C3S2-64, C3S2-64, GAP";
  static constexpr std::uint64_t kDefaultSeed = 20260;

  explicit FeatureExtractor(FeatureKind kind = FeatureKind::kRandomConvNet,
                            std::uint64_t seed = kDefaultSeed)
      : kind_(kind) {
    if (kind_ == FeatureKind::kRandomConvNet) {
      Rng rng = Rng::derive(seed, {0xFEA7});
      nn::LayerStack<float>::Style style;
      style.convNorm = nn::Normalization::kNone;
      style.activation = nn::Activation::kLeakyRelu;
      style.reflectFirst = true;
      net_ = nn::LayerStack<float>(nn::parseArchString(kConvNetArch), 3, style, rng);
      heInit(rng);
    }
  }

  FeatureKind kind() const { return kind_; }

  std::size_t dim() const {
    return kind_ == FeatureKind::kRawPixels ? 3 * kGrid * kGrid : net_.outChannels();
  }

  // One row per image; images are [3,H,W] planes in [-1,1].
  Matrix extract(const std::vector<std::vector<float>>& images, std::size_t height,
                 std::size_t width) const {
    Matrix out(static_cast<Eigen::Index>(images.size()), static_cast<Eigen::Index>(dim()));
    if (kind_ == FeatureKind::kRawPixels) {
      for (std::size_t i = 0; i < images.size(); ++i)
        out.row(static_cast<Eigen::Index>(i)) = areaAverage(images[i], height, width);
      return out;
    }
    nd::NoGradGuard noGrad;
    constexpr std::size_t kChunk = 64;
    for (std::size_t first = 0; first < images.size(); first += kChunk) {
      const std::size_t n = std::min(kChunk, images.size() - first);
      std::vector<float> v;
      v.reserve(n * 3 * height * width);
      for (std::size_t i = first; i < first + n; ++i) {
        requireSize(images[i], height, width);
        v.insert(v.end(), images[i].begin(), images[i].end());
      }
      const auto f = net_(nd::Tensor<float>({n, 3, height, width}, std::move(v)));
      const auto values = f.values();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < dim(); ++j)
          out(static_cast<Eigen::Index>(first + i), static_cast<Eigen::Index>(j)) =
              static_cast<double>(values[i * dim() + j]);
    }
    return out;
  }

  Matrix extract(const training::ImageSet& set) const {
    return extract(set.images, set.height, set.width);
  }

 private:
  static void requireSize(const std::vector<float>& image, std::size_t h, std::size_t w) {
    if (image.size() != 3 * h * w)
      throw ShapeError("feature extractor: image of " + std::to_string(image.size()) +
                       " values for 3x" + std::to_string(h) + "x" + std::to_string(w));
  }

  // Each pixel falls into grid cell (y*8/H, x*8/W); cells are averaged.
  static Eigen::RowVectorXd areaAverage(const std::vector<float>& image, std::size_t h,
                                        std::size_t w) {
    requireSize(image, h, w);
    if (h < kGrid || w < kGrid) throw ShapeError("rawPixels: image smaller than 8x8");
    Eigen::RowVectorXd sums = Eigen::RowVectorXd::Zero(3 * kGrid * kGrid);
    Eigen::RowVectorXd counts = Eigen::RowVectorXd::Zero(3 * kGrid * kGrid);
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          const auto cell = static_cast<Eigen::Index>((c * kGrid + y * kGrid / h) * kGrid +
                                                      x * kGrid / w);
          sums(cell) += image[(c * h + y) * w + x];
          counts(cell) += 1.0;
        }
    return sums.cwiseQuotient(counts);
  }

  // Unit-gain weights so activations neither vanish nor explode.
  void heInit(Rng& rng) {
    nn::ParamList<float> params;
    net_.collect(params, "features");
    for (auto& p : params) {
      auto t = p.tensor;
      t.setRequiresGrad(false);
      auto values = t.mutableValues();
      if (t.rank() == 4) {
        const double fanIn = static_cast<double>(t.dim(1) * t.dim(2) * t.dim(3));
        const double std = std::sqrt(2.0 / fanIn);
        for (auto& v : values) v = static_cast<float>(std * rng.normal());
      } else {
        for (auto& v : values) v = 0.0f;
      }
    }
  }

  FeatureKind kind_;
  nn::LayerStack<float> net_;
};

inline double fidBetweenImageSets(const std::vector<std::vector<float>>& real,
                                  const std::vector<std::vector<float>>& generated,
                                  std::size_t height, std::size_t width,
                                  const FeatureExtractor& fx) {
  if (real.size() < 2 || generated.size() < 2)
    throw NumericError("fidBetweenImageSets: need at least 2 images per side, got " +
                       std::to_string(real.size()) + " and " + std::to_string(generated.size()));
  return fid(fitStats(fx.extract(real, height, width)),
             fitStats(fx.extract(generated, height, width)));
}

}  // namespace ada2net::metrics
