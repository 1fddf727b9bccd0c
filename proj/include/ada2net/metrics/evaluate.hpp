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


// Translation-quality evaluation: per-target-domain FID between translated
// images and the real images of that domain.

#include <cmath>
#include <iomanip>
#include <optional>
#include <ostream>
#include <vector>

#include "ada2net/metrics/features.hpp"
#include "ada2net/training/trainer.hpp"

namespace ada2net::metrics {

// Eval-phase G(x, target) over a list of [3,H,W] images, in chunks.
inline std::vector<std::vector<float>> translateImages(const nn::Generator<float>& g,
                                                       const std::vector<std::vector<float>>& images,
                                                       std::size_t height, std::size_t width,
                                                       std::size_t target,
                                                       std::size_t chunk = 32) {
  std::vector<std::vector<float>> out;
  out.reserve(images.size());
  const std::size_t plane = 3 * height * width;
  for (std::size_t first = 0; first < images.size(); first += chunk) {
    const std::size_t n = std::min(chunk, images.size() - first);
    std::vector<float> v;
    v.reserve(n * plane);
    for (std::size_t i = first; i < first + n; ++i)
      v.insert(v.end(), images[i].begin(), images[i].end());
    const auto y = training::translate(g, nd::Tensor<float>({n, 3, height, width}, std::move(v)),
                                       std::vector<std::size_t>(n, target));
    const auto values = y.image.values();
    for (std::size_t i = 0; i < n; ++i)
      out.emplace_back(values.begin() + static_cast<std::ptrdiff_t>(i * plane),
                       values.begin() + static_cast<std::ptrdiff_t>((i + 1) * plane));
  }
  return out;
}

inline std::vector<std::vector<float>> imagesOf(const training::ImageSet& set,
                                                std::size_t domain, bool complement = false) {
  std::vector<std::vector<float>> out;
  for (std::size_t i = 0; i < set.images.size(); ++i)
    if ((set.domains[i] == domain) != complement) out.push_back(set.images[i]);
  return out;
}

// FID(G(x, t) for x outside domain t, real images of t). With no generator
// the real images of t stand in for the translated set (passthrough).
inline double targetDomainFid(const nn::Generator<float>* g, const training::ImageSet& set,
                              std::size_t target, const FeatureExtractor& fx) {
  const auto real = imagesOf(set, target);
  if (real.size() < 2)
    throw NumericError("eval: domain " + std::to_string(target) + " has fewer than 2 images");
  if (!g) return fidBetweenImageSets(real, real, set.height, set.width, fx);
  const auto sources = imagesOf(set, target, true);
  if (sources.size() < 2)
    throw NumericError("eval: fewer than 2 source images outside domain " +
                       std::to_string(target));
  return fidBetweenImageSets(translateImages(*g, sources, set.height, set.width, target), real,
                             set.height, set.width, fx);
}

struct FidReport {
  std::vector<std::pair<std::size_t, double>> perDomain;
  double average = 0.0;
  double stddev = 0.0;  // population spread over the listed domains
};

inline FidReport fidReport(const nn::Generator<float>* g, const training::ImageSet& set,
                           const std::vector<std::size_t>& targets, const FeatureExtractor& fx) {
  FidReport r;
  for (auto t : targets) r.perDomain.emplace_back(t, targetDomainFid(g, set, t, fx));
  for (const auto& [t, f] : r.perDomain) r.average += f;
  r.average /= static_cast<double>(r.perDomain.size());
  for (const auto& [t, f] : r.perDomain) r.stddev += (f - r.average) * (f - r.average);
  r.stddev = std::sqrt(r.stddev / static_cast<double>(r.perDomain.size()));
  return r;
}

// domainIndex,fid,std; one row per domain then "average" with the spread.
inline void writeFidCsv(std::ostream& os, const FidReport& r) {
  const auto precision = os.precision();
  os << std::setprecision(17) << "domainIndex,fid,std\n";
  for (const auto& [t, f] : r.perDomain) os << t << ',' << f << ",\n";
  os << "average," << r.average << ',' << r.stddev << '\n';
  os.precision(precision);
}

}  // namespace ada2net::metrics
