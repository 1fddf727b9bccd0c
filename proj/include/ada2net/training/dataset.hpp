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

// Deterministic multi-domain toy images. Content (shape kind, position,
// size) depends only on (seed, index), so sample i of every domain shows the
// same shapes. Style depends on the domain: a palette drawn from a hue band
// of width 1/(2D) that no other domain touches, plus an oriented stripe
// texture whose angle and frequency are domain specific.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "ada2net/error.hpp"
#include "ada2net/nd/tensor.hpp"
#include "ada2net/rng.hpp"

namespace ada2net::training {

using nd::Tensor;

enum class ShapeKind { kCircle, kSquare, kTriangle };

// HSV in [0,1]^3 -> RGB in [0,1]^3.
inline std::array<double, 3> hsvToRgb(double h, double s, double v) {
  h = h - std::floor(h);
  const double c = v * s;
  const double hp = h * 6.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  std::array<double, 3> rgb{};
  switch (static_cast<int>(hp) % 6) {
    case 0: rgb = {c, x, 0}; break;
    case 1: rgb = {x, c, 0}; break;
    case 2: rgb = {0, c, x}; break;
    case 3: rgb = {0, x, c}; break;
    case 4: rgb = {x, 0, c}; break;
    default: rgb = {c, 0, x}; break;
  }
  const double m = v - c;
  for (auto& ch : rgb) ch += m;
  return rgb;
}

class SyntheticDataset {
 public:
  SyntheticDataset(std::size_t numDomains, std::size_t size, std::uint64_t seed)
      : numDomains_(numDomains), size_(size), seed_(seed) {
    if (numDomains == 0) throw ConfigError("synthetic dataset: numDomains must be positive");
    if (size < 8) throw ConfigError("synthetic dataset: image size must be at least 8");
  }

  // Hue band [start, start + width) reserved for a domain.
  double hueBandStart(std::size_t domain) const {
    return static_cast<double>(domain) / static_cast<double>(numDomains_);
  }
  double hueBandWidth() const { return 0.5 / static_cast<double>(numDomains_); }

  // [3, size, size] in [-1, 1], row-major planes R, G, B.
  std::vector<float> sample(std::size_t domain, std::uint64_t index) const {
    if (domain >= numDomains_)
      throw ConfigError("synthetic dataset: domain " + std::to_string(domain) +
                        " out of range for " + std::to_string(numDomains_) + " domains");
    Rng content = Rng::derive(seed_, {0xC0, index});
    Rng style = Rng::derive(seed_, {0x57, domain, index});

    const double band = hueBandStart(domain), width = hueBandWidth();
    const double hueFg = band + width * (0.1 + 0.35 * style.uniform());
    const double hueBg = band + width * (0.55 + 0.35 * style.uniform());
    const auto fg = hsvToRgb(hueFg, 0.85, 0.95);
    const auto bg = hsvToRgb(hueBg, 0.6, 0.35);
    const double angle = std::numbers::pi * static_cast<double>(domain) /
                         static_cast<double>(numDomains_);
    const double freq = 2.0 * std::numbers::pi * (2.0 + static_cast<double>(domain % 3)) /
                        static_cast<double>(size_);
    const double phase = 2.0 * std::numbers::pi * style.uniform();

    const std::size_t shapes = 1 + content.below(2);
    struct Shape {
      ShapeKind kind;
      double cx, cy, r;
    };
    std::vector<Shape> items;
    for (std::size_t i = 0; i < shapes; ++i) {
      Shape s;
      s.kind = static_cast<ShapeKind>(content.below(3));
      s.r = static_cast<double>(size_) * (0.12 + 0.14 * content.uniform());
      s.cx = s.r + (static_cast<double>(size_) - 2 * s.r) * content.uniform();
      s.cy = s.r + (static_cast<double>(size_) - 2 * s.r) * content.uniform();
      items.push_back(s);
    }

    const std::size_t plane = size_ * size_;
    std::vector<float> img(3 * plane);
    for (std::size_t y = 0; y < size_; ++y)
      for (std::size_t x = 0; x < size_; ++x) {
        const double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
        bool inside = false;
        for (const auto& s : items) inside = inside || covers(s.kind, s.cx, s.cy, s.r, px, py);
        const double stripe =
            0.5 + 0.5 * std::sin(freq * (px * std::cos(angle) + py * std::sin(angle)) + phase);
        const auto& base = inside ? fg : bg;
        const double shade = inside ? 0.75 + 0.25 * stripe : 0.6 + 0.4 * stripe;
        for (std::size_t ch = 0; ch < 3; ++ch)
          img[ch * plane + y * size_ + x] =
              static_cast<float>(std::clamp(2.0 * base[ch] * shade - 1.0, -1.0, 1.0));
      }
    return img;
  }

  Tensor<float> sampleTensor(std::size_t domain, std::uint64_t index) const {
    return Tensor<float>({1, 3, size_, size_}, sample(domain, index));
  }

  std::size_t numDomains() const { return numDomains_; }
  std::size_t size() const { return size_; }
  std::uint64_t seed() const { return seed_; }

 private:
  static bool covers(ShapeKind kind, double cx, double cy, double r, double px, double py) {
    const double dx = px - cx, dy = py - cy;
    switch (kind) {
      case ShapeKind::kCircle: return dx * dx + dy * dy <= r * r;
      case ShapeKind::kSquare: return std::abs(dx) <= 0.8 * r && std::abs(dy) <= 0.8 * r;
      case ShapeKind::kTriangle: {
        // apex up, base at cy + r/2
        if (dy > 0.5 * r || dy < -r) return false;
        const double halfWidth = (dy + r) / 1.5 * 0.866;
        return std::abs(dx) <= halfWidth;
      }
    }
    return false;
  }

  std::size_t numDomains_;
  std::size_t size_;
  std::uint64_t seed_;
};

// In-memory labelled images of one size, [3,H,W] each.
struct ImageSet {
  std::size_t numDomains = 0;
  std::size_t height = 0, width = 0;
  std::vector<std::vector<float>> images;
  std::vector<std::size_t> domains;

  void add(std::vector<float> image, std::size_t domain) {
    if (image.size() != 3 * height * width)
      throw ShapeError("image set: image of " + std::to_string(image.size()) +
                       " values for a 3x" + std::to_string(height) + "x" + std::to_string(width) +
                       " set");
    if (domain >= numDomains)
      throw ConfigError("image set: domain " + std::to_string(domain) + " out of range");
    images.push_back(std::move(image));
    domains.push_back(domain);
  }

  std::vector<std::size_t> indicesOf(std::size_t domain) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < domains.size(); ++i)
      if (domains[i] == domain) out.push_back(i);
    return out;
  }

  // [n,3,H,W] batch of the given image indices.
  Tensor<float> batch(const std::vector<std::size_t>& which) const {
    std::vector<float> v;
    v.reserve(which.size() * 3 * height * width);
    for (auto i : which) v.insert(v.end(), images.at(i).begin(), images.at(i).end());
    return Tensor<float>({which.size(), 3, height, width}, std::move(v));
  }
};

// `perDomain` images per domain, indices [firstIndex, firstIndex + perDomain).
inline ImageSet synthesize(const SyntheticDataset& ds, std::size_t perDomain,
                           std::uint64_t firstIndex = 0) {
  ImageSet set{ds.numDomains(), ds.size(), ds.size(), {}, {}};
  for (std::size_t d = 0; d < ds.numDomains(); ++d)
    for (std::size_t i = 0; i < perDomain; ++i) set.add(ds.sample(d, firstIndex + i), d);
  return set;
}

}  // namespace ada2net::training
