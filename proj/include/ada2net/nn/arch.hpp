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

// Architecture strings. Tokens are separated by commas and/or whitespace:
//
//   CkSs-f          k x k convolution block, stride s, f filters
//   RkSs-f          residual block of two k x k convolution blocks
//   AbRkS1-f        adaptive residual block with b branches
//   U-f             nearest 2x upsampling + 5x5 stride-1 convolution
//   GAP             global average pooling
//   FC-f            fully connected, f units
//   C1S1-a+c(n:scale)sT-m
//                   discriminator heads: a 1x1 adversarial head with `a`
//                   channels and a classifier conv of kernel n >> (scale-1),
//                   stride T, m outputs (`D` = number of domains)
//
// "RkSs-Rf" is accepted and normalized to "RkSs-f".

#include <algorithm>
#include <cctype>
#include <string>
#include <string_view>
#include <vector>

#include "ada2net/error.hpp"

namespace ada2net::nn {

enum class LayerKind { kConv, kResidual, kAdaptive, kUpsample, kGap, kFullyConnected, kDiscHead };

struct LayerDesc {
  LayerKind kind = LayerKind::kConv;
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t filters = 0;   // 0 in a disc head's class width means "D"
  std::size_t branches = 1;  // adaptive only
  // disc head only
  std::size_t advFilters = 1;
  std::size_t classKernel = 0;
  std::size_t classStride = 1;

  bool operator==(const LayerDesc&) const = default;
};

struct ArchSpec {
  std::vector<LayerDesc> layers;
  bool operator==(const ArchSpec&) const = default;
};

namespace detail {

class ArchLexer {
 public:
  explicit ArchLexer(std::string_view text) : text_(text) {}

  ArchSpec parse() {
    ArchSpec spec;
    skipSeparators();
    while (pos_ < text_.size()) {
      spec.layers.push_back(token());
      const bool separated = skipSeparators();
      if (pos_ < text_.size() && !separated) fail("expected ',' or whitespace between tokens");
    }
    if (spec.layers.empty()) throw ParseError("architecture string is empty", 0);
    return spec;
  }

 private:
  LayerDesc token() {
    tokenStart_ = pos_;
    if (accept("GAP")) return LayerDesc{LayerKind::kGap};
    if (accept("FC-")) {
      LayerDesc d{LayerKind::kFullyConnected};
      d.filters = number();
      return d;
    }
    if (accept("U-")) {
      LayerDesc d{LayerKind::kUpsample};
      d.kernel = 5;
      d.filters = number();
      return d;
    }
    if (accept("A")) {
      LayerDesc d{LayerKind::kAdaptive};
      d.branches = number();
      expect('R');
      kernelStride(d);
      if (d.stride != 1) fail("adaptive residual blocks have stride 1");
      expect('-');
      d.filters = number();
      return d;
    }
    if (accept("R")) {
      LayerDesc d{LayerKind::kResidual};
      kernelStride(d);
      expect('-');
      accept("R");
      d.filters = number();
      return d;
    }
    if (accept("C")) {
      LayerDesc d{LayerKind::kConv};
      kernelStride(d);
      expect('-');
      d.filters = number();
      if (!accept("+")) return d;
      if (d.kernel != 1 || d.stride != 1) fail("discriminator heads start with C1S1");
      LayerDesc h{LayerKind::kDiscHead};
      h.advFilters = d.filters;
      expect('c');
      expect('(');
      h.classKernel = number();
      if (!accept(":scale)")) fail("expected ':scale)'");
      expect('s');
      h.classStride = number();
      expect('-');
      h.filters = accept("D") ? 0 : number();
      return h;
    }
    fail("unknown layer token");
    return {};
  }

  void kernelStride(LayerDesc& d) {
    d.kernel = number();
    expect('S');
    d.stride = number();
    if (d.kernel % 2 == 0 && d.kind != LayerKind::kConv) fail("residual kernels must be odd");
  }

  std::size_t number() {
    const std::size_t start = pos_;
    std::size_t v = 0;
    while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
      v = v * 10 + static_cast<std::size_t>(text_[pos_] - '0');
      if (v > (1u << 24)) fail("number too large");
      ++pos_;
    }
    if (pos_ == start) fail("expected a number");
    if (v == 0) fail("expected a positive number");
    return v;
  }

  bool accept(std::string_view lit) {
    if (text_.substr(pos_, lit.size()) != lit) return false;
    pos_ += lit.size();
    return true;
  }

  void expect(char c) {
    if (pos_ >= text_.size() || text_[pos_] != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  bool skipSeparators() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (text_[pos_] == ',' || std::isspace(static_cast<unsigned char>(text_[pos_]))))
      ++pos_;
    return pos_ != start;
  }

  [[noreturn]] void fail(const std::string& why) const {
    const std::size_t end = text_.find_first_of(", \t\n", tokenStart_);
    throw ParseError(why + " in token '" +
                         std::string(text_.substr(tokenStart_, end - tokenStart_)) + "'",
                     pos_);
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t tokenStart_ = 0;
};

}  // namespace detail

inline ArchSpec parseArchString(std::string_view text) {
  return detail::ArchLexer(text).parse();
}

inline std::string render(const LayerDesc& d) {
  const auto n = [](std::size_t v) { return std::to_string(v); };
  switch (d.kind) {
    case LayerKind::kConv: return "C" + n(d.kernel) + "S" + n(d.stride) + "-" + n(d.filters);
    case LayerKind::kResidual: return "R" + n(d.kernel) + "S" + n(d.stride) + "-" + n(d.filters);
    case LayerKind::kAdaptive:
      return "A" + n(d.branches) + "R" + n(d.kernel) + "S1-" + n(d.filters);
    case LayerKind::kUpsample: return "U-" + n(d.filters);
    case LayerKind::kGap: return "GAP";
    case LayerKind::kFullyConnected: return "FC-" + n(d.filters);
    case LayerKind::kDiscHead:
      return "C1S1-" + n(d.advFilters) + "+c(" + n(d.classKernel) + ":scale)s" +
             n(d.classStride) + "-" + (d.filters ? n(d.filters) : std::string("D"));
  }
  return "?";
}

// Canonical form: tokens joined by ", ".
inline std::string render(const ArchSpec& spec) {
  std::string out;
  for (const auto& d : spec.layers) {
    if (!out.empty()) out += ", ";
    out += render(d);
  }
  return out;
}

// Convolution widths divided by `divisor` (at least 1 filter). The final
// image convolution and FC layers keep their width; so do disc heads.
inline ArchSpec scaleFilters(ArchSpec spec, std::size_t divisor, bool keepLastConv) {
  if (divisor == 0) throw ConfigError("filter divisor must be positive");
  std::size_t lastConv = spec.layers.size();
  for (std::size_t i = 0; i < spec.layers.size(); ++i)
    if (spec.layers[i].kind == LayerKind::kConv) lastConv = i;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    auto& d = spec.layers[i];
    if (d.kind == LayerKind::kGap || d.kind == LayerKind::kFullyConnected ||
        d.kind == LayerKind::kDiscHead)
      continue;
    if (keepLastConv && i == lastConv) continue;
    d.filters = std::max<std::size_t>(1, d.filters / divisor);
  }
  return spec;
}

}  // namespace ada2net::nn
