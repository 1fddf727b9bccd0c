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

// Generator G(x, d) = decode(E^c(x, d), E^s(x, d), d) and the multi-scale
// patch discriminator with an auxiliary domain classifier.

#include <string>
#include <variant>
#include <vector>

#include "ada2net/nn/arch.hpp"
#include "ada2net/nn/gating.hpp"
#include "ada2net/nn/layers.hpp"

namespace ada2net::nn {

inline constexpr const char* kContentEncoderArch =
    "C7S1-64, C4S2-128, C4S2-256, R3S1-256, R3S1-256, R3S1-256, R3S1-256";
inline constexpr const char* kStyleEncoderArch =
    "C7S1-64, C4S2-128, C4S2-256, C4S2-256, C4S2-256, GAP, FC-50";
inline constexpr const char* kDecoderArch =
    "A3R3S1-256, A3R3S1-256, A3R3S1-256, A3R3S1-256, U-128, U-64, C7S1-3";
inline constexpr const char* kDiscriminatorArch =
    "C4S2-64, C4S2-128, C4S2-256, C4S2-512, C1S1-1+c(8:scale)s1-D";
// Three stride-2 stages so the coarsest of three scales of a 32x32 image
// still has a 1x1 map.
inline constexpr const char* kDeskDiscriminatorArch =
    "C4S2-64, C4S2-128, C4S2-256, C1S1-1+c(4:scale)s1-D";

struct DomainLabel {
  std::size_t index = 0;
  std::size_t numDomains = 1;

  DomainLabel(std::size_t idx, std::size_t domains) : index(idx), numDomains(domains) {
    if (domains == 0 || idx >= domains)
      throw ConfigError("domain label " + std::to_string(idx) + " out of range for " +
                        std::to_string(domains) + " domains");
  }

  std::vector<double> oneHot() const {
    std::vector<double> v(numDomains, 0.0);
    v[index] = 1.0;
    return v;
  }
};

// [N, D] one-hot rows.
template <typename T>
Tensor<T> oneHotBatch(const std::vector<std::size_t>& labels, std::size_t numDomains) {
  std::vector<T> v(labels.size() * numDomains, T(0));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= numDomains)
      throw ConfigError("domain label " + std::to_string(labels[i]) + " out of range for " +
                        std::to_string(numDomains) + " domains");
    v[i * numDomains + labels[i]] = T(1);
  }
  return Tensor<T>({labels.size(), numDomains}, std::move(v));
}

// Appends the one-hot label as D constant channels: [N,C,H,W] -> [N,C+D,H,W].
template <typename T>
Tensor<T> conditionOnLabel(const Tensor<T>& x, const std::vector<std::size_t>& labels,
                           std::size_t numDomains) {
  if (x.rank() != 4 || x.dim(0) != labels.size())
    throw ShapeError("label conditioning: " + std::to_string(labels.size()) +
                     " labels for input " + nd::toString(x.shape()));
  const std::size_t n = x.dim(0), hw = x.dim(2) * x.dim(3);
  std::vector<T> planes(n * numDomains * hw, T(0));
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] >= numDomains)
      throw ConfigError("domain label " + std::to_string(labels[i]) + " out of range for " +
                        std::to_string(numDomains) + " domains");
    std::fill_n(planes.begin() + static_cast<std::ptrdiff_t>((i * numDomains + labels[i]) * hw),
                hw, T(1));
  }
  return nd::concat<T>({x, Tensor<T>({n, numDomains, x.dim(2), x.dim(3)}, std::move(planes))},
                       1);
}

struct ModelOptions {
  std::size_t numDomains = 2;
  std::size_t imageSize = 32;
  std::size_t filterDivisor = 4;
  std::size_t branches = 3;  // replaces b in every AbRkS1-f token
  GateMode gateMode = GateMode::kContentBased;
  GateSource gateSource = GateSource::kLayerInput;
  std::size_t gateHidden = 16;
  std::size_t adainHidden = 64;
  std::string contentArch = kContentEncoderArch;
  std::string styleArch = kStyleEncoderArch;
  std::string decoderArch = kDecoderArch;
  std::string discriminatorArch = kDeskDiscriminatorArch;
};

// Feed-forward stack built from conv / residual / upsample / GAP / FC tokens.
template <typename T>
class LayerStack {
 public:
  struct Gap {};
  using Layer = std::variant<ConvBlock<T>, ResidualBlock<T>, UpsampleBlock<T>, Gap, Linear<T>>;

  struct Style {
    Normalization convNorm = Normalization::kNone;
    Normalization residualNorm = Normalization::kInstance;
    Activation activation = Activation::kRelu;
    bool reflectFirst = true;
    bool tanhLast = false;  // last conv: tanh, no norm, reflect padding
  };

  LayerStack() = default;
  LayerStack(const ArchSpec& spec, std::size_t inChannels, const Style& style, Rng& rng) {
    std::size_t channels = inChannels;
    bool flat = false;
    std::size_t lastConv = spec.layers.size();
    for (std::size_t i = 0; i < spec.layers.size(); ++i)
      if (spec.layers[i].kind == LayerKind::kConv) lastConv = i;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
      const auto& d = spec.layers[i];
      const bool isFlatOp = d.kind == LayerKind::kFullyConnected;
      if (flat != isFlatOp && d.kind != LayerKind::kGap)
        throw ConfigError("layer '" + render(d) + "' cannot follow " +
                          (flat ? "GAP/FC" : "a spatial layer"));
      switch (d.kind) {
        case LayerKind::kConv: {
          const bool last = style.tanhLast && i == lastConv;
          ConvBlockSpec s{channels, d.filters, d.kernel, d.stride,
                          last ? Activation::kTanh : style.activation,
                          last ? Normalization::kNone : style.convNorm,
                          (last || (style.reflectFirst && layers_.empty())) ? nd::PadMode::kReflect
                                                                            : nd::PadMode::kZero};
          layers_.emplace_back(ConvBlock<T>(s, rng));
          channels = d.filters;
          break;
        }
        case LayerKind::kResidual:
          if (d.filters != channels || d.stride != 1)
            throw ConfigError("residual block '" + render(d) + "' must keep " +
                              std::to_string(channels) + " channels at stride 1");
          layers_.emplace_back(ResidualBlock<T>(channels, d.kernel, style.residualNorm, rng));
          break;
        case LayerKind::kUpsample:
          layers_.emplace_back(UpsampleBlock<T>(channels, d.filters, rng));
          channels = d.filters;
          break;
        case LayerKind::kGap:
          if (flat) throw ConfigError("GAP applied twice");
          layers_.emplace_back(Gap{});
          flat = true;
          break;
        case LayerKind::kFullyConnected:
          layers_.emplace_back(Linear<T>(channels, d.filters, rng));
          channels = d.filters;
          break;
        case LayerKind::kAdaptive:
        case LayerKind::kDiscHead:
          throw ConfigError("layer '" + render(d) + "' is not valid in this network part");
      }
    }
    outChannels_ = channels;
  }

  Tensor<T> operator()(Tensor<T> x) const {
    for (const auto& layer : layers_) {
      x = std::visit(
          [&](const auto& l) -> Tensor<T> {
            using L = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<L, Gap>)
              return nd::globalAveragePool(x);
            else
              return l(x);
          },
          layer);
    }
    return x;
  }

  std::size_t outChannels() const { return outChannels_; }
  std::size_t size() const { return layers_.size(); }
  std::vector<Layer>& layers() { return layers_; }

  void collect(ParamList<T>& out, const std::string& prefix) const {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const std::string name = prefix + "." + std::to_string(i);
      std::visit(
          [&](const auto& l) {
            if constexpr (!std::is_same_v<std::decay_t<decltype(l)>, Gap>) l.collect(out, name);
          },
          layers_[i]);
    }
  }

  Shape flops(Shape shape, FlopReport& r, const std::string& prefix,
              const std::string& category) const {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const std::string name = prefix + "." + std::to_string(i);
      shape = std::visit(
          [&](const auto& l) -> Shape {
            using L = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<L, Gap>) {
              r.add(name + ".gap", category, nd::numel(shape) / shape[0]);
              return Shape{shape[0], shape[1]};
            } else if constexpr (std::is_same_v<L, Linear<T>>) {
              l.flops(r, name, category);
              return Shape{shape[0], l.outFeatures()};
            } else {
              return l.flops(shape, r, name, category);
            }
          },
          layers_[i]);
    }
    return shape;
  }

 private:
  std::vector<Layer> layers_;
  std::size_t outChannels_ = 0;
};

template <typename T>
struct Decoded {
  Tensor<T> image;
  std::vector<GateDecision> decisions;
};

struct ParamBreakdown {
  std::size_t contentEncoder = 0;
  std::size_t styleEncoder = 0;
  std::size_t branches = 0;
  std::size_t gates = 0;
  std::size_t decoderTail = 0;

  std::size_t adaptiveStack() const { return branches + gates; }
  std::size_t total() const {
    return contentEncoder + styleEncoder + branches + gates + decoderTail;
  }
};

inline ArchSpec withBranches(ArchSpec spec, std::size_t branches) {
  for (auto& d : spec.layers)
    if (d.kind == LayerKind::kAdaptive) d.branches = branches;
  return spec;
}

template <typename T>
class Generator {
 public:
  Generator(const ModelOptions& options, Rng& rng) : options_(options) {
    if (options.numDomains == 0) throw ConfigError("generator: numDomains must be positive");
    if (options.gateMode == GateMode::kDisabled && options.branches != 1)
      throw ConfigError("generator: gateMode=disabled requires K = 1, got K = " +
                        std::to_string(options.branches));
    const auto content = scaleFilters(parseArchString(options.contentArch),
                                      options.filterDivisor, false);
    const auto style = parseArchString(options.styleArch);
    const auto decoder = scaleFilters(
        withBranches(parseArchString(options.decoderArch), options.branches),
        options.filterDivisor, true);
    const std::size_t inChannels = 3 + options.numDomains;

    typename LayerStack<T>::Style contentStyle;
    contentStyle.convNorm = Normalization::kInstance;
    contentEncoder_ = LayerStack<T>(content, inChannels, contentStyle, rng);

    typename LayerStack<T>::Style styleStyle;
    styleStyle.convNorm = Normalization::kNone;
    styleEncoder_ =
        LayerStack<T>(scaleFilters(style, options.filterDivisor, false), inChannels, styleStyle, rng);
    styleDim_ = styleEncoder_.outChannels();
    if (style.layers.back().kind != LayerKind::kFullyConnected)
      throw ConfigError("generator: the style encoder must end with FC-S");

    std::size_t channels = contentEncoder_.outChannels();
    codeChannels_ = channels;
    ArchSpec tail;
    for (const auto& d : decoder.layers) {
      if (d.kind == LayerKind::kAdaptive) {
        if (!tail.layers.empty())
          throw ConfigError("generator: adaptive blocks must precede the decoder tail");
        if (d.filters != channels)
          throw ConfigError("generator: adaptive block '" + render(d) + "' on a " +
                            std::to_string(channels) + "-channel content code");
        AdaptiveBlockSpec s;
        s.channels = channels;
        s.kernel = d.kernel;
        s.branches = d.branches;
        s.styleDim = styleDim_;
        s.adainHidden = options.adainHidden;
        s.gateHidden = options.gateHidden;
        s.numDomains = options.numDomains;
        s.mode = options.gateMode;
        blocks_.emplace_back(s, rng);
      } else {
        tail.layers.push_back(d);
      }
    }
    if (tail.layers.empty()) throw ConfigError("generator: decoder has no output layers");
    typename LayerStack<T>::Style tailStyle;
    tailStyle.reflectFirst = false;
    tailStyle.tanhLast = true;
    decoderTail_ = LayerStack<T>(tail, channels, tailStyle, rng);
    if (decoderTail_.outChannels() != 3)
      throw ConfigError("generator: decoder must end with 3 image channels");
  }

  Tensor<T> encodeContent(const Tensor<T>& x, const std::vector<std::size_t>& labels) const {
    requireImage(x);
    return contentEncoder_(conditionOnLabel(x, labels, options_.numDomains));
  }

  Tensor<T> encodeStyle(const Tensor<T>& x, const std::vector<std::size_t>& labels) const {
    requireImage(x);
    return styleEncoder_(conditionOnLabel(x, labels, options_.numDomains));
  }

  // labels: the target domain per sample (label-based gates read it).
  Decoded<T> decode(const Tensor<T>& content, const Tensor<T>& style,
                    const std::vector<std::size_t>& labels, GateControl& control) const {
    if (content.rank() != 4 || content.dim(1) != codeChannels_)
      throw ShapeError("decode: content code " + nd::toString(content.shape()) + " for " +
                       std::to_string(codeChannels_) + " channels");
    if (style.rank() != 2 || style.dim(1) != styleDim_ || style.dim(0) != content.dim(0))
      throw ShapeError("decode: style code " + nd::toString(style.shape()) + " for batch " +
                       std::to_string(content.dim(0)) + " and style dim " +
                       std::to_string(styleDim_));
    Decoded<T> out;
    Tensor<T> labelInput;
    if (options_.gateMode == GateMode::kLabelBased)
      labelInput = oneHotBatch<T>(labels, options_.numDomains);
    Tensor<T> h = content;
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      const Tensor<T>* gateInput = &h;
      if (options_.gateMode == GateMode::kLabelBased)
        gateInput = &labelInput;
      else if (options_.gateSource == GateSource::kContentCode)
        gateInput = &content;
      h = blocks_[b].forward(h, style, *gateInput, control, out.decisions, b);
    }
    out.image = decoderTail_(h);
    return out;
  }

  Decoded<T> generate(const Tensor<T>& x, const std::vector<std::size_t>& targets,
                      GateControl& control) const {
    return decode(encodeContent(x, targets), encodeStyle(x, targets), targets, control);
  }

  ParamList<T> contentParams() const { return collectFrom(contentEncoder_, "gen.content"); }
  ParamList<T> styleParams() const { return collectFrom(styleEncoder_, "gen.style"); }

  ParamList<T> params() const {
    ParamList<T> p = contentParams();
    for (auto& q : styleParams()) p.push_back(q);
    for (std::size_t b = 0; b < blocks_.size(); ++b)
      blocks_[b].collect(p, "gen.adaptive" + std::to_string(b));
    decoderTail_.collect(p, "gen.tail");
    return p;
  }

  ParamBreakdown paramBreakdown() const {
    ParamBreakdown r;
    r.contentEncoder = countScalars(contentParams());
    r.styleEncoder = countScalars(styleParams());
    for (const auto& block : blocks_) {
      for (std::size_t k = 0; k < block.branchCount(); ++k)
        r.branches += block.branch(k).paramCount();
      if (block.gate()) {
        ParamList<T> g;
        block.gate()->collect(g, "");
        r.gates += countScalars(g);
      }
    }
    r.decoderTail = countScalars(collectFrom(decoderTail_, "gen.tail"));
    return r;
  }

  // Marginal parameter cost of one more branch in every adaptive block: the
  // branch itself plus its row of the gate's output layer.
  std::size_t paramsPerBranch() const {
    std::size_t n = 0;
    for (const auto& block : blocks_) {
      n += block.branch(0).paramCount();
      if (block.gate()) n += block.gate()->hiddenWidth() + 1;
    }
    return n;
  }

  // Per-sample MACs for an [1,3,H,W] input, categories
  // encoders / branches / gates / decoder.
  FlopReport flops(std::size_t height, std::size_t width) const {
    FlopReport r;
    const Shape in{1, 3 + options_.numDomains, height, width};
    r.add("gen.condition", "encoders", 2 * options_.numDomains * height * width);
    Shape c = contentEncoder_.flops(in, r, "gen.content", "encoders");
    styleEncoder_.flops(in, r, "gen.style", "encoders");
    for (std::size_t b = 0; b < blocks_.size(); ++b)
      c = blocks_[b].flops(c, r, "gen.adaptive" + std::to_string(b));
    decoderTail_.flops(c, r, "gen.tail", "decoder");
    return r;
  }

  const ModelOptions& options() const { return options_; }
  std::size_t styleDim() const { return styleDim_; }
  std::size_t codeChannels() const { return codeChannels_; }
  std::size_t blockCount() const { return blocks_.size(); }
  AdaptiveResidualBlock<T>& block(std::size_t b) { return blocks_.at(b); }
  const AdaptiveResidualBlock<T>& block(std::size_t b) const { return blocks_.at(b); }
  LayerStack<T>& contentEncoder() { return contentEncoder_; }
  LayerStack<T>& styleEncoder() { return styleEncoder_; }
  LayerStack<T>& decoderTail() { return decoderTail_; }

 private:
  static ParamList<T> collectFrom(const LayerStack<T>& s, const std::string& prefix) {
    ParamList<T> p;
    s.collect(p, prefix);
    return p;
  }

  void requireImage(const Tensor<T>& x) const {
    if (x.rank() != 4 || x.dim(1) != 3 || x.dim(2) % 4 || x.dim(3) % 4)
      throw ShapeError("generator: expected [N,3,H,W] with H, W divisible by 4, got " +
                       nd::toString(x.shape()));
  }

  ModelOptions options_;
  LayerStack<T> contentEncoder_, styleEncoder_, decoderTail_;
  std::vector<AdaptiveResidualBlock<T>> blocks_;
  std::size_t styleDim_ = 0;
  std::size_t codeChannels_ = 0;
};

template <typename T>
struct Discrimination {
  std::vector<Tensor<T>> adversarial;  // one [N,1,h,w] patch map per scale
  Tensor<T> classLogits;               // [N,D], mean over scales
};

// Three copies of a C4S2 LeakyReLU stack applied to the image at full,
// half and quarter resolution (2x2 average pooling between scales). Each
// scale ends in a 1x1 adversarial conv and an unpadded classifier conv
// whose kernel covers the remaining extent.
template <typename T>
class Discriminator {
 public:
  static constexpr std::size_t kScales = 3;

  Discriminator(const std::string& arch, std::size_t numDomains, std::size_t filterDivisor,
                std::size_t imageSize, Rng& rng)
      : numDomains_(numDomains) {
    auto spec = parseArchString(arch);
    if (spec.layers.back().kind != LayerKind::kDiscHead)
      throw ConfigError("discriminator: architecture must end with the C1S1-a+c(n:scale)sT-m head");
    const LayerDesc head = spec.layers.back();
    spec.layers.pop_back();
    spec = scaleFilters(spec, filterDivisor, false);
    if (head.filters != 0 && head.filters != numDomains)
      throw ConfigError("discriminator: class head width " + std::to_string(head.filters) +
                        " does not match " + std::to_string(numDomains) + " domains");
    for (std::size_t s = 0; s < kScales; ++s) {
      Scale sc;
      std::size_t channels = 3, extent = imageSize >> s;
      for (const auto& d : spec.layers) {
        if (d.kind != LayerKind::kConv)
          throw ConfigError("discriminator: only CkSs-f stages are supported, got '" + render(d) +
                            "'");
        ConvBlockSpec cs{channels, d.filters, d.kernel, d.stride, Activation::kLeakyRelu,
                         Normalization::kNone};
        sc.stages.emplace_back(cs, rng);
        extent = nd::convOutputExtent(extent, d.kernel, d.stride, (d.kernel - 1) / 2);
        channels = d.filters;
      }
      const std::size_t classKernel = head.classKernel >> s;
      if (classKernel == 0 || classKernel > extent)
        throw ConfigError("discriminator: classifier kernel " + std::to_string(classKernel) +
                          " at scale " + std::to_string(s + 1) + " does not fit a " +
                          std::to_string(extent) + "x" + std::to_string(extent) + " map");
      sc.adversarial = Conv2d<T>(channels, head.advFilters, 1, 1, true, nd::PadMode::kZero, rng);
      sc.classWeight = gaussianParam<T>({numDomains, channels, classKernel, classKernel},
                                        kInitStd, rng);
      sc.classBias = Tensor<T>::zeros({numDomains}, true);
      sc.classStride = head.classStride;
      scales_.push_back(std::move(sc));
    }
  }

  Discrimination<T> operator()(const Tensor<T>& x) const {
    if (x.rank() != 4 || x.dim(1) != 3)
      throw ShapeError("discriminator: expected [N,3,H,W], got " + nd::toString(x.shape()));
    Discrimination<T> out;
    Tensor<T> input = x;
    std::optional<Tensor<T>> logits;
    for (std::size_t s = 0; s < scales_.size(); ++s) {
      if (s > 0) input = nd::avgPool2x2(input);
      const auto& sc = scales_[s];
      Tensor<T> h = input;
      for (const auto& stage : sc.stages) h = stage(h);
      out.adversarial.push_back(sc.adversarial(h));
      auto cls = nd::globalAveragePool(nd::conv2d(h, sc.classWeight, &sc.classBias, sc.classStride, 0));
      logits = logits ? nd::add(*logits, cls) : cls;
    }
    out.classLogits = nd::scale(*logits, static_cast<T>(1.0 / static_cast<double>(scales_.size())));
    return out;
  }

  ParamList<T> params() const {
    ParamList<T> p;
    for (std::size_t s = 0; s < scales_.size(); ++s) {
      const std::string prefix = "dis.scale" + std::to_string(s);
      for (std::size_t i = 0; i < scales_[s].stages.size(); ++i)
        scales_[s].stages[i].collect(p, prefix + "." + std::to_string(i));
      scales_[s].adversarial.collect(p, prefix + ".adv");
      p.push_back({prefix + ".cls.weight", scales_[s].classWeight});
      p.push_back({prefix + ".cls.bias", scales_[s].classBias});
    }
    return p;
  }

  // Auxiliary domain-classifier head parameters only.
  ParamList<T> classifierParams() const {
    ParamList<T> p;
    for (std::size_t s = 0; s < scales_.size(); ++s) {
      const std::string prefix = "dis.scale" + std::to_string(s);
      p.push_back({prefix + ".cls.weight", scales_[s].classWeight});
      p.push_back({prefix + ".cls.bias", scales_[s].classBias});
    }
    return p;
  }

  FlopReport flops(std::size_t height, std::size_t width) const {
    FlopReport r;
    Shape in{1, 3, height, width};
    for (std::size_t s = 0; s < scales_.size(); ++s) {
      const std::string prefix = "dis.scale" + std::to_string(s);
      if (s > 0) {
        r.add(prefix + ".pool", "discriminator", nd::numel(in) / in[0]);
        in = {1, 3, in[2] / 2, in[3] / 2};
      }
      Shape h = in;
      for (std::size_t i = 0; i < scales_[s].stages.size(); ++i)
        h = scales_[s].stages[i].flops(h, r, prefix + "." + std::to_string(i), "discriminator");
      scales_[s].adversarial.flops(h, r, prefix + ".adv", "discriminator");
      const std::size_t k = scales_[s].classWeight.dim(2);
      const std::size_t oh = nd::convOutputExtent(h[2], k, scales_[s].classStride, 0);
      const std::size_t ow = nd::convOutputExtent(h[3], k, scales_[s].classStride, 0);
      r.add(prefix + ".cls", "discriminator", oh * ow * numDomains_ * k * k * h[1]);
    }
    return r;
  }

  std::size_t numDomains() const { return numDomains_; }

 private:
  struct Scale {
    std::vector<ConvBlock<T>> stages;
    Conv2d<T> adversarial;
    Tensor<T> classWeight, classBias;
    std::size_t classStride = 1;
  };

  std::size_t numDomains_;
  std::vector<Scale> scales_;
};

}  // namespace ada2net::nn
