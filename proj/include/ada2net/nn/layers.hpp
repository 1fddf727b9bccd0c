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

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ada2net/nd/ops.hpp"
#include "ada2net/rng.hpp"

namespace ada2net::nn {

using nd::Shape;
using nd::Tensor;

template <typename T>
struct NamedParam {
  std::string name;
  Tensor<T> tensor;
};

template <typename T>
using ParamList = std::vector<NamedParam<T>>;

template <typename T>
std::size_t countScalars(const ParamList<T>& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.tensor.numel();
  return n;
}

template <typename T>
Tensor<T> gaussianParam(Shape shape, double stddev, Rng& rng) {
  std::vector<T> v(nd::numel(shape));
  for (auto& x : v) x = static_cast<T>(stddev * rng.normal());
  return Tensor<T>(std::move(shape), std::move(v), true);
}

// Per-element MAC / elementwise-op accounting, filled by the layers' flops()
// methods. Categories group entries for the complexity report.
struct FlopEntry {
  std::string name;
  std::string category;
  std::uint64_t macs;
};

struct FlopReport {
  std::vector<FlopEntry> entries;

  void add(std::string name, std::string category, std::uint64_t macs) {
    entries.push_back({std::move(name), std::move(category), macs});
  }

  std::uint64_t total() const {
    std::uint64_t t = 0;
    for (const auto& e : entries) t += e.macs;
    return t;
  }

  std::uint64_t total(const std::string& category) const {
    std::uint64_t t = 0;
    for (const auto& e : entries)
      if (e.category == category) t += e.macs;
    return t;
  }
};

enum class Activation { kRelu, kLeakyRelu, kTanh, kNone };
enum class Normalization { kInstance, kAdaIN, kNone };

inline constexpr double kInitStd = 0.02;
inline constexpr double kInstanceNormEps = 1e-5;
inline constexpr double kLeakySlope = 0.2;

template <typename T>
Tensor<T> activate(const Tensor<T>& x, Activation a) {
  switch (a) {
    case Activation::kRelu: return nd::relu(x);
    case Activation::kLeakyRelu: return nd::leakyRelu(x, static_cast<T>(kLeakySlope));
    case Activation::kTanh: return nd::tanh(x);
    case Activation::kNone: return x;
  }
  return x;
}

// Fully connected: x [N,in] -> x W + b, W [in,out].
template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(std::size_t in, std::size_t out, Rng& rng, double stddev = kInitStd)
      : weight_(gaussianParam<T>({in, out}, stddev, rng)),
        bias_(Tensor<T>::zeros({out}, true)) {}

  Tensor<T> operator()(const Tensor<T>& x) const {
    if (x.rank() != 2 || x.dim(1) != inFeatures())
      throw ShapeError("linear: input " + nd::toString(x.shape()) + " for " +
                       std::to_string(inFeatures()) + " features");
    return nd::add(nd::matmul(x, weight_), bias_);
  }

  std::size_t inFeatures() const { return weight_.dim(0); }
  std::size_t outFeatures() const { return weight_.dim(1); }

  Tensor<T>& weight() { return weight_; }
  Tensor<T>& bias() { return bias_; }

  void collect(ParamList<T>& out, const std::string& prefix) const {
    out.push_back({prefix + ".weight", weight_});
    out.push_back({prefix + ".bias", bias_});
  }

  void flops(FlopReport& r, const std::string& name, const std::string& category) const {
    r.add(name, category, inFeatures() * outFeatures());
  }

 private:
  Tensor<T> weight_;
  Tensor<T> bias_;
};

// k x k convolution with "same"-style padding (k-1)/2, zero or reflected.
template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride,
         bool withBias, nd::PadMode padMode, Rng& rng, double stddev = kInitStd)
      : weight_(gaussianParam<T>({out, in, kernel, kernel}, stddev, rng)),
        stride_(stride),
        padMode_(padMode) {
    if (kernel == 0 || stride == 0)
      throw ConfigError("conv: kernel and stride must be positive");
    if (withBias) bias_ = Tensor<T>::zeros({out}, true);
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    const std::size_t p = padding();
    const Tensor<T>* b = bias_ ? &*bias_ : nullptr;
    if (padMode_ == nd::PadMode::kReflect && p > 0)
      return nd::conv2d(nd::pad(x, p, nd::PadMode::kReflect), weight_, b, stride_, 0);
    return nd::conv2d(x, weight_, b, stride_, p);
  }

  std::size_t inChannels() const { return weight_.dim(1); }
  std::size_t outChannels() const { return weight_.dim(0); }
  std::size_t kernel() const { return weight_.dim(2); }
  std::size_t stride() const { return stride_; }
  std::size_t padding() const { return (kernel() - 1) / 2; }
  bool hasBias() const { return bias_.has_value(); }

  Shape outputShape(const Shape& in) const {
    return {in[0], outChannels(), nd::convOutputExtent(in[2], kernel(), stride_, padding()),
            nd::convOutputExtent(in[3], kernel(), stride_, padding())};
  }

  Tensor<T>& weight() { return weight_; }
  std::optional<Tensor<T>>& bias() { return bias_; }

  void collect(ParamList<T>& out, const std::string& prefix) const {
    out.push_back({prefix + ".weight", weight_});
    if (bias_) out.push_back({prefix + ".bias", *bias_});
  }

  // MACs = Hout * Wout * Cout * k^2 * Cin per sample.
  Shape flops(const Shape& in, FlopReport& r, const std::string& name,
              const std::string& category) const {
    Shape out = outputShape(in);
    r.add(name, category,
          static_cast<std::uint64_t>(out[2]) * out[3] * outChannels() * kernel() * kernel() *
              inChannels());
    return out;
  }

 private:
  Tensor<T> weight_;
  std::optional<Tensor<T>> bias_;
  std::size_t stride_ = 1;
  nd::PadMode padMode_ = nd::PadMode::kZero;
};

// Predicts per-channel AdaIN scale and shift from a style code:
// hidden = relu(FC(s)); alpha = FC_a(hidden); beta = FC_b(hidden).
// The alpha head's bias starts at 1 so a fresh layer is close to plain
// instance normalization.
template <typename T>
class AdaINParamNet {
 public:
  AdaINParamNet() = default;
  AdaINParamNet(std::size_t styleDim, std::size_t hidden, std::size_t channels, Rng& rng)
      : hidden_(styleDim, hidden, rng), alpha_(hidden, channels, rng), beta_(hidden, channels, rng) {
    auto b = alpha_.bias().mutableValues();
    std::fill(b.begin(), b.end(), T(1));
  }

  std::pair<Tensor<T>, Tensor<T>> operator()(const Tensor<T>& style) const {
    auto h = nd::relu(hidden_(style));
    return {alpha_(h), beta_(h)};
  }

  std::size_t styleDim() const { return hidden_.inFeatures(); }
  std::size_t channels() const { return alpha_.outFeatures(); }

  Linear<T>& hidden() { return hidden_; }
  Linear<T>& alpha() { return alpha_; }
  Linear<T>& beta() { return beta_; }

  void collect(ParamList<T>& out, const std::string& prefix) const {
    hidden_.collect(out, prefix + ".hidden");
    alpha_.collect(out, prefix + ".alpha");
    beta_.collect(out, prefix + ".beta");
  }

  void flops(FlopReport& r, const std::string& name, const std::string& category) const {
    hidden_.flops(r, name + ".hidden", category);
    r.add(name + ".relu", category, hidden_.outFeatures());
    alpha_.flops(r, name + ".alpha", category);
    beta_.flops(r, name + ".beta", category);
  }

 private:
  Linear<T> hidden_, alpha_, beta_;
};

template <typename T>
Tensor<T> instanceNorm(const Tensor<T>& x, double eps = kInstanceNormEps) {
  return nd::instanceNorm(x, static_cast<T>(eps));
}

// alpha (.) instanceNorm(x) + beta with alpha, beta [N,C] broadcast over H,W.
template <typename T>
Tensor<T> adaIN(const Tensor<T>& x, const Tensor<T>& alpha, const Tensor<T>& beta,
                double eps = kInstanceNormEps) {
  if (x.rank() != 4 || alpha.shape() != Shape{x.dim(0), x.dim(1)} ||
      beta.shape() != alpha.shape())
    throw ConfigError("adaIN: affine heads " + nd::toString(alpha.shape()) + "/" +
                      nd::toString(beta.shape()) + " do not match input " +
                      nd::toString(x.shape()));
  const Shape s{x.dim(0), x.dim(1), 1, 1};
  return nd::add(nd::mul(nn::instanceNorm(x, eps), nd::reshape(alpha, s)), nd::reshape(beta, s));
}

template <typename T>
Tensor<T> adaIN(const Tensor<T>& x, const Tensor<T>& style, const AdaINParamNet<T>& params) {
  if (x.rank() == 4 && params.channels() != x.dim(1))
    throw ConfigError("adaIN: parameter net predicts " + std::to_string(params.channels()) +
                      " channels, input has " + std::to_string(x.dim(1)));
  if (style.rank() != 2 || style.dim(1) != params.styleDim())
    throw ShapeError("adaIN: style code " + nd::toString(style.shape()) + " for style dim " +
                     std::to_string(params.styleDim()));
  auto [alpha, beta] = params(style);
  return adaIN(x, alpha, beta);
}

struct ConvBlockSpec {
  std::size_t inChannels = 0;
  std::size_t filters = 0;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  Activation activation = Activation::kRelu;
  Normalization normalization = Normalization::kNone;
  nd::PadMode padMode = nd::PadMode::kZero;
  std::size_t styleDim = 0;     // AdaIN only
  std::size_t adainHidden = 0;  // AdaIN only
};

// conv -> norm -> activation. Convolutions that feed a normalization carry
// no bias: instance normalization removes any per-channel constant.
template <typename T>
class ConvBlock {
 public:
  ConvBlock() = default;
  ConvBlock(const ConvBlockSpec& spec, Rng& rng)
      : spec_(spec),
        conv_(spec.inChannels, spec.filters, spec.kernel, spec.stride,
              spec.normalization == Normalization::kNone, spec.padMode, rng) {
    if (spec.normalization == Normalization::kAdaIN)
      adain_ = AdaINParamNet<T>(spec.styleDim, spec.adainHidden, spec.filters, rng);
  }

  Tensor<T> operator()(const Tensor<T>& x, const Tensor<T>* style = nullptr) const {
    auto y = conv_(x);
    switch (spec_.normalization) {
      case Normalization::kInstance: y = instanceNorm(y); break;
      case Normalization::kAdaIN:
        if (!style) throw ConfigError("conv block: AdaIN normalization needs a style code");
        y = adaIN(y, *style, *adain_);
        break;
      case Normalization::kNone: break;
    }
    return activate(y, spec_.activation);
  }

  const ConvBlockSpec& spec() const { return spec_; }
  Conv2d<T>& conv() { return conv_; }
  const Conv2d<T>& conv() const { return conv_; }
  std::optional<AdaINParamNet<T>>& adain() { return adain_; }

  void collect(ParamList<T>& out, const std::string& prefix) const {
    conv_.collect(out, prefix + ".conv");
    if (adain_) adain_->collect(out, prefix + ".adain");
  }

  Shape flops(const Shape& in, FlopReport& r, const std::string& name,
              const std::string& category) const {
    Shape out = conv_.flops(in, r, name + ".conv", category);
    const std::uint64_t elems = nd::numel(out) / out[0];
    if (spec_.normalization != Normalization::kNone) r.add(name + ".norm", category, elems);
    if (adain_) adain_->flops(r, name + ".adain", category);
    if (spec_.activation != Activation::kNone) r.add(name + ".act", category, elems);
    return out;
  }

 private:
  ConvBlockSpec spec_;
  Conv2d<T> conv_;
  std::optional<AdaINParamNet<T>> adain_;
};

// x + F(x), F = conv -> norm -> ReLU -> conv -> norm (k x k, stride 1).
// `residual` exposes F alone so adaptive blocks can weight it.
template <typename T>
class ResidualBlock {
 public:
  ResidualBlock() = default;
  ResidualBlock(std::size_t channels, std::size_t kernel, Normalization norm, Rng& rng,
                std::size_t styleDim = 0, std::size_t adainHidden = 0) {
    ConvBlockSpec s{channels, channels, kernel, 1, Activation::kRelu, norm,
                    nd::PadMode::kZero, styleDim, adainHidden};
    first_ = ConvBlock<T>(s, rng);
    s.activation = Activation::kNone;
    second_ = ConvBlock<T>(s, rng);
  }

  Tensor<T> residual(const Tensor<T>& x, const Tensor<T>* style = nullptr) const {
    if (x.rank() != 4 || x.dim(1) != channels())
      throw ShapeError("residual block: input " + nd::toString(x.shape()) + " for " +
                       std::to_string(channels()) + " channels");
    samplesForwarded_ += x.dim(0);
    return second_(first_(x, style), style);
  }

  Tensor<T> operator()(const Tensor<T>& x, const Tensor<T>* style = nullptr) const {
    return nd::add(x, residual(x, style));
  }

  std::size_t channels() const { return first_.spec().inChannels; }

  // Number of samples that have gone through this block's convolutions.
  std::size_t samplesForwarded() const { return samplesForwarded_; }
  void resetCounter() const { samplesForwarded_ = 0; }

  ConvBlock<T>& first() { return first_; }
  ConvBlock<T>& second() { return second_; }

  void collect(ParamList<T>& out, const std::string& prefix) const {
    first_.collect(out, prefix + ".f1");
    second_.collect(out, prefix + ".f2");
  }

  std::size_t paramCount() const {
    ParamList<T> p;
    collect(p, "");
    return countScalars(p);
  }

  Shape flops(const Shape& in, FlopReport& r, const std::string& name,
              const std::string& category) const {
    Shape mid = first_.flops(in, r, name + ".f1", category);
    Shape out = second_.flops(mid, r, name + ".f2", category);
    r.add(name + ".skip", category, nd::numel(out) / out[0]);
    return out;
  }

 private:
  ConvBlock<T> first_, second_;
  mutable std::size_t samplesForwarded_ = 0;
};

// Nearest-neighbour 2x upsampling then a 5x5 stride-1 conv block.
template <typename T>
class UpsampleBlock {
 public:
  UpsampleBlock() = default;
  UpsampleBlock(std::size_t in, std::size_t filters, Rng& rng)
      : conv_(ConvBlockSpec{in, filters, 5, 1, Activation::kRelu, Normalization::kNone}, rng) {}

  Tensor<T> operator()(const Tensor<T>& x) const { return conv_(nd::upsampleNearest2x(x)); }

  ConvBlock<T>& block() { return conv_; }
  std::size_t outChannels() const { return conv_.spec().filters; }

  void collect(ParamList<T>& out, const std::string& prefix) const {
    conv_.collect(out, prefix + ".conv");
  }

  Shape flops(const Shape& in, FlopReport& r, const std::string& name,
              const std::string& category) const {
    Shape up{in[0], in[1], in[2] * 2, in[3] * 2};
    r.add(name + ".upsample", category, nd::numel(up) / up[0]);
    return conv_.flops(up, r, name, category);
  }

 private:
  ConvBlock<T> conv_;
};

// Re-draws every parameter from N(0, stddev^2) in place. Gradient checks use
// this to get well-scaled networks instead of the 0.02 training init.
template <typename T>
void randomizeParams(const ParamList<T>& params, Rng& rng, double stddev) {
  for (const auto& p : params) {
    Tensor<T> t = p.tensor;
    for (auto& v : t.mutableValues()) v = static_cast<T>(stddev * rng.normal());
  }
}

}  // namespace ada2net::nn
