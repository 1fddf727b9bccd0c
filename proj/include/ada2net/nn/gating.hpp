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

// Adaptive residual blocks: K candidate residual functions per block, one of
// which runs per input. A gating unit (GAP -> FC -> ReLU -> FC -> softmax)
// scores the branches; training draws the branch with the Gumbel-Max trick
// and back-propagates through the softmax relaxation (straight-through),
// evaluation takes the argmax of the gate probabilities.

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "ada2net/nn/layers.hpp"

namespace ada2net::nn {

enum class GateMode { kContentBased, kLabelBased, kDisabled };
enum class GateSource { kLayerInput, kContentCode };
enum class Phase { kTrain, kEval };

inline std::string toString(GateMode m) {
  switch (m) {
    case GateMode::kContentBased: return "contentBased";
    case GateMode::kLabelBased: return "labelBased";
    case GateMode::kDisabled: return "disabled";
  }
  return "?";
}

inline GateMode parseGateMode(const std::string& s) {
  if (s == "contentBased") return GateMode::kContentBased;
  if (s == "labelBased") return GateMode::kLabelBased;
  if (s == "disabled") return GateMode::kDisabled;
  throw ConfigError("unknown gate mode '" + s + "' (contentBased|labelBased|disabled)");
}

inline std::string toString(GateSource s) {
  return s == GateSource::kLayerInput ? "layerInput" : "contentCode";
}

inline GateSource parseGateSource(const std::string& s) {
  if (s == "layerInput") return GateSource::kLayerInput;
  if (s == "contentCode") return GateSource::kContentCode;
  throw ConfigError("unknown gate source '" + s + "' (layerInput|contentCode)");
}

inline constexpr double kProbFloor = 1e-20;
inline constexpr double kUniformLow = 1e-20;
inline constexpr double kUniformHigh = 1.0 - 1e-7;

// Branch choice for one sample at one adaptive block. `noise` and `anchor`
// (the relaxed softmax value at sampling time) allow a decision to be
// replayed exactly.
struct GateDecision {
  std::size_t block = 0;
  std::size_t sample = 0;
  std::vector<double> probs;
  std::size_t selected = 0;
  double temperature = 1.0;
  Phase phase = Phase::kEval;
  std::vector<double> noise;
  std::vector<double> anchor;
};

// How adaptive blocks pick branches during one forward pass.
struct GateControl {
  Phase phase = Phase::kEval;
  double temperature = 1.0;
  Rng* rng = nullptr;                                // train phase sampling
  const std::vector<GateDecision>* replay = nullptr;  // frozen decisions
  std::size_t replayCursor = 0;
};

inline double gumbelNoise(Rng& rng) {
  const double u = std::clamp(rng.uniform(), kUniformLow, kUniformHigh);
  return -std::log(-std::log(u));
}

template <typename T>
struct GumbelSample {
  Tensor<T> weights;  // [N,K]; forward exactly one-hot
  std::vector<GateDecision> decisions;
};

namespace detail {

template <typename T>
GumbelSample<T> gumbelFromNoise(const Tensor<T>& probs, double temperature,
                                std::vector<std::vector<double>> noise,
                                const std::vector<GateDecision>* frozen) {
  const std::size_t n = probs.dim(0), k = probs.dim(1);
  const T floor = static_cast<T>(kProbFloor);
  // clamp below at the floor; the gradient passes where p > floor
  std::vector<T> mask(probs.numel());
  std::vector<T> lift(probs.numel());
  for (std::size_t i = 0; i < probs.numel(); ++i) {
    const bool low = probs.at(i) < floor;
    mask[i] = low ? T(0) : T(1);
    lift[i] = low ? floor : T(0);
  }
  auto clamped = nd::add(nd::mul(probs, Tensor<T>(probs.shape(), mask)),
                         Tensor<T>(probs.shape(), lift));
  auto logp = nd::log(clamped);
  std::vector<T> g(n * k);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) g[i * k + j] = static_cast<T>(noise[i][j]);
  auto soft = nd::softmax(
      nd::scale(nd::add(logp, Tensor<T>({n, k}, g)), static_cast<T>(1.0 / temperature)), 1);

  GumbelSample<T> out;
  std::vector<T> hard(n * k, T(0)), anchor(n * k);
  for (std::size_t i = 0; i < n; ++i) {
    GateDecision d;
    d.sample = i;
    d.temperature = temperature;
    d.phase = Phase::kTrain;
    d.noise = noise[i];
    for (std::size_t j = 0; j < k; ++j) d.probs.push_back(static_cast<double>(probs.at(i * k + j)));
    if (frozen) {
      d.selected = (*frozen)[i].selected;
      d.anchor = (*frozen)[i].anchor;
    } else {
      double best = -1e300;
      for (std::size_t j = 0; j < k; ++j) {
        const double score = std::log(std::max(d.probs[j], kProbFloor)) + noise[i][j];
        if (score > best) {
          best = score;
          d.selected = j;
        }
      }
      for (std::size_t j = 0; j < k; ++j) d.anchor.push_back(static_cast<double>(soft.at(i * k + j)));
    }
    hard[i * k + d.selected] = T(1);
    for (std::size_t j = 0; j < k; ++j) anchor[i * k + j] = static_cast<T>(d.anchor[j]);
    out.decisions.push_back(std::move(d));
  }
  out.weights = nd::straightThrough(hard, soft, anchor);
  return out;
}

}  // namespace detail

// Draws k* = argmax_k(log p_k + g_k) per row of probs [N,K], g ~ Gumbel(0,1).
// Forward weights are exactly one-hot at k*; the backward pass sees
// softmax((log p + g) / temperature).
template <typename T>
GumbelSample<T> gumbelSelect(const Tensor<T>& probs, double temperature, Rng& rng) {
  if (!(temperature > 0.0)) throw ConfigError("gumbelSelect: temperature must be > 0");
  if (probs.rank() != 2) throw ShapeError("gumbelSelect: probs must be [N,K]");
  std::vector<std::vector<double>> noise(probs.dim(0), std::vector<double>(probs.dim(1)));
  for (auto& row : noise)
    for (auto& g : row) g = gumbelNoise(rng);
  return detail::gumbelFromNoise(probs, temperature, std::move(noise), nullptr);
}

// Replays previously drawn decisions: same noise, same k*, same anchor.
template <typename T>
GumbelSample<T> gumbelReplay(const Tensor<T>& probs, const std::vector<GateDecision>& frozen) {
  if (probs.rank() != 2 || frozen.size() != probs.dim(0))
    throw ShapeError("gumbelReplay: decision count does not match probs");
  std::vector<std::vector<double>> noise;
  for (const auto& d : frozen) {
    if (d.noise.size() != probs.dim(1) || d.anchor.size() != probs.dim(1))
      throw ShapeError("gumbelReplay: decision width does not match probs");
    noise.push_back(d.noise);
  }
  return detail::gumbelFromNoise(probs, frozen.front().temperature, std::move(noise), &frozen);
}

// GAP (content input only) -> FC(h) -> ReLU -> FC(K) -> softmax.
template <typename T>
class GatingUnit {
 public:
  GatingUnit() = default;
  GatingUnit(std::size_t inFeatures, std::size_t hidden, std::size_t branches, bool pooled,
             Rng& rng)
      : hidden_(inFeatures, hidden, rng), out_(hidden, branches, rng), pooled_(pooled) {}

  // gateInput: [N,C,H,W] feature map (pooled) or [N,D] one-hot label.
  Tensor<T> probs(const Tensor<T>& gateInput) const {
    auto z = pooled_ ? nd::globalAveragePool(gateInput) : gateInput;
    return nd::softmax(logits(z), 1);
  }

  Tensor<T> logits(const Tensor<T>& features) const {
    return out_(nd::relu(hidden_(features)));
  }

  std::size_t branches() const { return out_.outFeatures(); }
  std::size_t hiddenWidth() const { return hidden_.outFeatures(); }
  bool pooled() const { return pooled_; }

  Linear<T>& hidden() { return hidden_; }
  Linear<T>& output() { return out_; }

  void collect(ParamList<T>& out, const std::string& prefix) const {
    hidden_.collect(out, prefix + ".hidden");
    out_.collect(out, prefix + ".out");
  }

  void flops(const Shape& in, FlopReport& r, const std::string& name) const {
    if (pooled_) r.add(name + ".gap", "gates", nd::numel(in) / in[0]);
    hidden_.flops(r, name + ".hidden", "gates");
    r.add(name + ".relu", "gates", hiddenWidth());
    out_.flops(r, name + ".out", "gates");
    r.add(name + ".softmax", "gates", branches());
  }

 private:
  Linear<T> hidden_, out_;
  bool pooled_ = true;
};

struct AdaptiveBlockSpec {
  std::size_t channels = 0;
  std::size_t kernel = 3;
  std::size_t branches = 1;
  std::size_t styleDim = 0;
  std::size_t adainHidden = 64;
  std::size_t gateHidden = 16;
  std::size_t numDomains = 0;  // label-based gate input width
  GateMode mode = GateMode::kContentBased;
};

// x_l = x_{l-1} + F^{k*}(x_{l-1}, s); only branch k* is evaluated per sample.
template <typename T>
class AdaptiveResidualBlock {
 public:
  AdaptiveResidualBlock() = default;
  AdaptiveResidualBlock(const AdaptiveBlockSpec& spec, Rng& rng) : spec_(spec) {
    if (spec.branches == 0) throw ConfigError("adaptive block: needs at least one branch");
    if (spec.mode == GateMode::kDisabled && spec.branches != 1)
      throw ConfigError("adaptive block: disabled gating requires K = 1, got K = " +
                        std::to_string(spec.branches));
    for (std::size_t k = 0; k < spec.branches; ++k)
      branches_.emplace_back(spec.channels, spec.kernel, Normalization::kAdaIN, rng, spec.styleDim,
                             spec.adainHidden);
    if (spec.mode == GateMode::kContentBased)
      gate_ = GatingUnit<T>(spec.channels, spec.gateHidden, spec.branches, true, rng);
    else if (spec.mode == GateMode::kLabelBased)
      gate_ = GatingUnit<T>(spec.numDomains, spec.gateHidden, spec.branches, false, rng);
  }

  // gateInput: content-based mode reads a feature map (the block input or the
  // content code), label-based mode the [N,D] one-hot target label; unused
  // when disabled. Decisions for this call are appended to `trace`.
  Tensor<T> forward(const Tensor<T>& x, const Tensor<T>& style, const Tensor<T>& gateInput,
                    GateControl& control, std::vector<GateDecision>& trace,
                    std::size_t blockIndex) const {
    const std::size_t n = x.dim(0);
    if (x.rank() != 4 || x.dim(1) != spec_.channels)
      throw ShapeError("adaptive block: input " + nd::toString(x.shape()) + " for " +
                       std::to_string(spec_.channels) + " channels");
    if (style.rank() != 2 || style.dim(0) != n)
      throw ShapeError("adaptive block: style code " + nd::toString(style.shape()) +
                       " for batch " + std::to_string(n));

    std::vector<GateDecision> decisions;
    Tensor<T> weights;
    bool weighted = false;
    if (!gate_) {
      for (std::size_t i = 0; i < n; ++i) {
        GateDecision d;
        d.sample = i;
        d.probs = {1.0};
        d.temperature = control.temperature;
        d.phase = control.phase;
        decisions.push_back(d);
      }
    } else {
      auto p = gate_->probs(gateInput);
      if (p.dim(0) != n) throw ShapeError("adaptive block: gate input batch mismatch");
      if (control.phase == Phase::kTrain) {
        GumbelSample<T> sample;
        if (control.replay) {
          if (control.replayCursor + n > control.replay->size())
            throw ShapeError("adaptive block: replay trace exhausted");
          std::vector<GateDecision> frozen(control.replay->begin() + control.replayCursor,
                                           control.replay->begin() + control.replayCursor + n);
          control.replayCursor += n;
          sample = gumbelReplay(p, frozen);
        } else {
          if (!control.rng) throw ConfigError("adaptive block: train phase needs an rng");
          sample = gumbelSelect(p, control.temperature, *control.rng);
        }
        weights = sample.weights;
        weighted = true;
        decisions = std::move(sample.decisions);
      } else {
        const std::size_t k = spec_.branches;
        for (std::size_t i = 0; i < n; ++i) {
          GateDecision d;
          d.sample = i;
          d.temperature = control.temperature;
          d.phase = Phase::kEval;
          for (std::size_t j = 0; j < k; ++j) d.probs.push_back(static_cast<double>(p.at(i * k + j)));
          d.selected = static_cast<std::size_t>(
              std::max_element(d.probs.begin(), d.probs.end()) - d.probs.begin());
          decisions.push_back(std::move(d));
        }
      }
    }

    std::vector<std::vector<std::size_t>> rows(spec_.branches);
    for (std::size_t i = 0; i < n; ++i) rows[decisions[i].selected].push_back(i);
    samplesRouted_ += n;

    std::optional<Tensor<T>> acc;
    for (std::size_t k = 0; k < spec_.branches; ++k) {
      if (rows[k].empty()) continue;
      const bool all = rows[k].size() == n;  // rows are ascending, so identity
      auto xk = all ? x : nd::gatherRows(x, rows[k]);
      auto sk = all ? style : nd::gatherRows(style, rows[k]);
      auto fk = branches_[k].residual(xk, &sk);
      if (weighted) {
        auto wk = nd::slice(weights, 1, k, 1);
        if (!all) wk = nd::gatherRows(wk, rows[k]);
        fk = nd::mul(fk, nd::reshape(wk, {rows[k].size(), 1, 1, 1}));
      }
      if (!all) fk = nd::scatterRows(fk, rows[k], n);
      acc = acc ? nd::add(*acc, fk) : fk;
    }
    for (auto& d : decisions) {
      d.block = blockIndex;
      trace.push_back(std::move(d));
    }
    return nd::add(x, *acc);
  }

  // Samples that entered the block; equals the sum of the branches'
  // samplesForwarded() when every sample ran exactly one branch.
  std::size_t samplesRouted() const { return samplesRouted_; }
  void resetCounters() const {
    samplesRouted_ = 0;
    for (const auto& b : branches_) b.resetCounter();
  }

  const AdaptiveBlockSpec& spec() const { return spec_; }
  std::size_t branchCount() const { return branches_.size(); }
  ResidualBlock<T>& branch(std::size_t k) { return branches_.at(k); }
  const ResidualBlock<T>& branch(std::size_t k) const { return branches_.at(k); }
  const std::optional<GatingUnit<T>>& gate() const { return gate_; }
  std::optional<GatingUnit<T>>& gate() { return gate_; }

  void collect(ParamList<T>& out, const std::string& prefix) const {
    for (std::size_t k = 0; k < branches_.size(); ++k)
      branches_[k].collect(out, prefix + ".branch" + std::to_string(k));
    if (gate_) gate_->collect(out, prefix + ".gate");
  }

  // One branch plus the gate: the per-input cost is independent of K up to
  // the gate's output layer.
  Shape flops(const Shape& in, FlopReport& r, const std::string& name) const {
    if (gate_) gate_->flops(in, r, name + ".gate");
    return branches_.front().flops(in, r, name + ".branch", "branches");
  }

 private:
  AdaptiveBlockSpec spec_;
  std::vector<ResidualBlock<T>> branches_;
  std::optional<GatingUnit<T>> gate_;
  mutable std::size_t samplesRouted_ = 0;
};

// Per-block branch usage frequencies.
inline std::map<std::size_t, std::vector<double>> routeHistogram(
    const std::vector<GateDecision>& decisions, std::size_t branches) {
  if (decisions.empty()) throw Error("routeHistogram: empty decision list");
  std::map<std::size_t, std::vector<double>> counts;
  for (const auto& d : decisions) {
    if (d.selected >= branches) throw Error("routeHistogram: branch index out of range");
    auto& row = counts[d.block];
    row.resize(branches, 0.0);
    row[d.selected] += 1.0;
  }
  for (auto& [block, row] : counts) {
    double total = 0.0;
    for (double c : row) total += c;
    for (double& c : row) c /= total;
  }
  return counts;
}

// CSV: iteration,blockIndex,sampleIndex,selectedBranch,prob0;prob1;...
inline void writeGateTraceHeader(std::ostream& os) {
  os << "iteration,blockIndex,sampleIndex,selectedBranch,probs\n";
}

inline void writeGateTrace(std::ostream& os, std::size_t iteration,
                           const std::vector<GateDecision>& decisions) {
  for (const auto& d : decisions) {
    os << iteration << ',' << d.block << ',' << d.sample << ',' << d.selected << ',';
    for (std::size_t j = 0; j < d.probs.size(); ++j) {
      if (j) os << ';';
      os << d.probs[j];
    }
    os << '\n';
  }
}

inline void writeLabelRoutingHeader(std::ostream& os) {
  os << "iteration,blockIndex,label,branchCounts\n";
}

// Per (block, label) branch counts, "c0;c1;...", for one batch whose sample
// i carries labels[i].
inline void writeLabelRouting(std::ostream& os, std::size_t iteration,
                              const std::vector<GateDecision>& decisions,
                              const std::vector<std::size_t>& labels, std::size_t branches) {
  std::map<std::pair<std::size_t, std::size_t>, std::vector<std::size_t>> counts;
  for (const auto& d : decisions) {
    auto& row = counts[{d.block, labels.at(d.sample)}];
    row.resize(branches, 0);
    row.at(d.selected) += 1;
  }
  for (const auto& [key, row] : counts) {
    os << iteration << ',' << key.first << ',' << key.second << ',';
    for (std::size_t j = 0; j < row.size(); ++j) os << (j ? ";" : "") << row[j];
    os << '\n';
  }
}

}  // namespace ada2net::nn
