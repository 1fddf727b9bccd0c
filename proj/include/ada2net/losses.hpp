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

// Training objectives. Every L1 term is a mean over batch and elements.
//
//   totalGen = wRec (recCyc + recIn) + wStyle recS + wContent recC
//              + wCls clsGen + advGen
//   totalDis = advDis + wCls clsDis

#include <cmath>
#include <iomanip>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "ada2net/nn/networks.hpp"

namespace ada2net::losses {

using nd::Tensor;

struct LossWeights {
  double reconstruction = 10.0;
  double style = 1.0;
  double content = 1.0;
  double classification = 1.0;
};

// Disabled terms are neither computed nor optimized (ablation runs).
struct LossTerms {
  bool reconstruction = true;
  bool style = true;
  bool content = true;
  bool classification = true;
};

struct LossReport {
  double recCyc = 0, recIn = 0, advGen = 0, advDis = 0, clsGen = 0, clsDis = 0, recS = 0,
         recC = 0, totalGen = 0, totalDis = 0;
};

template <typename T>
Tensor<T> l1Loss(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw ShapeError("l1Loss: shapes " + nd::toString(a.shape()) + " and " +
                     nd::toString(b.shape()));
  return nd::meanAll(nd::abs(nd::sub(a, b)));
}

// |x - G(G(x, d'), d)| with the round trip supplied by the caller.
template <typename T>
Tensor<T> cycleLoss(const Tensor<T>& x, const Tensor<T>& roundTrip) {
  return l1Loss(x, roundTrip);
}

// |x - G(x, d)|
template <typename T>
Tensor<T> identityLoss(const Tensor<T>& x, const Tensor<T>& sameDomain) {
  return l1Loss(x, sameDomain);
}

// |E^s(decode(c, s, d), d) - s|
template <typename T>
Tensor<T> styleRecLoss(const Tensor<T>& recovered, const Tensor<T>& style) {
  return l1Loss(recovered, style);
}

// |E^c(decode(c, s, d), d) - c|
template <typename T>
Tensor<T> contentRecLoss(const Tensor<T>& recovered, const Tensor<T>& content) {
  return l1Loss(recovered, content);
}

template <typename T>
Tensor<T> squaredDistanceTo(const Tensor<T>& x, T target) {
  return nd::meanAll(nd::square(nd::addScalar(x, -target)));
}

// Least-squares adversarial terms, averaged over scales and patches:
// real -> 1, fake -> 0 for the discriminator.
template <typename T>
Tensor<T> lsganDisLoss(const std::vector<Tensor<T>>& realMaps,
                       const std::vector<Tensor<T>>& fakeMaps) {
  if (realMaps.empty() || realMaps.size() != fakeMaps.size())
    throw ShapeError("lsganDisLoss: scale count mismatch");
  std::optional<Tensor<T>> acc;
  for (std::size_t s = 0; s < realMaps.size(); ++s) {
    auto term = nd::add(squaredDistanceTo(realMaps[s], T(1)), squaredDistanceTo(fakeMaps[s], T(0)));
    acc = acc ? nd::add(*acc, term) : term;
  }
  return nd::scale(*acc, static_cast<T>(1.0 / static_cast<double>(realMaps.size())));
}

// fake -> 1 for the generator.
template <typename T>
Tensor<T> lsganGenLoss(const std::vector<Tensor<T>>& fakeMaps) {
  if (fakeMaps.empty()) throw ShapeError("lsganGenLoss: no scales");
  std::optional<Tensor<T>> acc;
  for (const auto& m : fakeMaps) {
    auto term = squaredDistanceTo(m, T(1));
    acc = acc ? nd::add(*acc, term) : term;
  }
  return nd::scale(*acc, static_cast<T>(1.0 / static_cast<double>(fakeMaps.size())));
}

// Batch mean of -log softmax(logits)[label].
template <typename T>
Tensor<T> crossEntropy(const Tensor<T>& logits, const std::vector<std::size_t>& labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size())
    throw ShapeError("crossEntropy: " + std::to_string(labels.size()) + " labels for logits " +
                     nd::toString(logits.shape()));
  auto picked = nd::mul(nd::logSoftmax(logits, 1), nn::oneHotBatch<T>(labels, logits.dim(1)));
  return nd::scale(nd::sumAll(picked), static_cast<T>(-1.0 / static_cast<double>(labels.size())));
}

// Real images classified as their own domain.
template <typename T>
Tensor<T> clsDisLoss(const Tensor<T>& realLogits, const std::vector<std::size_t>& domains) {
  return crossEntropy(realLogits, domains);
}

// Generated images classified as the target domain. The caller evaluates
// the classifier with its parameters frozen.
template <typename T>
Tensor<T> clsGenLoss(const Tensor<T>& fakeLogits, const std::vector<std::size_t>& targets) {
  return crossEntropy(fakeLogits, targets);
}

inline void requireFiniteTerm(const char* name, double v) {
  if (!std::isfinite(v))
    throw NumericError(std::string("loss term '") + name + "' is not finite (" +
                       std::to_string(v) + ")");
}

// Fills report.totalGen / report.totalDis from the constituent terms.
inline void totalLosses(LossReport& r, const LossWeights& w) {
  requireFiniteTerm("recCyc", r.recCyc);
  requireFiniteTerm("recIn", r.recIn);
  requireFiniteTerm("advGen", r.advGen);
  requireFiniteTerm("advDis", r.advDis);
  requireFiniteTerm("clsGen", r.clsGen);
  requireFiniteTerm("clsDis", r.clsDis);
  requireFiniteTerm("recS", r.recS);
  requireFiniteTerm("recC", r.recC);
  r.totalGen = w.reconstruction * (r.recCyc + r.recIn) + w.style * r.recS + w.content * r.recC +
               w.classification * r.clsGen + r.advGen;
  r.totalDis = r.advDis + w.classification * r.clsDis;
}

inline void writeLossHeader(std::ostream& os) {
  os << "iteration,recCyc,recIn,advGen,advDis,clsGen,clsDis,recS,recC,totalGen,totalDis\n";
}

inline void writeLossRow(std::ostream& os, std::size_t iteration, const LossReport& r) {
  const auto flags = os.flags();
  const auto precision = os.precision();
  os << std::setprecision(17) << iteration << ',' << r.recCyc << ',' << r.recIn << ','
     << r.advGen << ',' << r.advDis << ',' << r.clsGen << ',' << r.clsDis << ',' << r.recS << ','
     << r.recC << ',' << r.totalGen << ',' << r.totalDis << '\n';
  os.flags(flags);
  os.precision(precision);
}

}  // namespace ada2net::losses
