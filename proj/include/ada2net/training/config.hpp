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

// Flat UTF-8 "key=value" configuration. '#' starts a comment, blank lines
// are ignored, unknown keys are rejected.

#include <charconv>
#include <cstdint>
#include <functional>
#include <istream>
#include <map>
#include <sstream>
#include <string>

#include "ada2net/losses.hpp"
#include "ada2net/nn/networks.hpp"
#include "ada2net/training/adam.hpp"

namespace ada2net::training {

struct TrainConfig {
  std::size_t batchSize = 16;
  std::size_t iterations = 2000;
  std::size_t lrDecayEvery = 1000;
  std::size_t checkpointEvery = 0;  // 0: final checkpoint only
  std::uint64_t seed = 1;
  AdamOptions adam;
  double clipNorm = 0.0;  // 0: off
  double temperature = 1.0;
  nn::ModelOptions model;
  losses::LossWeights weights;
  losses::LossTerms terms;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename N>
N parseNumber(const std::string& key, const std::string& value) {
  N out{};
  const char* first = value.data();
  const char* last = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last)
    throw ConfigError("config key '" + key + "': cannot parse '" + value + "'");
  return out;
}

inline bool parseBool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("config key '" + key + "': expected true/false, got '" + value + "'");
}

template <typename N>
std::string formatNumber(N v) {
  if constexpr (std::is_floating_point_v<N>) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
  } else {
    return std::to_string(v);
  }
}

// One entry per key: setter and getter over a TrainConfig.
struct ConfigField {
  std::function<void(TrainConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

template <typename N, typename Access>
ConfigField numberField(Access access) {
  return {[access](TrainConfig& c, const std::string& k, const std::string& v) {
            access(c) = parseNumber<N>(k, v);
          },
          [access](const TrainConfig& c) {
            return formatNumber(access(const_cast<TrainConfig&>(c)));
          }};
}

template <typename Access>
ConfigField boolField(Access access) {
  return {[access](TrainConfig& c, const std::string& k, const std::string& v) {
            access(c) = parseBool(k, v);
          },
          [access](const TrainConfig& c) {
            return std::string(access(const_cast<TrainConfig&>(c)) ? "true" : "false");
          }};
}

template <typename Access>
ConfigField stringField(Access access) {
  return {[access](TrainConfig& c, const std::string&, const std::string& v) { access(c) = v; },
          [access](const TrainConfig& c) { return access(const_cast<TrainConfig&>(c)); }};
}

inline const std::map<std::string, ConfigField>& configFields() {
  static const std::map<std::string, ConfigField> fields = [] {
    std::map<std::string, ConfigField> f;
    f["batchSize"] = numberField<std::size_t>([](TrainConfig& c) -> auto& { return c.batchSize; });
    f["iterations"] =
        numberField<std::size_t>([](TrainConfig& c) -> auto& { return c.iterations; });
    f["lrDecayEvery"] =
        numberField<std::size_t>([](TrainConfig& c) -> auto& { return c.lrDecayEvery; });
    f["checkpointEvery"] =
        numberField<std::size_t>([](TrainConfig& c) -> auto& { return c.checkpointEvery; });
    f["seed"] = numberField<std::uint64_t>([](TrainConfig& c) -> auto& { return c.seed; });
    f["lr"] = numberField<double>([](TrainConfig& c) -> auto& { return c.adam.lr; });
    f["beta1"] = numberField<double>([](TrainConfig& c) -> auto& { return c.adam.beta1; });
    f["beta2"] = numberField<double>([](TrainConfig& c) -> auto& { return c.adam.beta2; });
    f["adamEps"] = numberField<double>([](TrainConfig& c) -> auto& { return c.adam.eps; });
    f["clipNorm"] = numberField<double>([](TrainConfig& c) -> auto& { return c.clipNorm; });
    f["temperature"] =
        numberField<double>([](TrainConfig& c) -> auto& { return c.temperature; });
    f["numDomains"] =
        numberField<std::size_t>([](TrainConfig& c) -> auto& { return c.model.numDomains; });
    f["imageSize"] =
        numberField<std::size_t>([](TrainConfig& c) -> auto& { return c.model.imageSize; });
    f["filterDivisor"] =
        numberField<std::size_t>([](TrainConfig& c) -> auto& { return c.model.filterDivisor; });
    f["K"] = numberField<std::size_t>([](TrainConfig& c) -> auto& { return c.model.branches; });
    f["gateHidden"] =
        numberField<std::size_t>([](TrainConfig& c) -> auto& { return c.model.gateHidden; });
    f["adainHidden"] =
        numberField<std::size_t>([](TrainConfig& c) -> auto& { return c.model.adainHidden; });
    f["gateMode"] = {
        [](TrainConfig& c, const std::string&, const std::string& v) {
          c.model.gateMode = nn::parseGateMode(v);
        },
        [](const TrainConfig& c) { return nn::toString(c.model.gateMode); }};
    f["gateSource"] = {
        [](TrainConfig& c, const std::string&, const std::string& v) {
          c.model.gateSource = nn::parseGateSource(v);
        },
        [](const TrainConfig& c) { return nn::toString(c.model.gateSource); }};
    f["contentArch"] = stringField([](TrainConfig& c) -> auto& { return c.model.contentArch; });
    f["styleArch"] = stringField([](TrainConfig& c) -> auto& { return c.model.styleArch; });
    f["decoderArch"] = stringField([](TrainConfig& c) -> auto& { return c.model.decoderArch; });
    f["discriminatorArch"] =
        stringField([](TrainConfig& c) -> auto& { return c.model.discriminatorArch; });
    f["lambdaX"] =
        numberField<double>([](TrainConfig& c) -> auto& { return c.weights.reconstruction; });
    f["lambdaS"] = numberField<double>([](TrainConfig& c) -> auto& { return c.weights.style; });
    f["lambdaC"] = numberField<double>([](TrainConfig& c) -> auto& { return c.weights.content; });
    f["lambdaCls"] =
        numberField<double>([](TrainConfig& c) -> auto& { return c.weights.classification; });
    f["useReconstructionLoss"] =
        boolField([](TrainConfig& c) -> auto& { return c.terms.reconstruction; });
    f["useStyleLoss"] = boolField([](TrainConfig& c) -> auto& { return c.terms.style; });
    f["useContentLoss"] = boolField([](TrainConfig& c) -> auto& { return c.terms.content; });
    f["useClassifierLoss"] =
        boolField([](TrainConfig& c) -> auto& { return c.terms.classification; });
    return f;
  }();
  return fields;
}

}  // namespace detail

inline void validate(const TrainConfig& c) {
  if (c.batchSize < 1) throw ConfigError("config key 'batchSize': must be >= 1");
  if (c.iterations < 1) throw ConfigError("config key 'iterations': must be >= 1");
  if (!(c.adam.lr >= 0.0)) throw ConfigError("config key 'lr': must be >= 0");
  if (!(c.temperature > 0.0)) throw ConfigError("config key 'temperature': must be > 0");
  if (c.model.numDomains < 2) throw ConfigError("config key 'numDomains': must be >= 2");
  if (c.model.imageSize % 4 != 0)
    throw ConfigError("config key 'imageSize': must be divisible by 4");
  if (c.model.branches < 1) throw ConfigError("config key 'K': must be >= 1");
  if (c.model.gateMode == nn::GateMode::kDisabled && c.model.branches != 1)
    throw ConfigError("config key 'K': gateMode=disabled requires K=1");
  const auto& w = c.weights;
  if (w.reconstruction < 0 || w.style < 0 || w.content < 0 || w.classification < 0)
    throw ConfigError("config: loss weights must be >= 0");
}

// Applies one "key=value" assignment.
inline void setConfigValue(TrainConfig& c, const std::string& key, const std::string& value) {
  const auto& fields = detail::configFields();
  const auto it = fields.find(key);
  if (it == fields.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second.set(c, key, value);
}

inline TrainConfig parseConfig(std::istream& in, TrainConfig base = {}) {
  std::string line;
  std::size_t lineNo = 0;
  while (std::getline(in, line)) {
    ++lineNo;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineNo) + ": expected key=value");
    setConfigValue(base, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
  validate(base);
  return base;
}

inline TrainConfig parseConfigString(const std::string& text, TrainConfig base = {}) {
  std::istringstream in(text);
  return parseConfig(in, std::move(base));
}

// Every key, sorted, one per line; parseConfig(formatConfig(c)) == c.
inline std::string formatConfig(const TrainConfig& c) {
  std::string out;
  for (const auto& [key, field] : detail::configFields()) out += key + "=" + field.get(c) + "\n";
  return out;
}

}  // namespace ada2net::training
