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


// Parameter / FLOP comparison of three ways to serve D domains with a
// backbone of C parameters and F MACs:
//
//   per-domain generators   C*D   F
//   one shared generator    C     F
//   K-branch adaptive graph C*K   ~F  (one branch runs per input)
//
// C is the parameter count of the residual stack that the adaptive graph
// replicates; the measured rows come from constructed generators.

#include <iomanip>
#include <ostream>
#include <string>
#include <vector>

#include "ada2net/nn/networks.hpp"

namespace ada2net::metrics {

struct ComplexityRow {
  std::string label;
  std::string paramsFormula;
  double params = 0;
  double flops = 0;
  bool flopsApproximate = false;
};

inline std::vector<ComplexityRow> complexityTable(double c, double f, std::size_t numDomains,
                                                  std::size_t branches) {
  if (!(c > 0) || !(f > 0) || numDomains == 0 || branches == 0)
    throw ConfigError("complexityTable: all inputs must be positive");
  return {{"per-domain", "C*D", c * static_cast<double>(numDomains), f, false},
          {"shared", "C", c, f, false},
          {"adaptive", "C*K", c * static_cast<double>(branches), f, true}};
}

struct MeasuredComplexity {
  std::size_t branches = 0;
  nn::ParamBreakdown params;
  std::uint64_t flops = 0;
  std::uint64_t gateFlops = 0;
  std::uint64_t branchFlops = 0;
};

inline MeasuredComplexity measureGenerator(nn::ModelOptions options, std::size_t branches) {
  options.branches = branches;
  Rng rng(0);
  const nn::Generator<float> g(options, rng);
  const auto flops = g.flops(options.imageSize, options.imageSize);
  return {branches, g.paramBreakdown(), flops.total(), flops.total("gates"),
          flops.total("branches")};
}

struct ComplexityReport {
  std::size_t numDomains = 0;
  std::size_t branches = 0;
  double backboneParams = 0;  // C
  double backboneFlops = 0;   // F
  std::vector<ComplexityRow> analytic;
  std::vector<MeasuredComplexity> measured;  // K = 1 .. branches
};

inline ComplexityReport complexityReport(const nn::ModelOptions& options) {
  ComplexityReport r;
  r.numDomains = options.numDomains;
  r.branches = options.branches;
  for (std::size_t k = 1; k <= options.branches; ++k)
    r.measured.push_back(measureGenerator(options, k));
  r.backboneParams = static_cast<double>(r.measured.front().params.branches);
  r.backboneFlops = static_cast<double>(r.measured.front().flops);
  r.analytic = complexityTable(r.backboneParams, r.backboneFlops, r.numDomains, r.branches);
  return r;
}

inline void writeComplexityText(std::ostream& os, const ComplexityReport& r) {
  const auto flags = os.flags();
  os << "D=" << r.numDomains << " K=" << r.branches << " C=" << r.backboneParams
     << " F=" << r.backboneFlops << " (MACs per image)\n";
  os << std::left << std::setw(12) << "row" << std::setw(8) << "params" << std::right
     << std::setw(16) << "value" << std::setw(18) << "flops" << '\n';
  for (const auto& row : r.analytic)
    os << std::left << std::setw(12) << row.label << std::setw(8) << row.paramsFormula
       << std::right << std::setw(16) << std::fixed << std::setprecision(0) << row.params
       << std::setw(17) << row.flops << (row.flopsApproximate ? "~" : " ") << '\n';
  os << "measured generators\n";
  os << std::setw(3) << "K" << std::setw(14) << "branchParams" << std::setw(12) << "gateParams"
     << std::setw(14) << "totalParams" << std::setw(16) << "flops" << std::setw(12)
     << "gateFlops" << std::setw(12) << "flopRatio" << '\n';
  const double base = static_cast<double>(r.measured.front().flops);
  for (const auto& m : r.measured)
    os << std::setw(3) << m.branches << std::setw(14) << m.params.branches << std::setw(12)
       << m.params.gates << std::setw(14) << m.params.total() << std::setw(16) << m.flops
       << std::setw(12) << m.gateFlops << std::setw(12) << std::setprecision(5)
       << static_cast<double>(m.flops) / base << '\n';
  os.flags(flags);
}

// row,paramsFormula,params,flops,flopsApproximate then one "measuredK" row
// per constructed generator (params = branch + gate parameters).
inline void writeComplexityCsv(std::ostream& os, const ComplexityReport& r) {
  const auto precision = os.precision();
  os << std::setprecision(17) << "row,paramsFormula,params,flops,flopsApproximate\n";
  for (const auto& row : r.analytic)
    os << row.label << ',' << row.paramsFormula << ',' << row.params << ',' << row.flops << ','
       << (row.flopsApproximate ? "true" : "false") << '\n';
  for (const auto& m : r.measured)
    os << "measuredK" << m.branches << ",measured," << m.params.adaptiveStack() << ','
       << m.flops << ",false\n";
  os.precision(precision);
}

}  // namespace ada2net::metrics
