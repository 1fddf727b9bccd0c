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

#include <string_view>
#include <vector>

#include "ada2net/nd/tensor.hpp"

namespace ada2net::nd::detail {

// Iteration plan for a numpy-style broadcast of two operands. Runs of
// adjacent dimensions that broadcast the same way are merged, so the common
// [N,C,H,W] x [N,C,1,1] case walks a 2-D index space.
struct BroadcastPlan {
  Shape out;
  std::vector<std::size_t> extent;
  std::vector<std::size_t> strideA;
  std::vector<std::size_t> strideB;
};

inline BroadcastPlan planBroadcast(std::string_view op, const Shape& a,
                                   const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape pa(rank - a.size(), 1), pb(rank - b.size(), 1);
  pa.insert(pa.end(), a.begin(), a.end());
  pb.insert(pb.end(), b.begin(), b.end());

  BroadcastPlan plan;
  plan.out.resize(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    if (pa[i] != pb[i] && pa[i] != 1 && pb[i] != 1)
      throw ShapeError(std::string(op) + ": shapes " + toString(a) + " and " +
                       toString(b) + " are not broadcastable");
    plan.out[i] = std::max(pa[i], pb[i]);
  }

  // (extent, a-broadcast, b-broadcast) per surviving dim, merged by pattern.
  struct Run {
    std::size_t extent;
    bool bcastA, bcastB;
  };
  std::vector<Run> runs;
  for (std::size_t i = 0; i < rank; ++i) {
    if (plan.out[i] == 1) continue;
    Run r{plan.out[i], pa[i] == 1, pb[i] == 1};
    if (!runs.empty() && runs.back().bcastA == r.bcastA &&
        runs.back().bcastB == r.bcastB)
      runs.back().extent *= r.extent;
    else
      runs.push_back(r);
  }

  const std::size_t n = runs.size();
  plan.extent.resize(n);
  plan.strideA.assign(n, 0);
  plan.strideB.assign(n, 0);
  std::size_t sa = 1, sb = 1;
  for (std::size_t i = n; i-- > 0;) {
    plan.extent[i] = runs[i].extent;
    if (!runs[i].bcastA) {
      plan.strideA[i] = sa;
      sa *= runs[i].extent;
    }
    if (!runs[i].bcastB) {
      plan.strideB[i] = sb;
      sb *= runs[i].extent;
    }
  }
  return plan;
}

// Calls f(outIndex, offsetA, offsetB) for every output element in row-major
// order.
template <typename F>
void forEachBroadcast(const BroadcastPlan& plan, F&& f) {
  const std::size_t n = plan.extent.size();
  if (n == 0) {
    f(std::size_t{0}, std::size_t{0}, std::size_t{0});
    return;
  }
  const std::size_t inner = plan.extent[n - 1];
  const std::size_t ia = plan.strideA[n - 1];
  const std::size_t ib = plan.strideB[n - 1];
  std::vector<std::size_t> idx(n, 0);
  std::size_t offA = 0, offB = 0, out = 0;
  while (true) {
    for (std::size_t j = 0; j < inner; ++j)
      f(out + j, offA + j * ia, offB + j * ib);
    out += inner;
    std::size_t d = n - 1;
    while (true) {
      if (d == 0) return;
      --d;
      ++idx[d];
      offA += plan.strideA[d];
      offB += plan.strideB[d];
      if (idx[d] < plan.extent[d]) break;
      offA -= plan.strideA[d] * plan.extent[d];
      offB -= plan.strideB[d] * plan.extent[d];
      idx[d] = 0;
    }
  }
}

}  // namespace ada2net::nd::detail
