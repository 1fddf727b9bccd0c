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

// Differentiable primitives. Each one validates shapes, rejects non-finite
// inputs, computes its forward value and, when recording, registers a
// backward rule that accumulates into the inputs' gradient buffers.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "ada2net/nd/broadcast.hpp"
#include "ada2net/nd/tensor.hpp"

namespace ada2net::nd {

namespace detail {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMatrix = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMapMatrix = Eigen::Map<const RowMatrix<T>>;

template <typename T, typename Fwd, typename Bwd>
Tensor<T> binary(std::string_view op, const Tensor<T>& a, const Tensor<T>& b,
                 Fwd fwd, Bwd bwd) {
  requireFinite(op, a);
  requireFinite(op, b);
  auto plan = planBroadcast(op, a.shape(), b.shape());
  std::vector<T> out(numel(plan.out));
  const T* pa = a.values().data();
  const T* pb = b.values().data();
  forEachBroadcast(plan, [&](std::size_t i, std::size_t ia, std::size_t ib) {
    out[i] = fwd(pa[ia], pb[ib]);
  });
  auto va = a.node()->value;
  auto vb = b.node()->value;
  Node<T>* na = a.raw();
  Node<T>* nb = b.raw();
  return record<T>(op, plan.out, std::move(out), {&a, &b},
                   [plan, va, vb, na, nb, bwd](std::span<const T> g) {
                     T* ga = sink(na);
                     T* gb = sink(nb);
                     const T* xa = va->data();
                     const T* xb = vb->data();
                     forEachBroadcast(plan, [&](std::size_t i, std::size_t ia,
                                                std::size_t ib) {
                       T da, db;
                       bwd(xa[ia], xb[ib], da, db);
                       if (ga) ga[ia] += g[i] * da;
                       if (gb) gb[ib] += g[i] * db;
                     });
                   });
}

// f(x) and f'(x, f(x)).
template <typename T, typename Fwd, typename Deriv>
Tensor<T> unary(std::string_view op, const Tensor<T>& x, Fwd fwd, Deriv deriv) {
  requireFinite(op, x);
  auto vx = x.node()->value;
  std::vector<T> out(vx->size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd((*vx)[i]);
  auto result = record<T>(op, x.shape(), std::move(out), {&x}, nullptr);
  if (result.requiresGrad()) {
    auto vy = result.node()->value;
    Node<T>* nx = x.raw();
    result.node()->backward = [vx, vy, nx, deriv](std::span<const T> g) {
      T* gx = sink(nx);
      if (!gx) return;
      const T* px = vx->data();
      const T* py = vy->data();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * deriv(px[i], py[i]);
    };
  }
  return result;
}

inline void axisSplit(const Shape& s, std::size_t axis, std::size_t& outer,
                      std::size_t& len, std::size_t& inner) {
  outer = 1;
  inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  len = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
}

inline void requireRank(std::string_view op, const Shape& s, std::size_t rank) {
  if (s.size() != rank)
    throw ShapeError(std::string(op) + ": expected rank " +
                     std::to_string(rank) + ", got " + toString(s));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic (broadcasting)
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary<T>(
      "add", a, b, [](T x, T y) { return x + y; },
      [](T, T, T& da, T& db) { da = T(1); db = T(1); });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary<T>(
      "sub", a, b, [](T x, T y) { return x - y; },
      [](T, T, T& da, T& db) { da = T(1); db = T(-1); });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary<T>(
      "mul", a, b, [](T x, T y) { return x * y; },
      [](T x, T y, T& da, T& db) { da = y; db = x; });
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  for (T v : b.values())
    if (v == T(0)) throw NumericError("div: division by zero");
  return detail::binary<T>(
      "div", a, b, [](T x, T y) { return x / y; },
      [](T x, T y, T& da, T& db) { da = T(1) / y; db = -x / (y * y); });
}

template <typename T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <typename T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <typename T>
Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }
template <typename T>
Tensor<T> operator/(const Tensor<T>& a, const Tensor<T>& b) { return div(a, b); }

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  return detail::unary<T>(
      "scale", x, [factor](T v) { return v * factor; },
      [factor](T, T) { return factor; });
}

template <typename T>
Tensor<T> addScalar(const Tensor<T>& x, T c) {
  return detail::unary<T>(
      "addScalar", x, [c](T v) { return v + c; }, [](T, T) { return T(1); });
}

// ---------------------------------------------------------------------------
// Pointwise nonlinearities
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return detail::unary<T>(
      "relu", x, [](T v) { return v > T(0) ? v : T(0); },
      [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> leakyRelu(const Tensor<T>& x, T slope) {
  return detail::unary<T>(
      "leakyRelu", x, [slope](T v) { return v > T(0) ? v : slope * v; },
      [slope](T v, T) { return v > T(0) ? T(1) : slope; });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
  return detail::unary<T>(
      "tanh", x, [](T v) { return std::tanh(v); },
      [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& x) {
  return detail::unary<T>(
      "exp", x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <typename T>
Tensor<T> log(const Tensor<T>& x) {
  for (T v : x.values())
    if (!(v > T(0))) throw NumericError("log: non-positive input");
  return detail::unary<T>(
      "log", x, [](T v) { return std::log(v); },
      [](T v, T) { return T(1) / v; });
}

template <typename T>
Tensor<T> abs(const Tensor<T>& x) {
  return detail::unary<T>(
      "abs", x, [](T v) { return std::abs(v); },
      [](T v, T) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
}

template <typename T>
Tensor<T> square(const Tensor<T>& x) {
  return detail::unary<T>(
      "square", x, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

// ---------------------------------------------------------------------------
// Shape manipulation
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel(shape) != x.numel())
    throw ShapeError("reshape: cannot view " + toString(x.shape()) + " as " +
                     toString(shape));
  Node<T>* nx = x.raw();
  auto result = detail::record<T>("reshape", shape, {}, {&x},
                                  [nx](std::span<const T> g) {
                                    T* gx = detail::sink(nx);
                                    if (!gx) return;
                                    for (std::size_t i = 0; i < g.size(); ++i)
                                      gx[i] += g[i];
                                  });
  result.node()->value = x.node()->value;  // shares storage, never mutated
  return result;
}

template <typename T>
Tensor<T> broadcastTo(const Tensor<T>& x, const Shape& shape) {
  detail::requireFinite("broadcast", x);
  auto plan = detail::planBroadcast("broadcast", shape, x.shape());
  if (plan.out != shape)
    throw ShapeError("broadcast: " + toString(x.shape()) +
                     " cannot be expanded to " + toString(shape));
  std::vector<T> out(numel(shape));
  const T* px = x.values().data();
  detail::forEachBroadcast(plan, [&](std::size_t i, std::size_t, std::size_t ib) {
    out[i] = px[ib];
  });
  Node<T>* nx = x.raw();
  return detail::record<T>("broadcast", shape, std::move(out), {&x},
                           [plan, nx](std::span<const T> g) {
                             T* gx = detail::sink(nx);
                             if (!gx) return;
                             detail::forEachBroadcast(
                                 plan, [&](std::size_t i, std::size_t,
                                           std::size_t ib) { gx[ib] += g[i]; });
                           });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  Shape shape = parts[0].shape();
  if (axis >= shape.size()) throw ShapeError("concat: axis out of range");
  std::size_t total = 0;
  for (const auto& p : parts) {
    detail::requireFinite("concat", p);
    const auto& s = p.shape();
    bool ok = s.size() == shape.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i)
      ok = (i == axis) || s[i] == shape[i];
    if (!ok)
      throw ShapeError("concat: shapes " + toString(shape) + " and " +
                       toString(s) + " disagree off axis " + std::to_string(axis));
    total += s[axis];
  }
  shape[axis] = total;
  std::size_t outer, len, inner;
  detail::axisSplit(shape, axis, outer, len, inner);
  std::vector<T> out(numel(shape));
  std::size_t offset = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    const std::size_t plen = p.shape()[axis];
    const T* src = p.values().data();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(src + o * plen * inner, plen * inner,
                  out.data() + (o * len + offset) * inner);
    offset += plen;
  }
  std::vector<Node<T>*> nodes;
  std::vector<std::size_t> lens;
  for (const auto& p : parts) {
    nodes.push_back(p.raw());
    lens.push_back(p.shape()[axis]);
  }
  return detail::recordMany<T>(
      "concat", shape, std::move(out), parts,
      [nodes, lens, offsets, outer, len, inner](std::span<const T> g) {
        for (std::size_t k = 0; k < nodes.size(); ++k) {
          T* gp = detail::sink(nodes[k]);
          if (!gp) continue;
          for (std::size_t o = 0; o < outer; ++o) {
            const T* src = g.data() + (o * len + offsets[k]) * inner;
            T* dst = gp + o * lens[k] * inner;
            for (std::size_t j = 0; j < lens[k] * inner; ++j) dst[j] += src[j];
          }
        }
      });
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::size_t start,
                std::size_t length) {
  Shape shape = x.shape();
  if (axis >= shape.size() || length == 0 || start + length > shape[axis])
    throw ShapeError("slice: range [" + std::to_string(start) + ", " +
                     std::to_string(start + length) + ") on axis " +
                     std::to_string(axis) + " of " + toString(shape));
  detail::requireFinite("slice", x);
  std::size_t outer, len, inner;
  detail::axisSplit(shape, axis, outer, len, inner);
  shape[axis] = length;
  std::vector<T> out(numel(shape));
  const T* src = x.values().data();
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(src + (o * len + start) * inner, length * inner,
                out.data() + o * length * inner);
  Node<T>* nx = x.raw();
  return detail::record<T>("slice", shape, std::move(out), {&x},
                           [nx, outer, len, inner, start,
                            length](std::span<const T> g) {
                             T* gx = detail::sink(nx);
                             if (!gx) return;
                             for (std::size_t o = 0; o < outer; ++o) {
                               T* dst = gx + (o * len + start) * inner;
                               const T* s = g.data() + o * length * inner;
                               for (std::size_t j = 0; j < length * inner; ++j)
                                 dst[j] += s[j];
                             }
                           });
}

// Rows (leading-axis entries) of x at the given indices.
template <typename T>
Tensor<T> gatherRows(const Tensor<T>& x, const std::vector<std::size_t>& rows) {
  if (rows.empty()) throw ShapeError("gatherRows: empty index list");
  detail::requireFinite("gatherRows", x);
  const std::size_t n = x.dim(0);
  const std::size_t stride = x.numel() / n;
  for (auto r : rows)
    if (r >= n)
      throw ShapeError("gatherRows: row " + std::to_string(r) +
                       " out of range for " + toString(x.shape()));
  Shape shape = x.shape();
  shape[0] = rows.size();
  std::vector<T> out(rows.size() * stride);
  const T* src = x.values().data();
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(src + rows[i] * stride, stride, out.data() + i * stride);
  Node<T>* nx = x.raw();
  return detail::record<T>("gatherRows", shape, std::move(out), {&x},
                           [nx, rows, stride](std::span<const T> g) {
                             T* gx = detail::sink(nx);
                             if (!gx) return;
                             for (std::size_t i = 0; i < rows.size(); ++i)
                               for (std::size_t j = 0; j < stride; ++j)
                                 gx[rows[i] * stride + j] += g[i * stride + j];
                           });
}

// Places the rows of x at the given leading-axis positions of a zero tensor
// with `total` rows.
template <typename T>
Tensor<T> scatterRows(const Tensor<T>& x, const std::vector<std::size_t>& rows,
                      std::size_t total) {
  if (rows.size() != x.dim(0))
    throw ShapeError("scatterRows: " + std::to_string(rows.size()) +
                     " indices for " + toString(x.shape()));
  detail::requireFinite("scatterRows", x);
  const std::size_t stride = x.numel() / x.dim(0);
  Shape shape = x.shape();
  shape[0] = total;
  std::vector<T> out(total * stride, T(0));
  const T* src = x.values().data();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= total) throw ShapeError("scatterRows: row out of range");
    for (std::size_t j = 0; j < stride; ++j)
      out[rows[i] * stride + j] += src[i * stride + j];
  }
  Node<T>* nx = x.raw();
  return detail::record<T>("scatterRows", shape, std::move(out), {&x},
                           [nx, rows, stride](std::span<const T> g) {
                             T* gx = detail::sink(nx);
                             if (!gx) return;
                             for (std::size_t i = 0; i < rows.size(); ++i)
                               for (std::size_t j = 0; j < stride; ++j)
                                 gx[i * stride + j] += g[rows[i] * stride + j];
                           });
}

// Forward value `hard + (soft - anchor)`, gradient routed entirely to `soft`.
// With anchor equal to soft's own value the forward result is exactly `hard`
// (the straight-through estimator); holding a stale anchor fixed turns the
// same expression into a smooth surrogate for finite-difference checks.
template <typename T>
Tensor<T> straightThrough(const std::vector<T>& hard, const Tensor<T>& soft,
                          const std::vector<T>& anchor) {
  if (hard.size() != soft.numel() || anchor.size() != soft.numel())
    throw ShapeError("straightThrough: size mismatch");
  detail::requireFinite("straightThrough", soft);
  std::vector<T> out(hard.size());
  const T* ps = soft.values().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = hard[i] + (ps[i] - anchor[i]);
  Node<T>* ns = soft.raw();
  return detail::record<T>("straightThrough", soft.shape(), std::move(out),
                           {&soft}, [ns](std::span<const T> g) {
                             T* gs = detail::sink(ns);
                             if (!gs) return;
                             for (std::size_t i = 0; i < g.size(); ++i) gs[i] += g[i];
                           });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

// Sum over `axes`; reduced axes are kept as size 1 when keepDims, dropped
// otherwise (a full reduction yields shape [1]).
template <typename T>
Tensor<T> sum(const Tensor<T>& x, const std::vector<std::size_t>& axes,
              bool keepDims = false) {
  detail::requireFinite("sum", x);
  Shape kept = x.shape();
  for (auto a : axes) {
    if (a >= kept.size()) throw ShapeError("sum: axis out of range for " + toString(x.shape()));
    kept[a] = 1;
  }
  auto plan = detail::planBroadcast("sum", x.shape(), kept);
  std::vector<T> out(numel(kept), T(0));
  const T* px = x.values().data();
  detail::forEachBroadcast(plan, [&](std::size_t i, std::size_t, std::size_t ib) {
    out[ib] += px[i];
  });
  Shape shape;
  if (keepDims) {
    shape = kept;
  } else {
    for (std::size_t i = 0; i < kept.size(); ++i)
      if (std::find(axes.begin(), axes.end(), i) == axes.end()) shape.push_back(kept[i]);
    if (shape.empty()) shape = {1};
  }
  Node<T>* nx = x.raw();
  return detail::record<T>("sum", shape, std::move(out), {&x},
                           [plan, nx](std::span<const T> g) {
                             T* gx = detail::sink(nx);
                             if (!gx) return;
                             detail::forEachBroadcast(
                                 plan, [&](std::size_t i, std::size_t,
                                           std::size_t ib) { gx[i] += g[ib]; });
                           });
}

template <typename T>
Tensor<T> sumAll(const Tensor<T>& x) {
  std::vector<std::size_t> axes(x.rank());
  std::iota(axes.begin(), axes.end(), 0);
  return sum(x, axes);
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x, const std::vector<std::size_t>& axes,
               bool keepDims = false) {
  std::size_t count = 1;
  for (auto a : axes) count *= x.shape().at(a);
  auto s = sum(x, axes, keepDims);
  // Folded into one node so `mean` is a primitive in its own right.
  const T inv = T(1) / T(count);
  std::vector<T> out(s.values().begin(), s.values().end());
  for (auto& v : out) v *= inv;
  Node<T>* ns = s.raw();
  return detail::record<T>("mean", s.shape(), std::move(out), {&s},
                           [ns, inv](std::span<const T> g) {
                             T* gs = detail::sink(ns);
                             if (!gs) return;
                             for (std::size_t i = 0; i < g.size(); ++i) gs[i] += g[i] * inv;
                           });
}

template <typename T>
Tensor<T> meanAll(const Tensor<T>& x) {
  std::vector<std::size_t> axes(x.rank());
  std::iota(axes.begin(), axes.end(), 0);
  return mean(x, axes);
}

// [N,C,H,W] -> [N,C]
template <typename T>
Tensor<T> globalAveragePool(const Tensor<T>& x) {
  detail::requireRank("globalAveragePool", x.shape(), 4);
  detail::requireFinite("globalAveragePool", x);
  const std::size_t nc = x.dim(0) * x.dim(1);
  const std::size_t hw = x.dim(2) * x.dim(3);
  std::vector<T> out(nc);
  const T* px = x.values().data();
  for (std::size_t i = 0; i < nc; ++i) {
    T acc = T(0);
    for (std::size_t j = 0; j < hw; ++j) acc += px[i * hw + j];
    out[i] = acc / T(hw);
  }
  Node<T>* nx = x.raw();
  return detail::record<T>("globalAveragePool", {x.dim(0), x.dim(1)}, std::move(out),
                           {&x}, [nx, nc, hw](std::span<const T> g) {
                             T* gx = detail::sink(nx);
                             if (!gx) return;
                             for (std::size_t i = 0; i < nc; ++i) {
                               const T v = g[i] / T(hw);
                               for (std::size_t j = 0; j < hw; ++j) gx[i * hw + j] += v;
                             }
                           });
}

// ---------------------------------------------------------------------------
// Softmax family
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
  if (axis >= x.rank()) throw ShapeError("softmax: axis out of range");
  detail::requireFinite("softmax", x);
  std::size_t outer, len, inner;
  detail::axisSplit(x.shape(), axis, outer, len, inner);
  std::vector<T> out(x.numel());
  const T* px = x.values().data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * len * inner + i;
      T mx = px[base];
      for (std::size_t k = 1; k < len; ++k) mx = std::max(mx, px[base + k * inner]);
      T z = T(0);
      for (std::size_t k = 0; k < len; ++k) {
        out[base + k * inner] = std::exp(px[base + k * inner] - mx);
        z += out[base + k * inner];
      }
      for (std::size_t k = 0; k < len; ++k) out[base + k * inner] /= z;
    }
  auto result = detail::record<T>("softmax", x.shape(), std::move(out), {&x}, nullptr);
  if (result.requiresGrad()) {
    auto vy = result.node()->value;
    Node<T>* nx = x.raw();
    result.node()->backward = [vy, nx, outer, len, inner](std::span<const T> g) {
      T* gx = detail::sink(nx);
      if (!gx) return;
      const T* y = vy->data();
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < inner; ++i) {
          const std::size_t base = o * len * inner + i;
          T dot = T(0);
          for (std::size_t k = 0; k < len; ++k)
            dot += g[base + k * inner] * y[base + k * inner];
          for (std::size_t k = 0; k < len; ++k)
            gx[base + k * inner] += y[base + k * inner] * (g[base + k * inner] - dot);
        }
    };
  }
  return result;
}

template <typename T>
Tensor<T> logSoftmax(const Tensor<T>& x, std::size_t axis) {
  if (axis >= x.rank()) throw ShapeError("logSoftmax: axis out of range");
  detail::requireFinite("logSoftmax", x);
  std::size_t outer, len, inner;
  detail::axisSplit(x.shape(), axis, outer, len, inner);
  std::vector<T> out(x.numel());
  const T* px = x.values().data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * len * inner + i;
      T mx = px[base];
      for (std::size_t k = 1; k < len; ++k) mx = std::max(mx, px[base + k * inner]);
      T z = T(0);
      for (std::size_t k = 0; k < len; ++k) z += std::exp(px[base + k * inner] - mx);
      const T lse = mx + std::log(z);
      for (std::size_t k = 0; k < len; ++k) out[base + k * inner] = px[base + k * inner] - lse;
    }
  auto result = detail::record<T>("logSoftmax", x.shape(), std::move(out), {&x}, nullptr);
  if (result.requiresGrad()) {
    auto vy = result.node()->value;
    Node<T>* nx = x.raw();
    result.node()->backward = [vy, nx, outer, len, inner](std::span<const T> g) {
      T* gx = detail::sink(nx);
      if (!gx) return;
      const T* y = vy->data();
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < inner; ++i) {
          const std::size_t base = o * len * inner + i;
          T gs = T(0);
          for (std::size_t k = 0; k < len; ++k) gs += g[base + k * inner];
          for (std::size_t k = 0; k < len; ++k)
            gx[base + k * inner] += g[base + k * inner] - std::exp(y[base + k * inner]) * gs;
        }
    };
  }
  return result;
}

// ---------------------------------------------------------------------------
// Linear algebra and convolution
// ---------------------------------------------------------------------------

// [M,K] x [K,N] -> [M,N]
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw ShapeError("matmul: shapes " + toString(a.shape()) + " and " +
                     toString(b.shape()) + " are not conformable");
  detail::requireFinite("matmul", a);
  detail::requireFinite("matmul", b);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<T> out(m * n);
  detail::MapMatrix<T>(out.data(), m, n).noalias() =
      detail::ConstMapMatrix<T>(a.values().data(), m, k) *
      detail::ConstMapMatrix<T>(b.values().data(), k, n);
  auto va = a.node()->value;
  auto vb = b.node()->value;
  Node<T>* na = a.raw();
  Node<T>* nb = b.raw();
  return detail::record<T>(
      "matmul", {m, n}, std::move(out), {&a, &b},
      [va, vb, na, nb, m, k, n](std::span<const T> g) {
        detail::ConstMapMatrix<T> G(g.data(), m, n);
        if (T* ga = detail::sink(na))
          detail::MapMatrix<T>(ga, m, k).noalias() +=
              G * detail::ConstMapMatrix<T>(vb->data(), k, n).transpose();
        if (T* gb = detail::sink(nb))
          detail::MapMatrix<T>(gb, k, n).noalias() +=
              detail::ConstMapMatrix<T>(va->data(), m, k).transpose() * G;
      });
}

struct ConvGeometry {
  std::size_t batch, channels, height, width;
  std::size_t filters, kernel, stride, pad;
  std::size_t outHeight, outWidth;

  std::size_t patch() const { return channels * kernel * kernel; }
  std::size_t columns() const { return batch * outHeight * outWidth; }
};

inline std::size_t convOutputExtent(std::size_t in, std::size_t kernel,
                                    std::size_t stride, std::size_t pad) {
  const long long span = static_cast<long long>(in + 2 * pad) - static_cast<long long>(kernel);
  if (span < 0) return 0;
  return static_cast<std::size_t>(span) / stride + 1;
}

namespace detail {

// Valid output columns [lo, hi) for kernel column kj: those whose input
// column ow*stride + kj - pad lies inside [0, width).
inline void validColumns(const ConvGeometry& g, std::size_t kj, std::size_t& lo,
                         std::size_t& hi) {
  const long long pad = static_cast<long long>(g.pad), s = static_cast<long long>(g.stride);
  const long long first = pad - static_cast<long long>(kj);  // ow*s >= first
  const long long last = static_cast<long long>(g.width) + pad - static_cast<long long>(kj);
  long long l = first <= 0 ? 0 : (first + s - 1) / s;
  long long h = last <= 0 ? 0 : (last + s - 1) / s;  // ow*s < last
  h = std::min<long long>(h, static_cast<long long>(g.outWidth));
  l = std::min(l, h);
  lo = static_cast<std::size_t>(l);
  hi = static_cast<std::size_t>(h);
}

// Unfolds the receptive fields of output rows [oh0, oh1) of one sample plane
// stack x [C,H,W] into col [C*k*k, (oh1-oh0)*Wo], zero outside the image.
template <typename T>
void im2col(const ConvGeometry& g, const T* x, std::size_t oh0, std::size_t oh1, T* col) {
  const std::size_t cols = (oh1 - oh0) * g.outWidth;
  for (std::size_t c = 0; c < g.channels; ++c)
    for (std::size_t ki = 0; ki < g.kernel; ++ki)
      for (std::size_t kj = 0; kj < g.kernel; ++kj) {
        T* row = col + ((c * g.kernel + ki) * g.kernel + kj) * cols;
        const T* plane = x + c * g.height * g.width;
        std::size_t lo, hi;
        validColumns(g, kj, lo, hi);
        const long long offset = static_cast<long long>(kj) - static_cast<long long>(g.pad);
        for (std::size_t oh = oh0; oh < oh1; ++oh) {
          T* drow = row + (oh - oh0) * g.outWidth;
          const long long ih = static_cast<long long>(oh * g.stride + ki) -
                               static_cast<long long>(g.pad);
          if (ih < 0 || ih >= static_cast<long long>(g.height) || lo == hi) {
            std::fill_n(drow, g.outWidth, T(0));
            continue;
          }
          const T* srow = plane + ih * static_cast<long long>(g.width) + offset;
          std::fill_n(drow, lo, T(0));
          if (g.stride == 1) {
            std::copy(srow + lo, srow + hi, drow + lo);
          } else {
            for (std::size_t ow = lo; ow < hi; ++ow) drow[ow] = srow[ow * g.stride];
          }
          std::fill(drow + hi, drow + g.outWidth, T(0));
        }
      }
}

// Adjoint of im2col: scatters col back into x, accumulating.
template <typename T>
void col2im(const ConvGeometry& g, const T* col, std::size_t oh0, std::size_t oh1, T* x) {
  const std::size_t cols = (oh1 - oh0) * g.outWidth;
  for (std::size_t c = 0; c < g.channels; ++c)
    for (std::size_t ki = 0; ki < g.kernel; ++ki)
      for (std::size_t kj = 0; kj < g.kernel; ++kj) {
        const T* row = col + ((c * g.kernel + ki) * g.kernel + kj) * cols;
        T* plane = x + c * g.height * g.width;
        std::size_t lo, hi;
        validColumns(g, kj, lo, hi);
        const long long offset = static_cast<long long>(kj) - static_cast<long long>(g.pad);
        for (std::size_t oh = oh0; oh < oh1; ++oh) {
          const long long ih = static_cast<long long>(oh * g.stride + ki) -
                               static_cast<long long>(g.pad);
          if (ih < 0 || ih >= static_cast<long long>(g.height)) continue;
          const T* srow = row + (oh - oh0) * g.outWidth;
          T* drow = plane + ih * static_cast<long long>(g.width) + offset;
          if (g.stride == 1) {
            T* __restrict d = drow;
            const T* __restrict sr = srow;
            for (std::size_t ow = lo; ow < hi; ++ow) d[ow] += sr[ow];
          } else {
            for (std::size_t ow = lo; ow < hi; ++ow) drow[ow * g.stride] += srow[ow];
          }
        }
      }
}

// Output rows per im2col chunk so one chunk's columns stay cache resident.
inline std::size_t convChunkRows(const ConvGeometry& g, std::size_t scalarBytes) {
  constexpr std::size_t kBudget = std::size_t{1} << 19;
  const std::size_t rowBytes = g.patch() * g.outWidth * scalarBytes;
  return std::clamp<std::size_t>(kBudget / std::max<std::size_t>(rowBytes, 1), 1, g.outHeight);
}

// Column-major views of the same row-major buffers (i.e. their transposes):
// Eigen's kernels are fastest with the long pixel dimension as rows.
template <typename T>
using ColMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>;
template <typename T>
using ColMap = Eigen::Map<ColMatrix<T>>;
template <typename T>
using ConstColMap = Eigen::Map<const ColMatrix<T>>;
template <typename T>
using StridedColMap = Eigen::Map<ColMatrix<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using ConstStridedColMap = Eigen::Map<const ColMatrix<T>, 0, Eigen::OuterStride<>>;

}  // namespace detail

// x [N,C,H,W], weight [F,C,k,k], optional bias [F]; zero padding `pad` on
// every border. Output [N,F,Ho,Wo] with Ho = floor((H + 2p - k)/s) + 1.
//
// Each sample is processed in chunks of output rows: unfold the chunk
// (im2col), then one GEMM writes its [F, rows*Wo] block of the output.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>* bias,
                 std::size_t stride, std::size_t pad) {
  detail::requireRank("conv2d", x.shape(), 4);
  detail::requireRank("conv2d", weight.shape(), 4);
  const std::size_t k = weight.dim(2);
  if (weight.dim(3) != k || weight.dim(1) != x.dim(1) || stride == 0)
    throw ShapeError("conv2d: input " + toString(x.shape()) +
                     " does not match weight " + toString(weight.shape()));
  if (bias && (bias->rank() != 1 || bias->dim(0) != weight.dim(0)))
    throw ShapeError("conv2d: bias " + toString(bias->shape()) +
                     " does not match weight " + toString(weight.shape()));
  detail::requireFinite("conv2d", x);
  detail::requireFinite("conv2d", weight);
  if (bias) detail::requireFinite("conv2d", *bias);

  ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), weight.dim(0), k, stride, pad, 0, 0};
  g.outHeight = convOutputExtent(g.height, k, stride, pad);
  g.outWidth = convOutputExtent(g.width, k, stride, pad);
  if (g.outHeight == 0 || g.outWidth == 0)
    throw ShapeError("conv2d: kernel " + std::to_string(k) + " does not fit input " +
                     toString(x.shape()));

  const std::size_t ohw = g.outHeight * g.outWidth;
  const std::size_t inPlane = g.channels * g.height * g.width;
  const std::size_t chunk = detail::convChunkRows(g, sizeof(T));
  std::vector<T> out(g.batch * g.filters * ohw);
  std::vector<T> col(g.patch() * chunk * g.outWidth);
  // W^T [P,F]
  detail::ConstColMap<T> weightT(weight.values().data(), g.patch(), g.filters);
  const T* px = x.values().data();
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t oh0 = 0; oh0 < g.outHeight; oh0 += chunk) {
      const std::size_t oh1 = std::min(oh0 + chunk, g.outHeight);
      const std::size_t cols = (oh1 - oh0) * g.outWidth;
      detail::im2col(g, px + n * inPlane, oh0, oh1, col.data());
      // out^T [cols,F] = col^T [cols,P] * W^T [P,F]
      detail::StridedColMap<T>(out.data() + n * g.filters * ohw + oh0 * g.outWidth, cols,
                               g.filters, Eigen::OuterStride<>(ohw))
          .noalias() = detail::ConstColMap<T>(col.data(), cols, g.patch()) * weightT;
    }
  if (bias) {
    const T* pb = bias->values().data();
    for (std::size_t n = 0; n < g.batch; ++n)
      for (std::size_t f = 0; f < g.filters; ++f) {
        T* dst = out.data() + (n * g.filters + f) * ohw;
        for (std::size_t j = 0; j < ohw; ++j) dst[j] += pb[f];
      }
  }

  auto vx = x.node()->value;
  auto vw = weight.node()->value;
  Node<T>* nx = x.raw();
  Node<T>* nw = weight.raw();
  Node<T>* nb = bias ? bias->raw() : nullptr;
  BackwardFn<T> fn = [g, vx, vw, nx, nw, nb, chunk](std::span<const T> grad) {
    const std::size_t ohw = g.outHeight * g.outWidth;
    const std::size_t inPlane = g.channels * g.height * g.width;
    if (T* gb = nb ? detail::sink(nb) : nullptr)
      for (std::size_t n = 0; n < g.batch; ++n)
        for (std::size_t f = 0; f < g.filters; ++f) {
          const T* src = grad.data() + (n * g.filters + f) * ohw;
          T acc = T(0);
          for (std::size_t j = 0; j < ohw; ++j) acc += src[j];
          gb[f] += acc;
        }
    T* gw = detail::sink(nw);
    T* gx = detail::sink(nx);
    if (!gw && !gx) return;
    std::vector<T> col(g.patch() * chunk * g.outWidth);
    detail::ConstColMap<T> weightT(vw->data(), g.patch(), g.filters);
    for (std::size_t n = 0; n < g.batch; ++n)
      for (std::size_t oh0 = 0; oh0 < g.outHeight; oh0 += chunk) {
        const std::size_t oh1 = std::min(oh0 + chunk, g.outHeight);
        const std::size_t cols = (oh1 - oh0) * g.outWidth;
        // G^T [cols,F]
        detail::ConstStridedColMap<T> gradT(grad.data() + n * g.filters * ohw + oh0 * g.outWidth,
                                            cols, g.filters, Eigen::OuterStride<>(ohw));
        if (gw) {
          // gW^T [P,F] += col [P,cols] * G^T
          detail::im2col(g, vx->data() + n * inPlane, oh0, oh1, col.data());
          detail::ColMap<T>(gw, g.patch(), g.filters).noalias() +=
              detail::ConstColMap<T>(col.data(), cols, g.patch()).transpose() * gradT;
        }
        if (gx) {
          // dcol^T [cols,P] = G^T * W
          detail::ColMap<T>(col.data(), cols, g.patch()).noalias() = gradT * weightT.transpose();
          detail::col2im(g, col.data(), oh0, oh1, gx + n * inPlane);
        }
      }
  };
  Shape shape{g.batch, g.filters, g.outHeight, g.outWidth};
  if (bias) return detail::record<T>("conv2d", shape, std::move(out), {&x, &weight, bias}, fn);
  return detail::record<T>("conv2d", shape, std::move(out), {&x, &weight}, fn);
}

enum class PadMode { kZero, kReflect };

// Pads H and W by `amount` on each side. Reflection excludes the edge sample
// (amount < extent required).
template <typename T>
Tensor<T> pad(const Tensor<T>& x, std::size_t amount, PadMode mode) {
  detail::requireRank("pad", x.shape(), 4);
  detail::requireFinite("pad", x);
  const std::size_t nc = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  if (mode == PadMode::kReflect && (amount >= h || amount >= w))
    throw ShapeError("pad: reflection of " + std::to_string(amount) +
                     " exceeds input " + toString(x.shape()));
  const std::size_t ph = h + 2 * amount, pw = w + 2 * amount;
  // source index per padded coordinate, -1 for zero fill
  auto mapIndex = [&](long long i, std::size_t extent) -> long long {
    const long long e = static_cast<long long>(extent);
    long long s = i - static_cast<long long>(amount);
    if (s >= 0 && s < e) return s;
    if (mode == PadMode::kZero) return -1;
    if (s < 0) return -s;
    return 2 * (e - 1) - s;
  };
  std::vector<long long> rowMap(ph), colMap(pw);
  for (std::size_t i = 0; i < ph; ++i) rowMap[i] = mapIndex(static_cast<long long>(i), h);
  for (std::size_t j = 0; j < pw; ++j) colMap[j] = mapIndex(static_cast<long long>(j), w);
  std::vector<T> out(nc * ph * pw, T(0));
  const T* px = x.values().data();
  for (std::size_t p = 0; p < nc; ++p)
    for (std::size_t i = 0; i < ph; ++i) {
      if (rowMap[i] < 0) continue;
      for (std::size_t j = 0; j < pw; ++j)
        if (colMap[j] >= 0)
          out[(p * ph + i) * pw + j] = px[(p * h + rowMap[i]) * w + colMap[j]];
    }
  Node<T>* nx = x.raw();
  return detail::record<T>("pad", {x.dim(0), x.dim(1), ph, pw}, std::move(out), {&x},
                           [nx, nc, h, w, ph, pw, rowMap, colMap](std::span<const T> g) {
                             T* gx = detail::sink(nx);
                             if (!gx) return;
                             for (std::size_t p = 0; p < nc; ++p)
                               for (std::size_t i = 0; i < ph; ++i) {
                                 if (rowMap[i] < 0) continue;
                                 for (std::size_t j = 0; j < pw; ++j)
                                   if (colMap[j] >= 0)
                                     gx[(p * h + rowMap[i]) * w + colMap[j]] +=
                                         g[(p * ph + i) * pw + j];
                               }
                           });
}

template <typename T>
Tensor<T> upsampleNearest2x(const Tensor<T>& x) {
  detail::requireRank("upsampleNearest2x", x.shape(), 4);
  detail::requireFinite("upsampleNearest2x", x);
  const std::size_t nc = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  std::vector<T> out(nc * 4 * h * w);
  const T* px = x.values().data();
  for (std::size_t p = 0; p < nc; ++p)
    for (std::size_t i = 0; i < 2 * h; ++i) {
      const T* src = px + (p * h + i / 2) * w;
      T* dst = out.data() + (p * 2 * h + i) * 2 * w;
      for (std::size_t j = 0; j < 2 * w; ++j) dst[j] = src[j / 2];
    }
  Node<T>* nx = x.raw();
  return detail::record<T>("upsampleNearest2x", {x.dim(0), x.dim(1), 2 * h, 2 * w},
                           std::move(out), {&x}, [nx, nc, h, w](std::span<const T> g) {
                             T* gx = detail::sink(nx);
                             if (!gx) return;
                             for (std::size_t p = 0; p < nc; ++p)
                               for (std::size_t i = 0; i < 2 * h; ++i) {
                                 const T* src = g.data() + (p * 2 * h + i) * 2 * w;
                                 T* dst = gx + (p * h + i / 2) * w;
                                 for (std::size_t j = 0; j < 2 * w; ++j) dst[j / 2] += src[j];
                               }
                           });
}

// Non-overlapping 2x2 mean; H and W must be even.
template <typename T>
Tensor<T> avgPool2x2(const Tensor<T>& x) {
  detail::requireRank("avgPool2x2", x.shape(), 4);
  if (x.dim(2) % 2 || x.dim(3) % 2)
    throw ShapeError("avgPool2x2: odd spatial extent in " + toString(x.shape()));
  detail::requireFinite("avgPool2x2", x);
  const std::size_t nc = x.dim(0) * x.dim(1), h = x.dim(2) / 2, w = x.dim(3) / 2;
  std::vector<T> out(nc * h * w);
  const T* px = x.values().data();
  for (std::size_t p = 0; p < nc; ++p)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        const T* a = px + (p * 2 * h + 2 * i) * 2 * w + 2 * j;
        out[(p * h + i) * w + j] = (a[0] + a[1] + a[2 * w] + a[2 * w + 1]) * T(0.25);
      }
  Node<T>* nx = x.raw();
  return detail::record<T>("avgPool2x2", {x.dim(0), x.dim(1), h, w}, std::move(out), {&x},
                           [nx, nc, h, w](std::span<const T> g) {
                             T* gx = detail::sink(nx);
                             if (!gx) return;
                             for (std::size_t p = 0; p < nc; ++p)
                               for (std::size_t i = 0; i < h; ++i)
                                 for (std::size_t j = 0; j < w; ++j) {
                                   const T v = g[(p * h + i) * w + j] * T(0.25);
                                   T* a = gx + (p * 2 * h + 2 * i) * 2 * w + 2 * j;
                                   a[0] += v;
                                   a[1] += v;
                                   a[2 * w] += v;
                                   a[2 * w + 1] += v;
                                 }
                           });
}

// Per-(sample, channel) standardization over H*W with biased variance:
// (x - mean) / sqrt(var + eps).
template <typename T>
Tensor<T> instanceNorm(const Tensor<T>& x, T eps) {
  detail::requireRank("instanceNorm", x.shape(), 4);
  detail::requireFinite("instanceNorm", x);
  const std::size_t nc = x.dim(0) * x.dim(1), hw = x.dim(2) * x.dim(3);
  if (hw < 2 && eps == T(0))
    throw NumericError("instanceNorm: single spatial element with eps = 0 divides by zero");
  std::vector<T> out(x.numel());
  std::vector<T> invStd(nc);
  const T* px = x.values().data();
  for (std::size_t p = 0; p < nc; ++p) {
    const T* a = px + p * hw;
    T mu = T(0);
    for (std::size_t j = 0; j < hw; ++j) mu += a[j];
    mu /= T(hw);
    T var = T(0);
    for (std::size_t j = 0; j < hw; ++j) var += (a[j] - mu) * (a[j] - mu);
    var /= T(hw);
    if (var + eps <= T(0))
      throw NumericError("instanceNorm: zero variance with eps = 0");
    const T is = T(1) / std::sqrt(var + eps);
    invStd[p] = is;
    T* o = out.data() + p * hw;
    for (std::size_t j = 0; j < hw; ++j) o[j] = (a[j] - mu) * is;
  }
  auto result = detail::record<T>("instanceNorm", x.shape(), std::move(out), {&x}, nullptr);
  if (result.requiresGrad()) {
    auto vy = result.node()->value;
    Node<T>* nx = x.raw();
    result.node()->backward = [vy, nx, invStd, nc, hw](std::span<const T> g) {
      T* gx = detail::sink(nx);
      if (!gx) return;
      const T* y = vy->data();
      for (std::size_t p = 0; p < nc; ++p) {
        const T* gy = g.data() + p * hw;
        const T* yy = y + p * hw;
        T mg = T(0), mgy = T(0);
        for (std::size_t j = 0; j < hw; ++j) {
          mg += gy[j];
          mgy += gy[j] * yy[j];
        }
        mg /= T(hw);
        mgy /= T(hw);
        T* o = gx + p * hw;
        for (std::size_t j = 0; j < hw; ++j) o[j] += invStd[p] * (gy[j] - mg - yy[j] * mgy);
      }
    };
  }
  return result;
}

}  // namespace ada2net::nd
