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


// Frechet distance between Gaussian fits of two feature sets:
//
//   FID = |m_r - m_g|^2 + Tr(C_r + C_g - 2 (C_r C_g)^(1/2))
//
// The trace term is taken from sqrt(C_r^(1/2) C_g C_r^(1/2)), which is
// symmetric PSD and similar to (C_r C_g)^(1/2), so only symmetric
// eigendecompositions are needed. Everything here runs in double.

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "ada2net/error.hpp"

namespace ada2net::metrics {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct GaussianStats {
  Vector mean;
  Matrix cov;  // unbiased (n - 1)

  Eigen::Index dim() const { return mean.size(); }
};

// Rows are samples.
inline GaussianStats fitStats(const Matrix& features) {
  if (features.rows() < 2)
    throw NumericError("fitStats: need at least 2 samples, got " +
                       std::to_string(features.rows()));
  GaussianStats s;
  s.mean = features.colwise().mean().transpose();
  const Matrix centered = features.rowwise() - s.mean.transpose();
  s.cov = (centered.transpose() * centered) / static_cast<double>(features.rows() - 1);
  return s;
}

namespace detail {

inline void requireSymmetric(const Matrix& m, const char* what) {
  if (m.rows() != m.cols())
    throw ShapeError(std::string(what) + ": matrix is not square");
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale)
    throw NumericError(std::string(what) + ": matrix is not symmetric");
}

// V diag(f(max(lambda, 0))) V^T for symmetric m.
template <typename F>
Matrix spectralMap(const Matrix& m, F f) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (m + m.transpose()));
  if (eig.info() != Eigen::Success) throw NumericError("eigendecomposition did not converge");
  Vector mapped = eig.eigenvalues().unaryExpr([&](double l) { return f(std::max(l, 0.0)); });
  return eig.eigenvectors() * mapped.asDiagonal() * eig.eigenvectors().transpose();
}

inline Matrix symmetricSqrt(const Matrix& m) {
  return spectralMap(m, [](double l) { return std::sqrt(l); });
}

// sqrt(Cr^(1/2) Cg Cr^(1/2)), the symmetric core of (Cr Cg)^(1/2).
inline Matrix sqrtProductCore(const Matrix& rootCr, const Matrix& cg) {
  return symmetricSqrt(rootCr * cg * rootCr);
}

}  // namespace detail

// A square root of Cr Cg: S = Cr^(1/2) sqrt(Cr^(1/2) Cg Cr^(1/2)) Cr^(-1/2),
// with a pseudo-inverse when Cr is singular. Tr(S) equals the trace used
// by fid().
inline Matrix matrixSqrtProduct(const Matrix& cr, const Matrix& cg) {
  detail::requireSymmetric(cr, "matrixSqrtProduct");
  detail::requireSymmetric(cg, "matrixSqrtProduct");
  if (cr.rows() != cg.rows()) throw ShapeError("matrixSqrtProduct: dimension mismatch");
  const Matrix rootCr = detail::symmetricSqrt(cr);
  const double largest = std::max(cr.cwiseAbs().maxCoeff(), 1e-300);
  const Matrix invRootCr = detail::spectralMap(cr, [&](double l) {
    return l > 1e-14 * largest ? 1.0 / std::sqrt(l) : 0.0;
  });
  return rootCr * detail::sqrtProductCore(rootCr, cg) * invRootCr;
}

inline double fid(const GaussianStats& r, const GaussianStats& g) {
  if (r.dim() != g.dim() || r.cov.rows() != r.dim() || g.cov.rows() != g.dim())
    throw ShapeError("fid: feature dimensions " + std::to_string(r.dim()) + " and " +
                     std::to_string(g.dim()));
  detail::requireSymmetric(r.cov, "fid");
  detail::requireSymmetric(g.cov, "fid");
  // Same statistics: the distance is zero by definition; skip the
  // round-off of two eigendecompositions.
  if (r.mean == g.mean && r.cov == g.cov) return 0.0;
  const double meanTerm = (r.mean - g.mean).squaredNorm();
  const Matrix core = detail::sqrtProductCore(detail::symmetricSqrt(r.cov), g.cov);
  const double value = meanTerm + r.cov.trace() + g.cov.trace() - 2.0 * core.trace();
  const double tolerance = 1e-6 * std::max(1.0, r.cov.trace() + g.cov.trace() + meanTerm);
  if (value < -tolerance)
    throw NumericError("fid: negative distance " + std::to_string(value));
  return std::max(value, 0.0);
}

}  // namespace ada2net::metrics
