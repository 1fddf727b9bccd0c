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

#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "ada2net/metrics/complexity.hpp"
#include "ada2net/metrics/evaluate.hpp"

namespace ada2net::metrics {
namespace {

Matrix gaussianSamples(Eigen::Index n, const Vector& mean, const Matrix& root, Rng& rng) {
  Matrix z(n, mean.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = rng.normal();
  return (z * root.transpose()).rowwise() + mean.transpose();
}

Matrix randomSpd(Eigen::Index f, Rng& rng) {
  Matrix a(f, f);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = rng.normal() / std::sqrt(f);
  return a * a.transpose() + 0.1 * Matrix::Identity(f, f);
}

// Tr((Cr Cg)^(1/2)) as the sum of square roots of the (real, non-negative)
// eigenvalues of the product.
double traceSqrtOracle(const Matrix& cr, const Matrix& cg) {
  Eigen::EigenSolver<Matrix> eig(cr * cg);
  double t = 0.0;
  for (const auto& l : eig.eigenvalues()) t += std::sqrt(std::max(l.real(), 0.0));
  return t;
}

TEST(FitStats, TwoPointExample) {
  Matrix x(2, 2);
  x << 0, 0, 2, 2;
  const auto s = fitStats(x);
  EXPECT_EQ(s.mean, (Vector(2) << 1, 1).finished());
  EXPECT_EQ(s.cov, (Matrix(2, 2) << 2, 2, 2, 2).finished());
}

TEST(FitStats, IdenticalRowsHaveZeroCovariance) {
  Matrix x = Matrix::Constant(5, 3, 0.7);
  EXPECT_EQ(fitStats(x).cov, Matrix::Zero(3, 3));
}

TEST(FitStats, SingleSampleIsAnError) {
  EXPECT_THROW(fitStats(Matrix::Zero(1, 4)), NumericError);
}

TEST(FitStats, RecoversKnownGaussian) {
  Rng rng(1);
  const Vector mean = (Vector(3) << 1.0, -2.0, 0.5).finished();
  const Matrix cov = randomSpd(3, rng);
  const Matrix root = Eigen::LLT<Matrix>(cov).matrixL();
  const auto s = fitStats(gaussianSamples(200000, mean, root, rng));
  EXPECT_LT((s.mean - mean).cwiseAbs().maxCoeff(), 0.02);
  EXPECT_LT((s.cov - cov).cwiseAbs().maxCoeff(), 0.02);
}

TEST(MatrixSqrt, IdentityAndScaledIdentity) {
  EXPECT_TRUE(matrixSqrtProduct(Matrix::Identity(3, 3), Matrix::Identity(3, 3))
                  .isApprox(Matrix::Identity(3, 3), 1e-12));
  EXPECT_TRUE(matrixSqrtProduct(4 * Matrix::Identity(3, 3), Matrix::Identity(3, 3))
                  .isApprox(2 * Matrix::Identity(3, 3), 1e-12));
}

TEST(MatrixSqrt, SquaresBackToProduct) {
  Rng rng(2);
  for (Eigen::Index f : {2, 5, 16, 64}) {
    const Matrix cr = randomSpd(f, rng), cg = randomSpd(f, rng);
    const Matrix s = matrixSqrtProduct(cr, cg);
    const Matrix product = cr * cg;
    EXPECT_LT((s * s - product).norm() / product.norm(), 1e-6) << "F=" << f;
    EXPECT_NEAR(s.trace(), traceSqrtOracle(cr, cg), 1e-6 * std::max(1.0, s.trace()));
  }
}

TEST(Fid, SameStatisticsGiveZero) {
  Rng rng(3);
  const auto s = fitStats(gaussianSamples(50, Vector::Zero(6), Matrix::Identity(6, 6), rng));
  EXPECT_LE(fid(s, s), 1e-6);
}

TEST(Fid, OneDimensionalMeanShift) {
  GaussianStats a{Vector::Constant(1, 0.0), Matrix::Constant(1, 1, 1.0)};
  GaussianStats b{Vector::Constant(1, 1.0), Matrix::Constant(1, 1, 1.0)};
  EXPECT_DOUBLE_EQ(fid(a, b), 1.0);
}

TEST(Fid, MeanShiftWithIdentityCovariance) {
  GaussianStats a{Vector::Zero(2), Matrix::Identity(2, 2)};
  GaussianStats b{(Vector(2) << 3.0, 4.0).finished(), Matrix::Identity(2, 2)};
  EXPECT_NEAR(fid(a, b), 25.0, 1e-9);
}

TEST(Fid, IsSymmetric) {
  Rng rng(4);
  for (int rep = 0; rep < 5; ++rep) {
    GaussianStats a{Vector::Random(7), randomSpd(7, rng)};
    GaussianStats b{Vector::Random(7), randomSpd(7, rng)};
    EXPECT_NEAR(fid(a, b), fid(b, a), 1e-9 * std::max(1.0, fid(a, b)));
  }
}

TEST(Fid, SampledStatisticsApproachClosedForm) {
  Rng rng(5);
  const Eigen::Index f = 8;
  Matrix ar(f, f), ag(f, f);
  for (Eigen::Index i = 0; i < ar.size(); ++i) ar.data()[i] = rng.normal() * 0.5;
  for (Eigen::Index i = 0; i < ag.size(); ++i) ag.data()[i] = rng.normal() * 0.5;
  const Vector mg = Vector::Constant(f, 0.5);
  const GaussianStats truthR{Vector::Zero(f), ar * ar.transpose()};
  const GaussianStats truthG{mg, ag * ag.transpose()};
  const double exact = fid(truthR, truthG);
  const double sampled = fid(fitStats(gaussianSamples(50000, Vector::Zero(f), ar, rng)),
                             fitStats(gaussianSamples(50000, mg, ag, rng)));
  EXPECT_NEAR(sampled, exact, 0.05 * exact);
}

TEST(Fid, DimensionMismatchIsShapeError) {
  GaussianStats a{Vector::Zero(2), Matrix::Identity(2, 2)};
  GaussianStats b{Vector::Zero(3), Matrix::Identity(3, 3)};
  EXPECT_THROW(fid(a, b), ShapeError);
}

class ImageSetFid : public ::testing::Test {
 protected:
  ImageSetFid() : data_(training::synthesize(training::SyntheticDataset(2, 32, 11), 200)) {}
  training::ImageSet data_;
  FeatureExtractor fx_;
};

TEST_F(ImageSetFid, SameSetIsZero) {
  const auto d0 = imagesOf(data_, 0);
  EXPECT_LE(fidBetweenImageSets(d0, d0, 32, 32, fx_), 1e-6);
}

TEST_F(ImageSetFid, SeparatesDomains) {
  const auto d0 = imagesOf(data_, 0), d1 = imagesOf(data_, 1);
  const std::vector<std::vector<float>> firstHalf(d0.begin(), d0.begin() + 100);
  const std::vector<std::vector<float>> secondHalf(d0.begin() + 100, d0.end());
  const double within = fidBetweenImageSets(firstHalf, secondHalf, 32, 32, fx_);
  const double across = fidBetweenImageSets(d0, d1, 32, 32, fx_);
  EXPECT_GT(across, within);
}

TEST_F(ImageSetFid, IgnoresImageOrder) {
  auto d0 = imagesOf(data_, 0);
  const auto d1 = imagesOf(data_, 1);
  const double before = fidBetweenImageSets(d0, d1, 32, 32, fx_);
  std::reverse(d0.begin(), d0.end());
  std::rotate(d0.begin(), d0.begin() + 37, d0.end());
  EXPECT_NEAR(fidBetweenImageSets(d0, d1, 32, 32, fx_), before, 1e-6 * before);
}

TEST_F(ImageSetFid, PassthroughReportHasOneRowPerDomainPlusAverage) {
  const auto r = fidReport(nullptr, data_, {0, 1}, fx_);
  EXPECT_EQ(r.average, 0.0);
  std::ostringstream os;
  writeFidCsv(os, r);
  const auto text = os.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 4);
  EXPECT_EQ(text.rfind("average,0,0\n"), text.size() - 12);
}

TEST(Features, RawPixelExtractorAveragesGridCells) {
  FeatureExtractor fx(FeatureKind::kRawPixels);
  EXPECT_EQ(fx.dim(), 192u);
  std::vector<float> img(3 * 16 * 16, 0.25f);
  const auto f = fx.extract({img, img}, 16, 16);
  EXPECT_EQ(f.rows(), 2);
  EXPECT_NEAR(f.maxCoeff(), 0.25, 1e-7);
  EXPECT_NEAR(f.minCoeff(), 0.25, 1e-7);
}

TEST(Flops, ConvolutionCountsMultiplyAccumulates) {
  Rng rng(6);
  nn::Conv2d<float> conv(2, 4, 3, 1, true, nd::PadMode::kZero, rng);
  nn::FlopReport r;
  EXPECT_EQ(conv.flops({1, 2, 8, 8}, r, "conv", "test"), (nd::Shape{1, 4, 8, 8}));
  EXPECT_EQ(r.total(), 4608u);
}

TEST(Flops, GlobalAveragePoolCountsEveryInput) {
  Rng rng(7);
  nn::LayerStack<float> gap(nn::parseArchString("GAP"), 256, {}, rng);
  nn::FlopReport r;
  EXPECT_EQ(gap.flops({1, 256, 32, 32}, r, "gap", "test"), (nd::Shape{1, 256}));
  EXPECT_EQ(r.total(), 262144u);
}

TEST(Flops, ExtraBranchesBarelyChangeCost) {
  nn::ModelOptions o;
  const auto one = measureGenerator(o, 1);
  const auto four = measureGenerator(o, 4);
  EXPECT_LE(static_cast<double>(four.flops) / static_cast<double>(one.flops), 1.01);
  EXPECT_LT(static_cast<double>(four.gateFlops) / static_cast<double>(four.flops), 0.01);
  EXPECT_EQ(four.branchFlops, one.branchFlops);
}

TEST(ComplexityTable, WorkedExample) {
  const auto rows = complexityTable(1e6, 5e8, 14, 3);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].params, 14e6);
  EXPECT_EQ(rows[1].params, 1e6);
  EXPECT_EQ(rows[2].params, 3e6);
  for (const auto& row : rows) EXPECT_EQ(row.flops, 5e8);
  EXPECT_TRUE(rows[2].flopsApproximate);
}

TEST(ComplexityTable, SingleDomainSingleBranchRowsAgree) {
  for (const auto& row : complexityTable(123.0, 456.0, 1, 1)) {
    EXPECT_EQ(row.params, 123.0);
    EXPECT_EQ(row.flops, 456.0);
  }
  EXPECT_THROW(complexityTable(0.0, 1.0, 2, 2), ConfigError);
}

TEST(ComplexityReport, MeasuredRowsGrowLinearlyInBranches) {
  nn::ModelOptions o;
  o.branches = 4;
  const auto r = complexityReport(o);
  ASSERT_EQ(r.measured.size(), 4u);
  for (std::size_t k = 0; k < 4; ++k)
    EXPECT_EQ(r.measured[k].params.branches, (k + 1) * r.measured[0].params.branches);
  std::ostringstream os;
  writeComplexityCsv(os, r);
  const auto text = os.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 1 + 3 + 4);
}

}  // namespace
}  // namespace ada2net::metrics
