// tests/plda_test.cpp

// Copyright 2026 The DVBx Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "dvbx/plda.hpp"
#include "test_util.hpp"

namespace dvbx {
namespace {

TEST(PretrainPlda, FourPointsHandScatter) {
  Matrix v(4, 1);
  v << -3, -1, 1, 3;
  const PldaModel m = PretrainPlda(v, std::vector<int>{0, 0, 1, 1});
  EXPECT_DOUBLE_EQ(m.mean(0), 0.0);
  // within: deviations +-1 around -2 and 2 -> 4 / (4 - 2)
  EXPECT_DOUBLE_EQ(m.within_cov(0, 0), 2.0);
  // between: (2 * 4 + 2 * 4) / 4
  EXPECT_DOUBLE_EQ(m.between_cov(0, 0), 4.0);
}

TEST(PretrainPlda, IdenticalVectorsRegularized) {
  const Matrix v = Matrix::Constant(6, 3, 1.5);
  const PldaModel m = PretrainPlda(v, std::vector<int>{0, 0, 1, 1, 2, 2});
  EXPECT_TRUE(m.between_cov.isZero(0.0));
  EXPECT_TRUE(m.within_cov.isApprox(1e-6 * Matrix::Identity(3, 3)));
  EXPECT_NO_THROW(m.Validate());
}

TEST(PretrainPlda, DegenerateInputs) {
  const Matrix v = Matrix::Ones(3, 2);
  EXPECT_THROW(PretrainPlda(v, std::vector<int>{4, 4, 4}), DegenerateInputError);
  EXPECT_THROW(PretrainPlda(v, std::vector<int>{0, 1, 2}), DegenerateInputError);
  EXPECT_THROW(PretrainPlda(v, std::vector<int>{0, 1}), ShapeError);
}

TEST(PretrainPlda, SingletonSpeakersAddNoWithinScatter) {
  Matrix v(3, 1);
  v << 0, 2, 10;
  const PldaModel m = PretrainPlda(v, std::vector<int>{0, 0, 1});
  EXPECT_DOUBLE_EQ(m.within_cov(0, 0), 2.0 / (3 - 2));
}

TEST(PretrainPlda, InvariantToRenamingAndReordering) {
  Rng rng(5);
  const Matrix v = testing::RandomMatrix(rng, 30, 4);
  std::vector<int> labels;
  for (int i = 0; i < 30; ++i) labels.push_back(i % 5);
  const PldaModel a = PretrainPlda(v, labels);

  std::vector<std::string> names;
  for (int l : labels) names.push_back("speaker_" + std::to_string(9 - l));
  const PldaModel b = PretrainPlda(v, names);
  EXPECT_TRUE(a.within_cov == b.within_cov);
  EXPECT_TRUE(a.between_cov == b.between_cov);

  std::vector<Index> perm(30);
  for (Index i = 0; i < 30; ++i) perm[static_cast<std::size_t>(i)] = (7 * i) % 30;
  Matrix vp(30, 4);
  std::vector<int> lp;
  for (Index i = 0; i < 30; ++i) {
    vp.row(i) = v.row(perm[static_cast<std::size_t>(i)]);
    lp.push_back(labels[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])]);
  }
  const PldaModel c = PretrainPlda(vp, lp);
  EXPECT_TRUE(a.within_cov.isApprox(c.within_cov, 1e-12));
  EXPECT_TRUE(a.between_cov.isApprox(c.between_cov, 1e-12));
}

PldaModel DiagModel(const Vector &wdiag, const Vector &bdiag) {
  PldaModel m;
  m.mean = Vector::Zero(wdiag.size());
  m.within_cov = wdiag.asDiagonal();
  m.between_cov = bdiag.asDiagonal();
  return m;
}

TEST(SolveGevp, AlreadyDiagonal) {
  const TransformedSpace s = SolveGevp(DiagModel(Vector::Ones(2), Vector{{4.0, 1.0}}), 2);
  EXPECT_NEAR(s.phi(0), 4.0, 1e-12);
  EXPECT_NEAR(s.phi(1), 1.0, 1e-12);
  EXPECT_TRUE(s.transform.isApprox(Matrix::Identity(2, 2), 1e-12));
}

TEST(SolveGevp, SortsDescendingAndTruncates) {
  const TransformedSpace s = SolveGevp(DiagModel(Vector::Ones(2), Vector{{1.0, 4.0}}), 1);
  ASSERT_EQ(s.phi.size(), 1);
  EXPECT_NEAR(s.phi(0), 4.0, 1e-12);
  EXPECT_NEAR(std::abs(s.transform(1, 0)), 1.0, 1e-12);
  EXPECT_NEAR(s.transform(0, 0), 0.0, 1e-12);
}

TEST(SolveGevp, RandomPairResidualAndOrthogonality) {
  Rng rng(11);
  for (int rep = 0; rep < 10; ++rep) {
    PldaModel m;
    m.mean = Vector::Zero(6);
    m.within_cov = testing::RandomSpd(rng, 6);
    m.between_cov = testing::RandomSpd(rng, 6, 0.1);
    const TransformedSpace s = SolveGevp(m, 6);
    const Matrix &E = s.transform;
    const Matrix resid = m.between_cov * E - m.within_cov * E * s.phi.asDiagonal();
    EXPECT_LT(resid.cwiseAbs().maxCoeff(), 1e-8 * m.between_cov.cwiseAbs().rowwise().sum().maxCoeff());
    EXPECT_TRUE((E.transpose() * m.within_cov * E).isApprox(Matrix::Identity(6, 6), 1e-8));
    const Matrix b = E.transpose() * m.between_cov * E;
    EXPECT_LT((b - Matrix(s.phi.asDiagonal())).cwiseAbs().maxCoeff(), 1e-8);
    for (Index k = 1; k < 6; ++k) EXPECT_GE(s.phi(k - 1), s.phi(k));
    for (Index k = 0; k < 6; ++k) {
      Index arg = 0;
      E.col(k).cwiseAbs().maxCoeff(&arg);
      EXPECT_GT(E(arg, k), 0.0);
    }
  }
}

TEST(SolveGevp, EigenvalueFloorAndErrors) {
  const TransformedSpace s = SolveGevp(DiagModel(Vector::Ones(2), Vector{{3.0, 0.0}}), 2);
  EXPECT_EQ(s.phi(1), kPhiFloor);

  PldaModel bad = DiagModel(Vector{{1.0, -1.0}}, Vector::Ones(2));
  EXPECT_THROW(SolveGevp(bad, 2), NumericError);
  EXPECT_THROW(SolveGevp(DiagModel(Vector::Ones(2), Vector::Ones(2)), 3), ShapeError);
  EXPECT_THROW(SolveGevp(DiagModel(Vector::Ones(2), Vector::Ones(2)), 0), ShapeError);
}

TEST(TransformSequence, HandExamples) {
  XVectorSequence seq = testing::UniformSequence(Matrix{{1.0, 2.0}});
  const Vector m{{1.0, 0.0}};
  EXPECT_EQ(TransformSequence(seq, m, Matrix{{1.0}, {1.0}}).data(0, 0), 2.0);

  seq.raw = Matrix{{1.0, 0.0}, {1.0, 0.0}};
  EXPECT_TRUE(TransformSequence(seq, m, Matrix::Identity(2, 2)).data.isZero(0.0));

  seq.raw = Matrix{{3.0, -1.0}};
  EXPECT_EQ(TransformSequence(seq, Vector::Zero(2), Matrix::Identity(2, 2)).data, seq.raw);
  EXPECT_THROW(TransformSequence(seq, Vector::Zero(3), Matrix::Identity(3, 3)), ShapeError);
}

TEST(TransformSequence, LinearWithZeroMean) {
  Rng rng(2);
  const Matrix a = testing::RandomMatrix(rng, 5, 3), b = testing::RandomMatrix(rng, 5, 3);
  const Matrix E = testing::RandomMatrix(rng, 3, 2);
  const Vector zero = Vector::Zero(3);
  const auto t = [&](const Matrix &x) {
    return TransformSequence(testing::UniformSequence(x), zero, E).data;
  };
  EXPECT_TRUE(t(2.0 * a - 3.0 * b).isApprox(2.0 * t(a) - 3.0 * t(b), 1e-12));
}

TEST(PldaFile, BitExactRoundTripAndCorruption) {
  Rng rng(8);
  PldaModel m;
  m.mean = testing::RandomMatrix(rng, 5, 1);
  m.within_cov = testing::RandomSpd(rng, 5);
  m.between_cov = testing::RandomSpd(rng, 5);
  const TransformedSpace s = SolveGevp(m, 3);
  const auto bytes = EncodePlda(m, s);
  ASSERT_EQ(bytes.size(), 16u + 16 + 8 * (5 + 25 + 25 + 15 + 3));
  const auto [m2, s2] = DecodePlda(bytes);
  EXPECT_TRUE(m2.mean == m.mean && m2.within_cov == m.within_cov &&
              m2.between_cov == m.between_cov && s2.transform == s.transform && s2.phi == s.phi);
  EXPECT_EQ(EncodePlda(m2, s2), bytes);

  auto cut = bytes;
  cut.resize(cut.size() - 3);
  EXPECT_THROW(DecodePlda(cut), FormatError);
  auto magic = bytes;
  magic[0] = 'X';
  EXPECT_THROW(DecodePlda(magic), FormatError);
  auto version = bytes;
  version[8] = 9;
  EXPECT_THROW(DecodePlda(version), FormatError);
  EXPECT_THROW(ReadPlda("/nonexistent/plda.bin"), FormatError);
}

}  // namespace
}  // namespace dvbx
