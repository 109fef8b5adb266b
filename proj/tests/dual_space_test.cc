//
// Copyright 2026 The dssmooth Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#include "dssmooth/dual_space.h"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "dssmooth/errors.h"

namespace dssmooth {
namespace {

DenseMatrix Ramp(int n, int d) {
  DenseMatrix w(n, d);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) w(i, j) = 10 * i + j;
  }
  return w;
}

TEST(PermutationMatrixTest, RejectsNonBijection) {
  EXPECT_THROW(PermutationMatrix({0, 0, 1}), ParameterError);
  EXPECT_THROW(PermutationMatrix({0, 3}), ParameterError);
  EXPECT_NO_THROW(PermutationMatrix({2, 0, 1}));
}

TEST(PermutationMatrixTest, ComposeEqualsDenseProduct) {
  DualSpaceRep rep{PermutationMatrix({2, 0, 3, 1}), EmbeddingMatrix(Ramp(4, 3)),
                   {1, 1, 1, 0}};
  EXPECT_EQ(Compose(rep), MatMul(rep.perm.ToDense(), rep.emb.values()));
}

TEST(PermutationMatrixTest, MaskTravelsWithToken) {
  DualSpaceRep rep{PermutationMatrix({2, 0, 3, 1}), EmbeddingMatrix(Ramp(4, 2)),
                   {1, 1, 1, 0}};
  // Output row 2 holds source token 3, which is padding.
  EXPECT_EQ(ComposedMask(rep), (Mask{1, 1, 0, 1}));
}

TEST(PermutationMatrixTest, ThenAndInverseMatchMatrixAlgebra) {
  const PermutationMatrix a({1, 2, 0, 3});
  const PermutationMatrix b({3, 0, 2, 1});
  EXPECT_EQ(a.Then(b).ToDense(), MatMul(a.ToDense(), b.ToDense()));
  EXPECT_TRUE(a.Then(a.Inverse()).IsIdentity());
  EXPECT_EQ(a.Inverse().ToDense(), [&] {
    DenseMatrix t(4, 4);
    const DenseMatrix m = a.ToDense();
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) t(i, j) = m(j, i);
    return t;
  }());
}

TEST(DualSpaceRepTest, ValidateChecksShapes) {
  DualSpaceRep rep{PermutationMatrix::Identity(3), EmbeddingMatrix(Ramp(4, 2)),
                   {1, 1, 1, 1}};
  EXPECT_THROW(rep.Validate(), ShapeError);
  EXPECT_THROW(Compose(rep), ShapeError);
}

TEST(PermDistanceTest, MatchesEntrywiseL1OfDenseDifference) {
  RandomStream s(11);
  for (int t = 0; t < 50; ++t) {
    std::vector<int> ma(6), mb(6);
    std::iota(ma.begin(), ma.end(), 0);
    std::iota(mb.begin(), mb.end(), 0);
    s.Shuffle(std::span<int>(ma));
    s.Shuffle(std::span<int>(mb));
    const PermutationMatrix a(ma), b(mb);
    EXPECT_DOUBLE_EQ(PermDistance(a, b),
                     EntrywiseL1(Subtract(a.ToDense(), b.ToDense())));
  }
}

TEST(EmbDistanceTest, Frobenius) {
  const EmbeddingMatrix a(DenseMatrix::FromRows({{0, 0}, {0, 0}}));
  const EmbeddingMatrix b(DenseMatrix::FromRows({{1, 2}, {2, 0}}));
  EXPECT_DOUBLE_EQ(EmbDistance(a, b), 3.0);
}

TEST(ApplyPermNoiseTest, LambdaOneIsIdentity) {
  RandomStream s(1);
  const auto p = PermutationMatrix({1, 0, 2});
  EXPECT_EQ(ApplyPermNoise(p, {0.0, 1}, s), p);
}

TEST(ApplyPermNoiseTest, RejectsBadLambda) {
  RandomStream s(1);
  EXPECT_THROW(ApplyPermNoise(PermutationMatrix::Identity(4), {0.0, 0}, s),
               ParameterError);
  EXPECT_THROW(ApplyPermNoise(PermutationMatrix::Identity(4), {0.0, 5}, s),
               ParameterError);
}

TEST(ApplyPermNoiseTest, TokensStayInsideTheirGroup) {
  RandomStream s(3);
  for (int t = 0; t < 200; ++t) {
    const PermutationMatrix p =
        ApplyPermNoise(PermutationMatrix::Identity(10), {0.0, 3}, s);
    for (int i = 0; i < 10; ++i) EXPECT_EQ(p[i] / 3, i / 3);
  }
}

TEST(ApplyPermNoiseTest, PaddingStaysFixed) {
  RandomStream s(4);
  const Mask mask = {1, 0, 1, 1, 0, 0};
  for (int t = 0; t < 200; ++t) {
    const PermutationMatrix p =
        ApplyPermNoise(PermutationMatrix::Identity(6), {0.0, 3}, s, mask);
    EXPECT_EQ(p[1], 1);
    EXPECT_EQ(p[4], 4);
    EXPECT_EQ(p[5], 5);
  }
}

TEST(ApplyPermNoiseTest, GroupOrderingsAreUniform) {
  RandomStream s(5);
  std::map<std::vector<int>, int> counts;
  const int n = 30000;
  for (int t = 0; t < n; ++t) {
    const auto p = ApplyPermNoise(PermutationMatrix::Identity(3), {0.0, 3}, s);
    ++counts[p.mapping()];
  }
  ASSERT_EQ(counts.size(), 6u);
  double chi2 = 0;
  for (const auto& [k, c] : counts) chi2 += std::pow(c - n / 6.0, 2) / (n / 6.0);
  EXPECT_LT(chi2, 20.5);  // chi-square(5), 0.999 quantile
}

TEST(ApplyEmbNoiseTest, SkipsPaddingAndHasRightVariance) {
  RandomStream s(6);
  const int n = 400, d = 50;
  Mask mask(n, 1);
  mask[7] = 0;
  const EmbeddingMatrix clean(Ramp(n, d));
  const EmbeddingMatrix noisy = ApplyEmbNoise(clean, {0.3, 1}, s, mask);
  double sq = 0;
  int count = 0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) {
      const double e = noisy.row(i)[j] - clean.row(i)[j];
      if (i == 7) {
        EXPECT_EQ(e, 0.0);
      } else {
        sq += e * e;
        ++count;
      }
    }
  }
  EXPECT_NEAR(sq / count, 0.09, 5 * 0.09 * std::sqrt(2.0 / count));
}

TEST(ApplyEmbNoiseTest, ZeroSigmaIsExactCopy) {
  RandomStream s(7);
  const EmbeddingMatrix clean(Ramp(3, 2));
  EXPECT_EQ(ApplyEmbNoise(clean, {0.0, 1}, s), clean);
  EXPECT_THROW(ApplyEmbNoise(clean, {-1.0, 1}, s), ParameterError);
}

TEST(PerturbRepTest, DeterministicUnderStream) {
  DualSpaceRep rep{PermutationMatrix::Identity(6), EmbeddingMatrix(Ramp(6, 4)),
                   Mask(6, 1)};
  const auto a = PerturbRep(rep, {0.5, 3}, RandomStream(8).Split(1));
  const auto b = PerturbRep(rep, {0.5, 3}, RandomStream(8).Split(1));
  const auto c = PerturbRep(rep, {0.5, 3}, RandomStream(8).Split(2));
  EXPECT_EQ(a.perm, b.perm);
  EXPECT_EQ(a.emb, b.emb);
  EXPECT_NE(a.emb, c.emb);
}

}  // namespace
}  // namespace dssmooth
