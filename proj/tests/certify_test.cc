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

#include "dssmooth/certify.h"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "dssmooth/errors.h"

namespace dssmooth {
namespace {

// Always votes for one class.
class ConstantClassifier : public Classifier {
 public:
  ConstantClassifier(int k, int label) : k_(k), label_(label) {}
  int num_classes() const override { return k_; }
  void Scores(const DenseMatrix&, std::span<const std::uint8_t>,
              std::span<double> out) const override {
    for (int c = 0; c < k_; ++c) out[c] = c + 1 == label_ ? 1.0 : 0.0;
  }

 private:
  int k_, label_;
};

// Classes 1 and 2 always tie.
class TieClassifier : public Classifier {
 public:
  int num_classes() const override { return 3; }
  void Scores(const DenseMatrix&, std::span<const std::uint8_t>,
              std::span<double> out) const override {
    out[0] = 1.0;
    out[1] = 1.0;
    out[2] = 0.0;
  }
};

// Class 1 when the mean of column 0 over active rows exceeds t, else class 2.
// The mean is invariant to row order, so under dual-space noise
// P[class 1] = Phi((mean - t) * sqrt(active) / sigma).
class ThresholdClassifier : public Classifier {
 public:
  explicit ThresholdClassifier(double t) : t_(t) {}
  int num_classes() const override { return 2; }
  void Scores(const DenseMatrix& e, std::span<const std::uint8_t> mask,
              std::span<double> out) const override {
    double s = 0;
    int n = 0;
    for (size_t i = 0; i < e.rows(); ++i) {
      if (!mask[i]) continue;
      s += e(i, 0);
      ++n;
    }
    const bool one = n > 0 && s / n > t_;
    out[0] = one ? 1.0 : 0.0;
    out[1] = one ? 0.0 : 1.0;
  }

 private:
  double t_;
};

DualSpaceRep Rep(int n, int active, double fill) {
  DenseMatrix w(n, 3);
  Mask mask(n, 0);
  for (int i = 0; i < active; ++i) {
    mask[i] = 1;
    for (int c = 0; c < 3; ++c) w(i, c) = fill + 0.1 * c;
  }
  return {PermutationMatrix::Identity(n), EmbeddingMatrix(w), mask};
}

SmoothingConfig Cfg(double sigma, int lambda, int m, std::uint64_t seed = 1) {
  SmoothingConfig c;
  c.noise = {sigma, lambda};
  c.samples = m;
  c.seed = seed;
  return c;
}

TEST(EstimatePdTest, ConstantClassifierIsOneHot) {
  const ConstantClassifier model(4, 3);
  const auto pd = EstimatePd(model, Rep(6, 4, 0.2), Cfg(1.0, 2, 50));
  EXPECT_EQ(pd.probs, (std::vector<double>{0, 0, 1, 0}));
  EXPECT_EQ(pd.samples, 50);
}

TEST(EstimatePdTest, TiedDrawsSplitTheirVote) {
  const TieClassifier model;
  const auto pd = EstimatePd(model, Rep(4, 4, 0.0), Cfg(0.5, 2, 10));
  EXPECT_EQ(pd.probs, (std::vector<double>{0.5, 0.5, 0.0}));
  EXPECT_EQ(SmoothedPredict(model, Rep(4, 4, 0.0), Cfg(0.5, 2, 10)).label, 1);
}

TEST(EstimatePdTest, MatchesAnalyticProbability) {
  const ThresholdClassifier model(0.0);
  const int m = 4000;
  for (double fill : {-0.2, 0.05, 0.3}) {
    for (int lambda : {1, 3}) {
      const DualSpaceRep rep = Rep(8, 6, fill);
      const double sigma = 0.8;
      const double want = StdNormalCdf(fill * std::sqrt(6.0) / sigma);
      const auto pd = EstimatePd(model, rep, Cfg(sigma, lambda, m, 7));
      EXPECT_NEAR(pd.probs[0], want, 4 * std::sqrt(want * (1 - want) / m) + 1e-9)
          << fill << " " << lambda;
    }
  }
}

TEST(EstimatePdTest, DeterministicUnderSeed) {
  const ThresholdClassifier model(0.0);
  const DualSpaceRep rep = Rep(8, 6, 0.05);
  const auto a = EstimatePd(model, rep, Cfg(1.0, 2, 300, 5));
  const auto b = EstimatePd(model, rep, Cfg(1.0, 2, 300, 5));
  const auto c = EstimatePd(model, rep, Cfg(1.0, 2, 300, 6));
  EXPECT_EQ(a.probs, b.probs);
  EXPECT_NE(a.probs, c.probs);
  // An explicit stream rooted at the seed gives the same answer.
  const auto d = EstimatePd(model, rep, Cfg(1.0, 2, 300, 5), RandomStream(5));
  EXPECT_EQ(a.probs, d.probs);
}

TEST(EstimatePdTest, NoiselessEqualsBasePrediction) {
  const ThresholdClassifier model(0.1);
  const auto pd = EstimatePd(model, Rep(5, 5, 0.2), Cfg(0.0, 1, 64));
  EXPECT_EQ(pd.probs, (std::vector<double>{1.0, 0.0}));
}

TEST(SmoothingConfigTest, GaussianOnlyForcesLambdaOne) {
  SmoothingConfig c = Cfg(0.5, 4, 10);
  c.mode = ModeFromName("gaussian_only");
  EXPECT_EQ(c.Normalized().noise.lambda, 1);
  EXPECT_EQ(ModeName(c.mode), "gaussian_only");
  EXPECT_EQ(Cfg(0.5, 4, 10).Normalized().noise.lambda, 4);
  EXPECT_THROW(ModeFromName("laplace"), ParameterError);
}

TEST(SmoothingConfigTest, ValidationAndJson) {
  EXPECT_THROW(Cfg(0.5, 2, 0).Validate(), ParameterError);
  EXPECT_THROW(Cfg(-0.5, 2, 5).Validate(), ParameterError);
  EXPECT_THROW(Cfg(0.5, 0, 5).Validate(), ParameterError);
  const SmoothingConfig c = Cfg(0.25, 3, 77, 9);
  EXPECT_EQ(SmoothingConfig::FromJson(c.ToJson()).ToJson(), c.ToJson());
}

TEST(CertifiedRadiiTest, TableQuantiles) {
  // Phi^-1(0.975) = 1.959963984540054.
  const auto r = ComputeCertifiedRadii(0.975, 0.025, {1.0, 3});
  EXPECT_NEAR(r.r_e, 1.959963984540054, 1e-10);
  EXPECT_NEAR(r.r_p, 3 * 0.95, 1e-14);
  const auto h = ComputeCertifiedRadii(0.975, 0.025, {0.5, 1});
  EXPECT_NEAR(h.r_e, 0.5 * 1.959963984540054, 1e-10);
}

TEST(CertifiedRadiiTest, ClampsWithSampleCount) {
  // 1 - 1/(2 * 100) = 0.995; Phi^-1(0.995) = 2.5758293035489.
  const auto r = ComputeCertifiedRadii(1.0, 0.0, {1.0, 2}, 100);
  EXPECT_NEAR(r.r_e, 2.5758293035489004, 1e-9);
  EXPECT_DOUBLE_EQ(GaussianRsRadius(1.0, 0.0, 1.0, 100), r.r_e);
}

TEST(CertifiedRadiiTest, EqualAndMisordered) {
  const auto r = ComputeCertifiedRadii(0.4, 0.4, {1.0, 2});
  EXPECT_EQ(r.r_e, 0.0);
  EXPECT_EQ(r.r_p, 0.0);
  EXPECT_THROW(ComputeCertifiedRadii(0.3, 0.4, {1.0, 2}), OrderingError);
}

TEST(CertifiedRadiiTest, FromDistributionUsesTopTwo) {
  PredictionDistribution pd;
  pd.probs = {0.1, 0.7, 0.2};
  pd.samples = 0;
  const auto r = RadiiFromPd(pd, {2.0, 2});
  EXPECT_DOUBLE_EQ(r.p_a, 0.7);
  EXPECT_DOUBLE_EQ(r.p_b, 0.2);
  EXPECT_NEAR(r.r_e, StdNormalInvCdf(0.7) - StdNormalInvCdf(0.2), 1e-12);
  EXPECT_NEAR(r.r_p, 2 * 0.5, 1e-15);
}

TEST(WatermarkRobustnessTest, MinimumOverClasses) {
  const ThresholdClassifier model(0.0);
  const std::vector<DualSpaceRep> reps = {Rep(6, 6, 0.3), Rep(6, 6, 0.05)};
  const SmoothingConfig c = Cfg(0.5, 2, 2000, 3);
  const WrResult wr = WatermarkRobustness(model, reps, 1, c);
  ASSERT_EQ(wr.per_class.size(), 2u);
  EXPECT_EQ(wr.value, std::min(wr.per_class[0], wr.per_class[1]));
  EXPECT_EQ(wr.argmin, 2);
  EXPECT_GT(wr.per_class[0], wr.per_class[1]);
  EXPECT_EQ(WrFromJson(ToJson(wr)).per_class, wr.per_class);
  const std::vector<DualSpaceRep> one = {reps[0]};
  EXPECT_THROW(WatermarkRobustness(model, one, 1, c), InputError);
}

TEST(PrincipalProbabilityTest, MaxOfClassMean) {
  const ConstantClassifier model(2, 2);
  const std::vector<DualSpaceRep> reps = {Rep(4, 3, 0.0), Rep(4, 3, 1.0)};
  const PpResult pp = PrincipalProbability(model, reps, Cfg(0.3, 2, 20));
  EXPECT_EQ(pp.value, 1.0);
  EXPECT_EQ(pp.mean, (std::vector<double>{0.0, 1.0}));
  EXPECT_EQ(PpFromJson(ToJson(pp)).value, 1.0);
}

}  // namespace
}  // namespace dssmooth
