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

#include "dssmooth/attacks.h"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "dssmooth/errors.h"
#include "dssmooth/harness.h"
#include "tiny_experiment.h"

namespace dssmooth {
namespace {

using testing::Tiny;

TEST(WsrUnderNoiseTest, ZeroSigmaEqualsCleanWsr) {
  const auto& t = Tiny();
  const int target = t.exp.cfg.plan.target_label;
  for (const auto& m : t.pools.vanilla) {
    const std::vector<double> grid = {0.0, 2.0};
    const NoiseGrid g = WsrUnderNoise(m, t.exp.triggered_test, target, grid,
                                      RandomStream(1));
    EXPECT_EQ(g.wsr[0], WatermarkSuccessRate(m, t.exp.triggered_test, target));
    // Same seed, same curve.
    EXPECT_EQ(WsrUnderNoise(m, t.exp.triggered_test, target, grid,
                            RandomStream(1)).wsr,
              g.wsr);
  }
}

TEST(WsrUnderNoiseTest, Errors) {
  const auto& t = Tiny();
  const auto& m = t.pools.benign[0];
  const std::vector<double> ok = {0.0, 1.0};
  const std::vector<double> bad = {1.0, 0.5};
  EXPECT_THROW(WsrUnderNoise(m, std::vector<TokenSeq>{}, 1, ok, RandomStream(1)),
               InputError);
  EXPECT_THROW(WsrUnderNoise(m, t.exp.triggered_test, 1, bad, RandomStream(1)),
               ParameterError);
}

TEST(BuildDirectionsTest, SignsOfNoiseAndGradient) {
  const auto& t = Tiny();
  const auto& m = t.pools.vanilla[0];
  const DualSpaceRep rep = Embed(t.exp.triggered_test[0], m);
  RandomStream s(2);
  const Directions d = BuildDirections(m, rep, 1, 1.0, s);
  const DenseMatrix g = GradWrtEmbeddings(m, rep, 1);
  for (std::size_t k = 0; k < g.size(); ++k) {
    EXPECT_TRUE(d.d_n.data()[k] == 1.0 || d.d_n.data()[k] == -1.0);
    EXPECT_EQ(d.d_a.data()[k], g.data()[k] < 0 ? -1.0 : 1.0);
  }
}

TEST(BuildDirectionsTest, AscentDoesNotDecreaseLoss) {
  const auto& t = Tiny();
  const auto& m = t.pools.vanilla[0];
  const int target = t.exp.cfg.plan.target_label;
  const std::size_t n = std::min<std::size_t>(100, t.exp.triggered_test.size());
  int ok = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const DualSpaceRep rep = Embed(t.exp.triggered_test[i], m);
    RandomStream s(i);
    const Directions d = BuildDirections(m, rep, target, 1.0, s);
    DualSpaceRep moved = rep;
    for (std::size_t k = 0; k < d.d_a.size(); ++k) {
      moved.emb.mutable_values().data()[k] += 1e-3 * d.d_a.data()[k];
    }
    ok += Loss(m, moved, target) >= Loss(m, rep, target);
  }
  EXPECT_GE(ok, 0.95 * n);
}

TEST(SubspaceScanTest, OriginEqualsPlainWsr) {
  const auto& t = Tiny();
  const auto& m = t.pools.vanilla[0];
  const int target = t.exp.cfg.plan.target_label;
  const std::vector<double> grid = {-0.3, 0.0, 0.3};
  const SubspaceScan scan =
      RunSubspaceScan(m, t.exp.triggered_test, target, grid, grid, RandomStream(3));
  EXPECT_EQ(scan.wsr[1][1], WatermarkSuccessRate(m, t.exp.triggered_test, target));
  EXPECT_EQ(scan.directions.size(), t.exp.triggered_test.size());
  const SubspaceScan again =
      RunSubspaceScan(m, t.exp.triggered_test, target, grid, grid, RandomStream(3));
  EXPECT_EQ(again.wsr, scan.wsr);
  const std::vector<double> no_zero = {-0.3, 0.3};
  EXPECT_THROW(RunSubspaceScan(m, t.exp.triggered_test, target, no_zero, grid,
                               RandomStream(3)),
               ParameterError);
}

TEST(ResistanceTest, UnattackedRowsMatchPoolMetrics) {
  const auto& t = Tiny();
  const CalibrationSet cal = Calibrate(t.exp, t.pools.benign);
  const VerifyContext ctx =
      MakeVerifyContext(t.exp, CalibrationThreshold(cal, t.exp.cfg.verify));
  const PoolMetrics base = EvaluatePool(t.pools.watermarked, ctx);
  const std::vector<ClassifierModel> before = t.pools.watermarked;

  const std::vector<int> schedule = {0, 1, 2};
  const auto ft = FinetuneResistance(t.pools.watermarked, t.exp.train, schedule,
                                     t.exp.cfg.finetune, ctx);
  ASSERT_EQ(ft.size(), schedule.size());
  EXPECT_DOUBLE_EQ(ft[0].vsr, base.vsr);
  EXPECT_DOUBLE_EQ(ft[0].wca, base.wca);
  EXPECT_EQ(t.pools.watermarked, before);

  const std::vector<double> rates = {0.0, 1.0};
  const auto pr = PruneResistance(t.pools.watermarked, rates, ctx);
  EXPECT_DOUBLE_EQ(pr[0].vsr, base.vsr);
  EXPECT_DOUBLE_EQ(pr[0].wca, base.wca);
  // A fully pruned head predicts uniformly: WR = 1/K and no ownership claim.
  EXPECT_DOUBLE_EQ(pr[1].mean_wr, 0.25);
  EXPECT_EQ(pr[1].vsr, 0.0);

  const std::vector<int> descending = {2, 1};
  EXPECT_THROW(FinetuneResistance(t.pools.watermarked, t.exp.train, descending,
                                  t.exp.cfg.finetune, ctx),
               ParameterError);
}

}  // namespace
}  // namespace dssmooth
