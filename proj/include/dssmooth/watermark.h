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

// Dataset watermarking: trigger insertion (rare words or a fixed sentence),
// norm-constrained scaling of the trigger embedding, a local permutation
// watermark, and assembly of the protected dataset with an audit manifest.
//
// The embedding-space watermark of a triggered sample is measured against its
// "pre-insertion" embedding: the triggered layout with every trigger row set
// to the zero (padding) vector. Trigger rows are then filled with
// alpha * w_t0, where w_t0 is the mean table row of the trigger tokens and
// alpha is chosen so that the local pooled embedding moves by eps_t.

#ifndef DSSMOOTH_WATERMARK_H_
#define DSSMOOTH_WATERMARK_H_

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dssmooth/dual_space.h"
#include "dssmooth/statcore.h"
#include "dssmooth/text_model.h"
#include "json.hpp"

namespace dssmooth {

enum class TriggerKind { kBadWord, kAddSent };
enum class Placement { kRandom, kStart, kMiddle, kEnd };

struct TriggerSpec {
  TriggerKind kind = TriggerKind::kBadWord;
  std::vector<std::string> tokens;  // words, or the sentence's tokens
  Placement placement = Placement::kRandom;

  static TriggerSpec BadWord(std::vector<std::string> words,
                             Placement placement = Placement::kRandom);
  static TriggerSpec AddSent(std::string_view sentence,
                             Placement placement = Placement::kRandom);
  // Throws ParameterError on an empty token list.
  void Validate() const;
};

struct WatermarkPlan {
  TriggerSpec trigger;
  int target_label = 1;  // y-hat, 1-based
  double rate = 0.1;     // gamma
  double eps_max = 0.05;
  double eta = 0.9;
  // Group size of the permutation watermark. Only the group holding the
  // first trigger position is reordered.
  int group_size = 2;
  int window = -1;  // u; negative picks AdaptiveWindow(active length)
  double tol = 0.01;
  int max_iters = 20;
  // Hard limits checked while building: delta_e < embedding_budget and
  // delta_p < permutation_budget.
  double embedding_budget = 0.6;
  double permutation_budget = 5.0;
  std::uint64_t seed = 0;

  double eps_t() const { return eps_max * eta; }
  // Defaults for each trigger family.
  static WatermarkPlan BadWordDefault();
  static WatermarkPlan AddSentDefault();
  void Validate() const;

  nlohmann::json ToJson() const;
  static WatermarkPlan FromJson(const nlohmann::json& j);
};

// floor(rate * n) distinct indices drawn without replacement, ascending.
// Throws ParameterError when the count is 0 or the rate is outside (0, 1).
std::vector<std::size_t> SelectSubset(std::size_t n, const WatermarkPlan& plan);

struct TriggeredSeq {
  TokenSeq seq;
  std::vector<int> positions;  // trigger token positions, ascending
};

// Inserts the trigger into the active tokens of `seq` without growing n: the
// tail is truncated when there is no room. Label becomes `target_label`.
// Throws ParameterError if the trigger is longer than n and InputError if a
// trigger token is missing from `vocab`.
TriggeredSeq InsertTriggerText(const TokenSeq& seq, const TriggerSpec& spec,
                               const Vocab& vocab, int target_label,
                               RandomStream& stream);

// u = 2 below 10 tokens, 10 from 80 tokens, linear (floored) in between.
int AdaptiveWindow(int active_tokens);

// Mean over positions p of the masked mean of rows [p - u, p + u] (clipped).
// Throws DegenerateError when a window holds no unmasked row.
std::vector<double> LocalPooledEmbedding(const EmbeddingMatrix& emb,
                                         std::span<const std::uint8_t> mask,
                                         std::span<const int> positions,
                                         int u);

struct ScaleResult {
  double alpha = 1.0;
  double deviation = 0.0;  // ||h_s(alpha) - h_s(0)|| at the returned alpha
  int updates = 0;         // multiplicative updates performed
  bool converged = false;
};

// Fixed-point scaling alpha <- alpha * eps_t / ||response(alpha)|| from
// alpha = 1, where response(alpha) = h_s(alpha) - h_s(0). Stops once the
// deviation is within tol * eps_t; otherwise returns the best iterate seen
// with converged = false. Throws DegenerateError on a zero deviation.
ScaleResult IterateScale(
    const std::function<std::vector<double>(double)>& response, double eps_t,
    double tol, int max_iters);

struct EmbeddingDelta {
  std::vector<int> positions;
  std::vector<std::vector<double>> rows;  // w_t' per position
};

// Triggered layout with trigger rows zeroed, mask unchanged.
DualSpaceRep PreInsertionRep(const TriggeredSeq& triggered,
                             const ClassifierModel& model);

// Mean table row of the trigger tokens.
std::vector<double> TriggerBaseRow(const TriggerSpec& spec, const Vocab& vocab,
                                   const ClassifierModel& model);

struct TriggerScale {
  ScaleResult scale;
  EmbeddingDelta delta;
};

// Scale search on a pre-insertion representation with base row w_t0.
TriggerScale OptimizeTriggerScale(const DualSpaceRep& pre_insertion,
                                  std::span<const int> positions,
                                  std::span<const double> base_row,
                                  const WatermarkPlan& plan);

struct EmbeddingWatermark {
  EmbeddingMatrix emb;
  double delta_e = 0.0;
};

// Replaces the rows named by `delta`. Throws BudgetError unless
// delta_e < budget.
EmbeddingWatermark BuildWatermarkedEmbeddings(const EmbeddingMatrix& emb,
                                              const EmbeddingDelta& delta,
                                              double budget);

struct PermWatermark {
  PermutationMatrix perm;
  double delta_p = 0.0;
};

// Reorders the lambda_w group containing `anchor` (non-padding positions
// only, uniformly over the group's orderings). Throws ParameterError unless
// 1 <= lambda_w <= n and BudgetError unless delta_p < budget.
PermWatermark ApplyPermWatermark(const PermutationMatrix& perm, int lambda_w,
                                 int anchor, std::span<const std::uint8_t> mask,
                                 RandomStream& stream, double budget);

struct WatermarkedSample {
  std::size_t index = 0;
  TokenSeq original;
  TriggeredSeq triggered;  // before the permutation watermark
  TokenSeq stored;         // reordered token sequence used for training
  DualSpaceRep pre_insertion;
  DualSpaceRep watermarked;  // (U-hat, W-hat)
  ScaleResult scale;
  double delta_e = 0.0;
  double delta_p = 0.0;
  std::string stream_path;

  nlohmann::json ManifestEntry() const;
};

// Full per-sample pipeline under `stream`.
WatermarkedSample WatermarkSample(const TokenSeq& seq, std::size_t index,
                                  const Vocab& vocab,
                                  const ClassifierModel& model,
                                  const WatermarkPlan& plan,
                                  const RandomStream& stream);

struct WatermarkedDataset {
  std::vector<TokenSeq> samples;  // D_w in input order
  std::vector<std::size_t> subset;
  std::vector<WatermarkedSample> watermarked;
  nlohmann::json manifest;
};

// D_w = D_m + D_r: samples in the selected subset are replaced by their
// watermarked versions (flagged), the rest are copied unchanged.
WatermarkedDataset BuildWatermarkedDataset(std::span<const TokenSeq> dataset,
                                           const Vocab& vocab,
                                           const WatermarkPlan& plan,
                                           const ClassifierModel& model);

}  // namespace dssmooth

#endif  // DSSMOOTH_WATERMARK_H_
