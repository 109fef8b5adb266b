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

// Bag-of-embeddings text classifier: embedding table, mask-aware mean
// pooling, one tanh hidden layer and a softmax head. Gradients are derived by
// hand; training is minibatch SGD with optional momentum.

#ifndef DSSMOOTH_TEXT_MODEL_H_
#define DSSMOOTH_TEXT_MODEL_H_

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dssmooth/classifier.h"
#include "dssmooth/dual_space.h"
#include "dssmooth/statcore.h"
#include "json.hpp"

namespace dssmooth {

inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;

class Vocab {
 public:
  // Only the reserved <pad> and <unk> entries.
  Vocab();
  // Tokens are taken from `texts` (tokenized) plus `extra_tokens`, sorted for
  // a deterministic id assignment.
  static Vocab Build(std::span<const std::string> texts,
                     std::span<const std::string> extra_tokens = {});

  int size() const { return static_cast<int>(tokens_.size()); }
  int Id(std::string_view token) const;  // kUnkId when unknown
  bool Contains(std::string_view token) const;
  const std::string& Token(int id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  nlohmann::json ToJson() const;
  static Vocab FromJson(const nlohmann::json& j);

 private:
  void Add(const std::string& token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

// Lowercases and splits on every non-alphanumeric character.
std::vector<std::string> Tokenize(std::string_view text);

struct TokenSeq {
  std::vector<int> ids;
  Mask mask;
  int label = 1;  // 1..K
  // Set on samples produced by the watermarking pipeline; training may
  // apply noise augmentation to flagged samples only.
  bool watermarked = false;
  // Trigger token positions of a watermarked sample and the norm of its
  // scaled trigger row. The noisy training view of the sample replaces those
  // rows with a row of this norm along the current trigger direction, which
  // is how the sample appears to the verifier.
  std::vector<int> trigger_positions;
  double trigger_norm = 0.0;

  int n() const { return static_cast<int>(ids.size()); }
  int ActiveCount() const;
};

TokenSeq Encode(std::string_view text, const Vocab& vocab, int n,
                int label = 1);
std::string Decode(const TokenSeq& seq, const Vocab& vocab);

struct ModelShape {
  int vocab_size = 0;
  int dim = 32;
  int hidden = 64;
  int classes = 4;
};

inline bool operator==(const ModelShape& a, const ModelShape& b) {
  return a.vocab_size == b.vocab_size && a.dim == b.dim &&
         a.hidden == b.hidden && a.classes == b.classes;
}

struct InitConfig {
  double embedding_scale = 1.0;  // std of table entries
  std::uint64_t seed = 0;
};

struct ForwardResult {
  std::vector<double> probs;
  // All-padding input: probabilities fall back to uniform.
  bool uniform_fallback = false;
};

class ClassifierModel : public Classifier {
 public:
  ClassifierModel() = default;
  // Zero parameters of the given shape.
  explicit ClassifierModel(const ModelShape& shape);

  static ClassifierModel Initialize(const ModelShape& shape,
                                    const InitConfig& init);

  const ModelShape& shape() const { return shape_; }
  int num_classes() const override { return shape_.classes; }

  void Scores(const DenseMatrix& composed,
              std::span<const std::uint8_t> composed_mask,
              std::span<double> out) const override;

  // Mean-pooled forward pass over composed rows.
  ForwardResult ForwardComposed(const DenseMatrix& composed,
                                std::span<const std::uint8_t> mask) const;
  // Direct table lookup path for token sequences.
  ForwardResult ForwardTokens(const TokenSeq& seq) const;
  int PredictTokens(const TokenSeq& seq) const;

  DenseMatrix embedding_table;  // vocab x dim, row kPadId stays zero
  DenseMatrix w_hidden;         // dim x hidden
  std::vector<double> b_hidden;
  DenseMatrix w_out;  // hidden x classes
  std::vector<double> b_out;
  std::uint64_t init_seed = 0;

  bool AllFinite() const;
  // Number of prunable head parameters (hidden and output weights and biases).
  std::size_t HeadParameterCount() const;
  std::size_t HeadZeroCount() const;

  nlohmann::json ToJson() const;
  static ClassifierModel FromJson(const nlohmann::json& j);
  friend bool operator==(const ClassifierModel& a, const ClassifierModel& b) {
    return a.shape_ == b.shape_ && a.embedding_table == b.embedding_table &&
           a.w_hidden == b.w_hidden && a.b_hidden == b.b_hidden &&
           a.w_out == b.w_out && a.b_out == b.b_out &&
           a.init_seed == b.init_seed;
  }

 private:
  ModelShape shape_;
};

// W row j = table[ids[j]], U = identity, mask copied. Throws IndexError on an
// out-of-vocabulary id.
DualSpaceRep Embed(const TokenSeq& seq, const ClassifierModel& model);

ForwardResult Forward(const ClassifierModel& model, const DualSpaceRep& rep);

// Cross-entropy loss at `label` (1..K) for the composed rows of `rep`.
double Loss(const ClassifierModel& model, const DualSpaceRep& rep, int label);

// d loss / d E where E = Compose(rep); rows with a zero composed mask are 0.
DenseMatrix GradWrtEmbeddings(const ClassifierModel& model,
                              const DualSpaceRep& rep, int label);

// Gradients of every parameter group for one (rep, label). The table
// gradient is reported per source token row of `rep`.
struct ParameterGrads {
  DenseMatrix w_hidden;
  std::vector<double> b_hidden;
  DenseMatrix w_out;
  std::vector<double> b_out;
  DenseMatrix composed;  // d loss / d E
  double loss = 0.0;
};
ParameterGrads Backward(const ClassifierModel& model, const DualSpaceRep& rep,
                        int label);

enum class Optimizer { kSgd, kMomentum };
enum class AugmentScope { kNone, kWatermarked, kAll };

struct TrainConfig {
  int epochs = 20;
  int batch_size = 32;
  double learning_rate = 0.1;
  Optimizer optimizer = Optimizer::kMomentum;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  // Dual-space noise augmentation applied on the fly to selected samples.
  AugmentScope augment_scope = AugmentScope::kNone;
  NoiseSpec augment_noise;
  // Draw each augmented sample's sigma uniformly from [0, augment_noise.sigma]
  // instead of using it verbatim.
  bool randomize_sigma = false;
  // Noisy views of each selected sample per epoch, and whether the plain
  // token view is shown as well.
  int augment_views = 1;
  bool augment_keep_plain = false;
  // Even-numbered noisy views keep the sample's own trigger token rows
  // instead of the scaled trigger row.
  bool alternate_trigger_views = false;
};

struct TrainResult {
  ClassifierModel model;
  std::vector<double> epoch_losses;
};

// Minibatch cross-entropy descent. Deterministic in cfg.seed. Throws
// InputError on an empty dataset or bad label, TrainingError if the loss
// becomes non-finite.
TrainResult TrainWithHistory(const ClassifierModel& init,
                             std::span<const TokenSeq> dataset,
                             const TrainConfig& cfg);
ClassifierModel Train(const ClassifierModel& init,
                      std::span<const TokenSeq> dataset,
                      const TrainConfig& cfg);
// Same as Train; exists to name the attack.
ClassifierModel FineTune(const ClassifierModel& model,
                         std::span<const TokenSeq> dataset,
                         const TrainConfig& cfg);

// Global magnitude pruning over the head parameters: the ceil(rate * count)
// smallest-magnitude entries become zero. The embedding table is untouched.
ClassifierModel Prune(const ClassifierModel& model, double rate);

// Checkpoint I/O (versioned JSON).
void SaveModel(const ClassifierModel& model, const std::string& path);
ClassifierModel LoadModel(const std::string& path);

}  // namespace dssmooth

#endif  // DSSMOOTH_TEXT_MODEL_H_
