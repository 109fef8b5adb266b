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

// Experiment plumbing: TSV datasets, a synthetic topic corpus, model pools
// (benign, watermarked, independent), the BA/WSR/VSR/WCA metrics and the
// end-to-end verification suite.

#ifndef DSSMOOTH_HARNESS_H_
#define DSSMOOTH_HARNESS_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dssmooth/attacks.h"
#include "dssmooth/certify.h"
#include "dssmooth/text_model.h"
#include "dssmooth/verify.h"
#include "dssmooth/watermark.h"
#include "json.hpp"

namespace dssmooth {

// Pretty-printed JSON file I/O. Reading throws IoError on a missing file and
// ParseError on malformed content.
void WriteJsonFile(const std::string& path, const nlohmann::json& j);
nlohmann::json ReadJsonFile(const std::string& path);

struct DatasetRow {
  int label = 1;
  std::string text;
};

struct DatasetFile {
  std::vector<DatasetRow> rows;
  int classes = 0;
};

// Reads "label<TAB>text" rows after a header line. With declared_classes > 0
// labels must lie in 1..declared_classes (SchemaError otherwise); with 0 the
// class count is the largest label. Malformed rows raise ParseError naming
// the line.
DatasetFile LoadDataset(const std::string& path, int declared_classes = 0);
void SaveDataset(const std::string& path, const DatasetFile& data);

std::vector<TokenSeq> EncodeDataset(const DatasetFile& data, const Vocab& vocab,
                                    int n);
DatasetFile DecodeDataset(std::span<const TokenSeq> seqs, const Vocab& vocab,
                          int classes);

struct CorpusConfig {
  int classes = 4;
  int train_size = 2000;
  int test_size = 500;
  int min_length = 8;
  int max_length = 20;
  int keywords_per_class = 24;
  int filler_words = 160;
  double keyword_share = 0.3;  // own-class keywords
  double cross_share = 0.1;    // keywords of another class
  std::uint64_t seed = 0;

  nlohmann::json ToJson() const;
  static CorpusConfig FromJson(const nlohmann::json& j);
};

struct Corpus {
  DatasetFile train;
  DatasetFile test;
};

// Topic-style corpus: each class owns a keyword list, fillers are shared.
// Words are pronounceable letter strings of at least four characters, so they
// never collide with the short trigger words.
Corpus GenerateCorpus(const CorpusConfig& cfg);

// Fraction of samples classified to their label. Throws InputError on empty.
double BenignAccuracy(const ClassifierModel& model,
                      std::span<const TokenSeq> test);
// Fraction of samples predicted as `target_label`. Throws InputError on empty.
double WatermarkSuccessRate(const ClassifierModel& model,
                            std::span<const TokenSeq> triggered,
                            int target_label);

// Test samples whose label differs from the target, with the trigger
// inserted and the label set to the target.
std::vector<TokenSeq> BuildTriggeredTestSet(std::span<const TokenSeq> test,
                                            const Vocab& vocab,
                                            const WatermarkPlan& plan);

struct PoolSizes {
  int benign = 30;
  int watermarked = 10;
  int independent = 10;
  int vanilla = 3;  // plain-trigger baseline for the noise trend
};

// Sizes of the subspace scans in the trend suite.
struct ScanConfig {
  int samples = 100;          // triggered samples, plain predictions
  int smoothed_samples = 40;  // triggered samples, smoothed predictions
  int draws = 128;            // Monte Carlo draws per smoothed prediction
};

struct ExperimentConfig {
  std::string name = "desk";
  std::string train_path;  // optional TSV inputs; empty uses the corpus
  std::string test_path;
  CorpusConfig corpus;
  int seq_len = 32;
  ModelShape shape;  // vocab_size filled in from the vocabulary
  double embedding_scale = 1.0;
  TrainConfig train;
  WatermarkPlan plan;
  // Noise augmentation on watermarked samples during protected training.
  NoiseSpec augment;
  bool randomize_augment_sigma = false;
  int augment_views = 4;
  bool alternate_trigger_views = true;
  SmoothingConfig smoothing;
  VerifyConfig verify;
  PoolSizes pools;
  std::vector<double> noise_grid;
  std::vector<double> subspace_grid;
  std::vector<int> finetune_schedule;
  std::vector<double> prune_rates;
  TrainConfig finetune;
  ScanConfig scan;
  std::uint64_t seed = 0;

  // Desk-scale defaults for a 4-class or 2-class run.
  static ExperimentConfig Desk(int classes);
  void Validate() const;
  nlohmann::json ToJson() const;
  static ExperimentConfig FromJson(const nlohmann::json& j);
  // FNV-1a over the canonical JSON dump, as 16 hex digits.
  std::string Hash() const;
};

// Data and reference objects shared by every stage.
struct Experiment {
  ExperimentConfig cfg;
  Vocab vocab;
  std::vector<TokenSeq> train;
  std::vector<TokenSeq> test;
  ClassifierModel reference;  // initialized model used for dataset lookups
  WatermarkedDataset protected_set;
  WatermarkedDataset vanilla_set;  // same triggers, no permutation watermark
  std::vector<TokenSeq> triggered_test;
};

Experiment PrepareExperiment(const ExperimentConfig& cfg);

enum class PoolKind { kBenign, kWatermarked, kIndependent, kVanilla };
std::string PoolName(PoolKind kind);
PoolKind PoolFromName(const std::string& name);

// The i-th model of a pool, trained from its own split of the experiment
// seed. Watermarked models use noise augmentation on flagged samples;
// independent models train on a fresh corpus draw.
ClassifierModel TrainPoolModel(const Experiment& exp, PoolKind kind, int i);
std::vector<ClassifierModel> TrainPool(const Experiment& exp, PoolKind kind,
                                       int count);

struct Pools {
  std::vector<ClassifierModel> benign;
  std::vector<ClassifierModel> watermarked;
  std::vector<ClassifierModel> independent;
  std::vector<ClassifierModel> vanilla;
};
Pools TrainPools(const Experiment& exp);

// Saves / loads "<dir>/<pool>_<i>.json" checkpoints.
void SavePool(const std::string& dir, PoolKind kind,
              std::span<const ClassifierModel> models);
std::vector<ClassifierModel> LoadPool(const std::string& dir, PoolKind kind,
                                      int count);

CalibrationSet Calibrate(const Experiment& exp,
                         std::span<const ClassifierModel> benign);
VerifyContext MakeVerifyContext(const Experiment& exp, const Threshold& thr);

struct PoolMetrics {
  double vsr = 0.0;
  double wca = 0.0;
  double wca_per_sample = 0.0;
  std::vector<double> wr;
  std::vector<Verdict> verdicts;
};
PoolMetrics EvaluatePool(std::span<const ClassifierModel> models,
                         const VerifyContext& ctx);

struct MetricsReport {
  std::string config_hash;
  std::uint64_t seed = 0;
  int classes = 0;
  double ba_clean = 0.0;        // benign pool mean
  double ba_watermarked = 0.0;  // watermarked pool mean
  double wsr = 0.0;             // watermarked pool mean
  Threshold threshold;
  std::vector<double> calibration;
  PoolMetrics watermarked;
  PoolMetrics independent;
  double fpr = 0.0;  // independent-pool VSR

  nlohmann::json ToJson() const;
};

MetricsReport EvaluateExperiment(const Experiment& exp, const Pools& pools);
// PrepareExperiment + TrainPools + EvaluateExperiment.
MetricsReport RunVerificationSuite(const ExperimentConfig& cfg);

// Noise, subspace and adaptive-attack trends on top of the metrics.
struct TrendReport {
  MetricsReport metrics;
  NoiseGrid vanilla_noise;  // pool means
  NoiseGrid protected_noise;
  double vanilla_rho = 0.0;  // Spearman rank correlation, sigma vs WSR
  double protected_min_wsr = 0.0;
  SubspaceScan vanilla_scan;    // first vanilla model, plain predictions
  SubspaceScan protected_scan;  // first watermarked model, smoothed
  std::vector<ResistanceRow> finetune;
  std::vector<ResistanceRow> prune;

  nlohmann::json ToJson() const;
};

// Needs non-empty benign, watermarked, independent and vanilla pools.
TrendReport RunTrendSuite(const Experiment& exp, const Pools& pools);

// Writes metrics.json, trends.json and the long-format CSVs into `dir`.
void WriteTrendReport(const std::string& dir, const TrendReport& report);

}  // namespace dssmooth

#endif  // DSSMOOTH_HARNESS_H_
