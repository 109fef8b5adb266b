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

#include "dssmooth/harness.h"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "dssmooth/errors.h"
#include "dssmooth/parallel.h"

namespace dssmooth {
namespace {

std::uint64_t DeriveSeed(std::uint64_t seed, std::string_view a,
                         std::uint64_t i, std::string_view b) {
  return RandomStream(seed).Split(a).Split(i).Split(b).NextU64();
}

// Pronounceable word of 2-3 consonant-vowel syllables.
std::string MakeWord(RandomStream& s) {
  static constexpr std::string_view kConsonants = "bcdfghjklmnprstvz";
  static constexpr std::string_view kVowels = "aeiou";
  const int syllables = 2 + static_cast<int>(s.UniformInt(2));
  std::string w;
  for (int i = 0; i < syllables; ++i) {
    w.push_back(kConsonants[s.UniformInt(kConsonants.size())]);
    w.push_back(kVowels[s.UniformInt(kVowels.size())]);
  }
  return w;
}

struct Lexicon {
  std::vector<std::vector<std::string>> keywords;
  std::vector<std::string> fillers;
};

Lexicon MakeLexicon(const CorpusConfig& cfg) {
  RandomStream s = RandomStream(cfg.seed).Split("lexicon");
  std::set<std::string> used;
  auto fresh = [&] {
    for (;;) {
      std::string w = MakeWord(s);
      if (used.insert(w).second) return w;
    }
  };
  Lexicon lex;
  lex.keywords.resize(cfg.classes);
  for (auto& list : lex.keywords) {
    for (int i = 0; i < cfg.keywords_per_class; ++i) list.push_back(fresh());
  }
  for (int i = 0; i < cfg.filler_words; ++i) lex.fillers.push_back(fresh());
  return lex;
}

DatasetFile MakeSentences(const CorpusConfig& cfg, const Lexicon& lex,
                          RandomStream s, int count) {
  DatasetFile out;
  out.classes = cfg.classes;
  for (int r = 0; r < count; ++r) {
    DatasetRow row;
    row.label = 1 + static_cast<int>(s.UniformInt(cfg.classes));
    const int len =
        cfg.min_length +
        static_cast<int>(s.UniformInt(cfg.max_length - cfg.min_length + 1));
    for (int t = 0; t < len; ++t) {
      const double u = s.Uniform();
      const std::string* word;
      if (u < cfg.keyword_share) {
        const auto& list = lex.keywords[row.label - 1];
        word = &list[s.UniformInt(list.size())];
      } else if (u < cfg.keyword_share + cfg.cross_share && cfg.classes > 1) {
        int other = static_cast<int>(s.UniformInt(cfg.classes - 1));
        if (other >= row.label - 1) ++other;
        const auto& list = lex.keywords[other];
        word = &list[s.UniformInt(list.size())];
      } else {
        word = &lex.fillers[s.UniformInt(lex.fillers.size())];
      }
      if (t > 0) row.text.push_back(' ');
      row.text += *word;
    }
    out.rows.push_back(std::move(row));
  }
  return out;
}

nlohmann::json NoiseJson(const NoiseSpec& n) {
  return {{"sigma", n.sigma}, {"lambda", n.lambda}};
}

NoiseSpec NoiseFromJson(const nlohmann::json& j, NoiseSpec d) {
  d.sigma = j.value("sigma", d.sigma);
  d.lambda = j.value("lambda", d.lambda);
  return d;
}

nlohmann::json TrainJson(const TrainConfig& t) {
  return {{"epochs", t.epochs},
          {"batch_size", t.batch_size},
          {"learning_rate", t.learning_rate},
          {"optimizer", t.optimizer == Optimizer::kSgd ? "sgd" : "momentum"},
          {"momentum", t.momentum},
          {"seed", t.seed}};
}

TrainConfig TrainFromJson(const nlohmann::json& j, TrainConfig t) {
  t.epochs = j.value("epochs", t.epochs);
  t.batch_size = j.value("batch_size", t.batch_size);
  t.learning_rate = j.value("learning_rate", t.learning_rate);
  if (j.contains("optimizer")) {
    const std::string o = j.at("optimizer").get<std::string>();
    if (o == "sgd") {
      t.optimizer = Optimizer::kSgd;
    } else if (o == "momentum") {
      t.optimizer = Optimizer::kMomentum;
    } else {
      throw SchemaError("unknown optimizer '" + o + "'");
    }
  }
  t.momentum = j.value("momentum", t.momentum);
  t.seed = j.value("seed", t.seed);
  return t;
}

}  // namespace

void WriteJsonFile(const std::string& path, const nlohmann::json& j) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path);
  f << j.dump(2) << "\n";
  if (!f) throw IoError("write failed: " + path);
}

nlohmann::json ReadJsonFile(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path);
  try {
    return nlohmann::json::parse(f);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
}

// ------------------------------------------------------------- datasets

DatasetFile LoadDataset(const std::string& path, int declared_classes) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read " + path);
  DatasetFile out;
  std::string line;
  int line_no = 0;
  if (!std::getline(f, line)) throw ParseError(path + ": missing header");
  ++line_no;
  int max_label = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    const std::string where = path + ":" + std::to_string(line_no);
    if (tab == std::string::npos) {
      throw ParseError(where + ": expected label<TAB>text");
    }
    const std::string label_text = line.substr(0, tab);
    DatasetRow row;
    std::size_t used = 0;
    try {
      row.label = std::stoi(label_text, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != label_text.size()) {
      throw ParseError(where + ": label '" + label_text + "' is not an integer");
    }
    if (row.label < 1 || (declared_classes > 0 && row.label > declared_classes)) {
      throw SchemaError(where + ": label " + std::to_string(row.label) +
                        " outside 1.." +
                        std::to_string(declared_classes > 0 ? declared_classes
                                                            : row.label));
    }
    row.text = line.substr(tab + 1);
    max_label = std::max(max_label, row.label);
    out.rows.push_back(std::move(row));
  }
  if (out.rows.empty()) throw InputError(path + ": no rows");
  out.classes = declared_classes > 0 ? declared_classes : max_label;
  return out;
}

void SaveDataset(const std::string& path, const DatasetFile& data) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path);
  f << "label\ttext\n";
  for (const auto& r : data.rows) f << r.label << '\t' << r.text << '\n';
}

std::vector<TokenSeq> EncodeDataset(const DatasetFile& data, const Vocab& vocab,
                                    int n) {
  std::vector<TokenSeq> out;
  out.reserve(data.rows.size());
  for (const auto& r : data.rows) out.push_back(Encode(r.text, vocab, n, r.label));
  return out;
}

DatasetFile DecodeDataset(std::span<const TokenSeq> seqs, const Vocab& vocab,
                          int classes) {
  DatasetFile out;
  out.classes = classes;
  for (const auto& s : seqs) out.rows.push_back({s.label, Decode(s, vocab)});
  return out;
}

nlohmann::json CorpusConfig::ToJson() const {
  return {{"classes", classes},
          {"train_size", train_size},
          {"test_size", test_size},
          {"min_length", min_length},
          {"max_length", max_length},
          {"keywords_per_class", keywords_per_class},
          {"filler_words", filler_words},
          {"keyword_share", keyword_share},
          {"cross_share", cross_share},
          {"seed", seed}};
}

CorpusConfig CorpusConfig::FromJson(const nlohmann::json& j) {
  CorpusConfig c;
  c.classes = j.value("classes", c.classes);
  c.train_size = j.value("train_size", c.train_size);
  c.test_size = j.value("test_size", c.test_size);
  c.min_length = j.value("min_length", c.min_length);
  c.max_length = j.value("max_length", c.max_length);
  c.keywords_per_class = j.value("keywords_per_class", c.keywords_per_class);
  c.filler_words = j.value("filler_words", c.filler_words);
  c.keyword_share = j.value("keyword_share", c.keyword_share);
  c.cross_share = j.value("cross_share", c.cross_share);
  c.seed = j.value("seed", c.seed);
  return c;
}

Corpus GenerateCorpus(const CorpusConfig& cfg) {
  if (cfg.classes < 2 || cfg.min_length < 1 || cfg.max_length < cfg.min_length ||
      cfg.keywords_per_class < 1 || cfg.filler_words < 1) {
    throw ParameterError("CorpusConfig: invalid sizes");
  }
  const Lexicon lex = MakeLexicon(cfg);
  const RandomStream root(cfg.seed);
  Corpus c;
  c.train = MakeSentences(cfg, lex, root.Split("train"), cfg.train_size);
  c.test = MakeSentences(cfg, lex, root.Split("test"), cfg.test_size);
  return c;
}

// -------------------------------------------------------------- metrics

double BenignAccuracy(const ClassifierModel& model,
                      std::span<const TokenSeq> test) {
  if (test.empty()) throw InputError("benign accuracy on an empty set");
  std::size_t hit = 0;
  for (const auto& s : test) hit += model.PredictTokens(s) == s.label;
  return static_cast<double>(hit) / static_cast<double>(test.size());
}

double WatermarkSuccessRate(const ClassifierModel& model,
                            std::span<const TokenSeq> triggered,
                            int target_label) {
  if (triggered.empty()) throw InputError("WSR on an empty set");
  std::size_t hit = 0;
  for (const auto& s : triggered) hit += model.PredictTokens(s) == target_label;
  return static_cast<double>(hit) / static_cast<double>(triggered.size());
}

std::vector<TokenSeq> BuildTriggeredTestSet(std::span<const TokenSeq> test,
                                            const Vocab& vocab,
                                            const WatermarkPlan& plan) {
  const RandomStream root = RandomStream(plan.seed).Split("triggered_test");
  std::vector<TokenSeq> out;
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (test[i].label == plan.target_label) continue;
    RandomStream s = root.Split(i);
    out.push_back(
        InsertTriggerText(test[i], plan.trigger, vocab, plan.target_label, s).seq);
  }
  return out;
}

// --------------------------------------------------------------- config

ExperimentConfig ExperimentConfig::Desk(int classes) {
  ExperimentConfig c;
  c.name = classes == 2 ? "desk-k2" : "desk-k4";
  c.corpus.classes = classes;
  c.corpus.seed = 11;
  c.seq_len = 32;
  c.shape.classes = classes;
  c.shape.dim = 32;
  c.shape.hidden = 64;
  c.embedding_scale = 1.0;
  c.train.epochs = 20;
  c.train.batch_size = 32;
  c.train.learning_rate = 0.1;
  c.train.momentum = 0.9;
  c.plan = WatermarkPlan::BadWordDefault();
  c.plan.seed = 23;
  c.augment = {5.0, 5};
  c.randomize_augment_sigma = false;
  c.augment_views = 4;
  c.smoothing.noise = {5.0, 5};
  c.smoothing.samples = 1024;
  c.smoothing.seed = 29;
  c.verify.alpha0 = 0.05;
  c.verify.kappa = classes == 2 ? 0.2 : 0.05;
  c.noise_grid = {0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0};
  for (int i = 0; i <= 10; ++i) c.subspace_grid.push_back(-0.5 + 0.1 * i);
  c.finetune_schedule = {0, 1, 2, 4, 6};
  c.finetune = c.train;
  c.finetune.learning_rate = 0.05;
  c.prune_rates = {0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
  c.seed = 7;
  return c;
}

void ExperimentConfig::Validate() const {
  if (corpus.classes != shape.classes) {
    throw ParameterError("corpus and model disagree on the class count");
  }
  if (seq_len < 2) throw ParameterError("seq_len must be >= 2");
  if (plan.target_label > shape.classes) {
    throw ParameterError("target label exceeds the class count");
  }
  if (smoothing.noise.lambda > seq_len) {
    throw ParameterError("smoothing lambda exceeds seq_len");
  }
  if (pools.benign < 1 || pools.watermarked < 1 || pools.independent < 1 ||
      pools.vanilla < 0) {
    throw ParameterError("every pool needs at least one model");
  }
  if (scan.samples < 1 || scan.smoothed_samples < 1 || scan.draws < 1) {
    throw ParameterError("scan sizes must be positive");
  }
  plan.Validate();
  smoothing.Validate();
  verify.Validate();
  for (std::size_t i = 1; i < noise_grid.size(); ++i) {
    if (!(noise_grid[i] > noise_grid[i - 1])) {
      throw ParameterError("noise grid must be strictly ascending");
    }
  }
}

nlohmann::json ExperimentConfig::ToJson() const {
  return {{"name", name},
          {"train_path", train_path},
          {"test_path", test_path},
          {"corpus", corpus.ToJson()},
          {"seq_len", seq_len},
          {"model",
           {{"dim", shape.dim},
            {"hidden", shape.hidden},
            {"classes", shape.classes},
            {"embedding_scale", embedding_scale}}},
          {"train", TrainJson(train)},
          {"plan", plan.ToJson()},
          {"augment", NoiseJson(augment)},
          {"randomize_augment_sigma", randomize_augment_sigma},
          {"augment_views", augment_views},
          {"alternate_trigger_views", alternate_trigger_views},
          {"smoothing", smoothing.ToJson()},
          {"verify", verify.ToJson()},
          {"pools",
           {{"benign", pools.benign},
            {"watermarked", pools.watermarked},
            {"independent", pools.independent},
            {"vanilla", pools.vanilla}}},
          {"scan",
           {{"samples", scan.samples},
            {"smoothed_samples", scan.smoothed_samples},
            {"draws", scan.draws}}},
          {"noise_grid", noise_grid},
          {"subspace_grid", subspace_grid},
          {"finetune_schedule", finetune_schedule},
          {"finetune", TrainJson(finetune)},
          {"prune_rates", prune_rates},
          {"seed", seed}};
}

ExperimentConfig ExperimentConfig::FromJson(const nlohmann::json& j) {
  int classes = 4;
  if (j.contains("model")) classes = j["model"].value("classes", classes);
  if (j.contains("corpus")) classes = j["corpus"].value("classes", classes);
  ExperimentConfig c = Desk(classes);
  c.name = j.value("name", c.name);
  c.train_path = j.value("train_path", c.train_path);
  c.test_path = j.value("test_path", c.test_path);
  if (j.contains("corpus")) c.corpus = CorpusConfig::FromJson(j["corpus"]);
  c.seq_len = j.value("seq_len", c.seq_len);
  if (j.contains("model")) {
    const auto& m = j["model"];
    c.shape.dim = m.value("dim", c.shape.dim);
    c.shape.hidden = m.value("hidden", c.shape.hidden);
    c.shape.classes = m.value("classes", c.shape.classes);
    c.embedding_scale = m.value("embedding_scale", c.embedding_scale);
  }
  if (j.contains("train")) c.train = TrainFromJson(j["train"], c.train);
  if (j.contains("plan")) c.plan = WatermarkPlan::FromJson(j["plan"]);
  if (j.contains("augment")) c.augment = NoiseFromJson(j["augment"], c.augment);
  c.randomize_augment_sigma =
      j.value("randomize_augment_sigma", c.randomize_augment_sigma);
  c.augment_views = j.value("augment_views", c.augment_views);
  c.alternate_trigger_views =
      j.value("alternate_trigger_views", c.alternate_trigger_views);
  if (j.contains("smoothing")) {
    c.smoothing = SmoothingConfig::FromJson(j["smoothing"]);
  }
  if (j.contains("verify")) c.verify = VerifyConfig::FromJson(j["verify"]);
  if (j.contains("pools")) {
    const auto& p = j["pools"];
    c.pools.benign = p.value("benign", c.pools.benign);
    c.pools.watermarked = p.value("watermarked", c.pools.watermarked);
    c.pools.independent = p.value("independent", c.pools.independent);
    c.pools.vanilla = p.value("vanilla", c.pools.vanilla);
  }
  if (j.contains("scan")) {
    const auto& p = j["scan"];
    c.scan.samples = p.value("samples", c.scan.samples);
    c.scan.smoothed_samples = p.value("smoothed_samples", c.scan.smoothed_samples);
    c.scan.draws = p.value("draws", c.scan.draws);
  }
  c.noise_grid = j.value("noise_grid", c.noise_grid);
  c.subspace_grid = j.value("subspace_grid", c.subspace_grid);
  c.finetune_schedule = j.value("finetune_schedule", c.finetune_schedule);
  if (j.contains("finetune")) c.finetune = TrainFromJson(j["finetune"], c.finetune);
  c.prune_rates = j.value("prune_rates", c.prune_rates);
  c.seed = j.value("seed", c.seed);
  c.Validate();
  return c;
}

std::string ExperimentConfig::Hash() const {
  const std::string text = ToJson().dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ----------------------------------------------------------- experiment

Experiment PrepareExperiment(const ExperimentConfig& cfg) {
  cfg.Validate();
  Experiment exp;
  exp.cfg = cfg;
  DatasetFile train, test;
  if (!cfg.train_path.empty() || !cfg.test_path.empty()) {
    if (cfg.train_path.empty() || cfg.test_path.empty()) {
      throw InputError("train_path and test_path must be given together");
    }
    train = LoadDataset(cfg.train_path, cfg.shape.classes);
    test = LoadDataset(cfg.test_path, cfg.shape.classes);
  } else {
    Corpus c = GenerateCorpus(cfg.corpus);
    train = std::move(c.train);
    test = std::move(c.test);
  }
  std::vector<std::string> texts;
  for (const auto& r : train.rows) texts.push_back(r.text);
  for (const auto& r : test.rows) texts.push_back(r.text);
  exp.vocab = Vocab::Build(texts, cfg.plan.trigger.tokens);
  exp.train = EncodeDataset(train, exp.vocab, cfg.seq_len);
  exp.test = EncodeDataset(test, exp.vocab, cfg.seq_len);
  exp.cfg.shape.vocab_size = exp.vocab.size();
  exp.reference = ClassifierModel::Initialize(
      exp.cfg.shape, {cfg.embedding_scale, DeriveSeed(cfg.seed, "reference", 0, "init")});
  exp.protected_set =
      BuildWatermarkedDataset(exp.train, exp.vocab, cfg.plan, exp.reference);
  WatermarkPlan vanilla = cfg.plan;
  vanilla.group_size = 1;
  exp.vanilla_set =
      BuildWatermarkedDataset(exp.train, exp.vocab, vanilla, exp.reference);
  exp.triggered_test = BuildTriggeredTestSet(exp.test, exp.vocab, cfg.plan);
  return exp;
}

std::string PoolName(PoolKind kind) {
  switch (kind) {
    case PoolKind::kBenign:
      return "benign";
    case PoolKind::kWatermarked:
      return "watermarked";
    case PoolKind::kIndependent:
      return "independent";
    case PoolKind::kVanilla:
      return "vanilla";
  }
  return "benign";
}

PoolKind PoolFromName(const std::string& name) {
  if (name == "benign") return PoolKind::kBenign;
  if (name == "watermarked") return PoolKind::kWatermarked;
  if (name == "independent") return PoolKind::kIndependent;
  if (name == "vanilla") return PoolKind::kVanilla;
  throw ParameterError("unknown pool '" + name + "'");
}

ClassifierModel TrainPoolModel(const Experiment& exp, PoolKind kind, int i) {
  const ExperimentConfig& cfg = exp.cfg;
  const std::string name = PoolName(kind);
  const ClassifierModel init = ClassifierModel::Initialize(
      cfg.shape, {cfg.embedding_scale, DeriveSeed(cfg.seed, name, i, "init")});
  TrainConfig tc = cfg.train;
  tc.seed = DeriveSeed(cfg.seed, name, i, "train");
  switch (kind) {
    case PoolKind::kBenign:
      return Train(init, exp.train, tc);
    case PoolKind::kVanilla:
      return Train(init, exp.vanilla_set.samples, tc);
    case PoolKind::kWatermarked:
      tc.augment_scope = AugmentScope::kWatermarked;
      tc.augment_noise = cfg.augment;
      tc.randomize_sigma = cfg.randomize_augment_sigma;
      tc.augment_views = cfg.augment_views;
      tc.augment_keep_plain = true;
      tc.alternate_trigger_views = cfg.alternate_trigger_views;
      return Train(init, exp.protected_set.samples, tc);
    case PoolKind::kIndependent: {
      if (!cfg.train_path.empty()) {
        throw InputError("independent models need the synthetic corpus");
      }
      CorpusConfig cc = cfg.corpus;
      cc.test_size = 0;
      Lexicon lex = MakeLexicon(cc);
      DatasetFile data =
          MakeSentences(cc, lex, RandomStream(DeriveSeed(cfg.seed, name, i, "corpus")),
                        cc.train_size);
      return Train(init, EncodeDataset(data, exp.vocab, cfg.seq_len), tc);
    }
  }
  throw ParameterError("unknown pool kind");
}

std::vector<ClassifierModel> TrainPool(const Experiment& exp, PoolKind kind,
                                       int count) {
  std::vector<ClassifierModel> models(count);
  ParallelFor(count, [&](std::size_t i) {
    models[i] = TrainPoolModel(exp, kind, static_cast<int>(i));
  });
  return models;
}

Pools TrainPools(const Experiment& exp) {
  Pools p;
  p.benign = TrainPool(exp, PoolKind::kBenign, exp.cfg.pools.benign);
  p.watermarked = TrainPool(exp, PoolKind::kWatermarked, exp.cfg.pools.watermarked);
  p.independent = TrainPool(exp, PoolKind::kIndependent, exp.cfg.pools.independent);
  p.vanilla = TrainPool(exp, PoolKind::kVanilla, exp.cfg.pools.vanilla);
  return p;
}

void SavePool(const std::string& dir, PoolKind kind,
              std::span<const ClassifierModel> models) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < models.size(); ++i) {
    SaveModel(models[i], dir + "/" + PoolName(kind) + "_" + std::to_string(i) +
                             ".json");
  }
}

std::vector<ClassifierModel> LoadPool(const std::string& dir, PoolKind kind,
                                      int count) {
  std::vector<ClassifierModel> models;
  for (int i = 0; i < count; ++i) {
    models.push_back(
        LoadModel(dir + "/" + PoolName(kind) + "_" + std::to_string(i) + ".json"));
  }
  return models;
}

VerifyContext MakeVerifyContext(const Experiment& exp, const Threshold& thr) {
  VerifyContext ctx;
  ctx.test = exp.test;
  ctx.vocab = &exp.vocab;
  ctx.plan = exp.cfg.plan;
  ctx.smoothing = exp.cfg.smoothing;
  ctx.verify = exp.cfg.verify;
  ctx.threshold = thr;
  return ctx;
}

CalibrationSet Calibrate(const Experiment& exp,
                         std::span<const ClassifierModel> benign) {
  const VerifyContext ctx = MakeVerifyContext(exp, Threshold{});
  CalibrationSet cal;
  cal.values.resize(benign.size());
  ParallelFor(benign.size(), [&](std::size_t i) {
    cal.values[i] = BenignPrincipalProbability(benign[i], ctx).value;
  });
  for (std::size_t i = 0; i < benign.size(); ++i) {
    cal.model_ids.push_back("benign_" + std::to_string(i));
  }
  return cal;
}

PoolMetrics EvaluatePool(std::span<const ClassifierModel> models,
                         const VerifyContext& ctx) {
  if (models.empty()) throw InputError("cannot evaluate an empty pool");
  std::vector<SuspiciousResult> results(models.size());
  ParallelFor(models.size(), [&](std::size_t i) {
    results[i] = VerifySuspicious(models[i], ctx);
  });
  PoolMetrics m;
  double decided = 0, certified = 0, per_sample = 0;
  for (const auto& r : results) {
    m.wr.push_back(r.wr.value);
    m.verdicts.push_back(r.verdict);
    decided += r.verdict.decision;
    certified += r.verdict.certified();
    per_sample += r.per_sample_certified;
  }
  const double n = static_cast<double>(models.size());
  m.vsr = decided / n;
  m.wca = certified / n;
  m.wca_per_sample = per_sample / n;
  return m;
}

namespace {

double MeanOver(std::span<const ClassifierModel> models,
                const std::function<double(const ClassifierModel&)>& f) {
  double s = 0.0;
  for (const auto& m : models) s += f(m);
  return s / static_cast<double>(models.size());
}

nlohmann::json PoolJson(const PoolMetrics& m) {
  nlohmann::json verdicts = nlohmann::json::array();
  for (const auto& v : m.verdicts) verdicts.push_back(v.ToJson());
  return {{"vsr", m.vsr},
          {"wca", m.wca},
          {"wca_per_sample", m.wca_per_sample},
          {"wr", m.wr},
          {"verdicts", verdicts}};
}

}  // namespace

MetricsReport EvaluateExperiment(const Experiment& exp, const Pools& pools) {
  MetricsReport r;
  r.config_hash = exp.cfg.Hash();
  r.seed = exp.cfg.seed;
  r.classes = exp.cfg.shape.classes;
  const int target = exp.cfg.plan.target_label;
  r.ba_clean = MeanOver(pools.benign, [&](const ClassifierModel& m) {
    return BenignAccuracy(m, exp.test);
  });
  r.ba_watermarked = MeanOver(pools.watermarked, [&](const ClassifierModel& m) {
    return BenignAccuracy(m, exp.test);
  });
  r.wsr = MeanOver(pools.watermarked, [&](const ClassifierModel& m) {
    return WatermarkSuccessRate(m, exp.triggered_test, target);
  });
  const CalibrationSet cal = Calibrate(exp, pools.benign);
  r.calibration = cal.values;
  r.threshold = CalibrationThreshold(cal, exp.cfg.verify);
  const VerifyContext ctx = MakeVerifyContext(exp, r.threshold);
  r.watermarked = EvaluatePool(pools.watermarked, ctx);
  r.independent = EvaluatePool(pools.independent, ctx);
  r.fpr = r.independent.vsr;
  return r;
}

MetricsReport RunVerificationSuite(const ExperimentConfig& cfg) {
  const Experiment exp = PrepareExperiment(cfg);
  return EvaluateExperiment(exp, TrainPools(exp));
}

nlohmann::json MetricsReport::ToJson() const {
  return {{"format", "dssmooth-metrics"},
          {"config_hash", config_hash},
          {"seed", seed},
          {"classes", classes},
          {"ba_clean", ba_clean},
          {"ba_watermarked", ba_watermarked},
          {"wsr", wsr},
          {"threshold",
           {{"value", threshold.value},
            {"m", threshold.m},
            {"index", threshold.index},
            {"count", threshold.count}}},
          {"calibration", calibration},
          {"vsr", watermarked.vsr},
          {"wca", watermarked.wca},
          {"fpr", fpr},
          {"watermarked_pool", PoolJson(watermarked)},
          {"independent_pool", PoolJson(independent)}};
}

namespace {

NoiseGrid PoolNoiseGrid(std::span<const ClassifierModel> models,
                        const Experiment& exp) {
  NoiseGrid mean;
  for (const auto& m : models) {
    const NoiseGrid g = WsrUnderNoise(
        m, exp.triggered_test, exp.cfg.plan.target_label, exp.cfg.noise_grid,
        RandomStream(exp.cfg.seed).Split("noise_grid"));
    if (mean.sigmas.empty()) {
      mean.sigmas = g.sigmas;
      mean.wsr.assign(g.wsr.size(), 0.0);
    }
    for (std::size_t i = 0; i < g.wsr.size(); ++i) {
      mean.wsr[i] += g.wsr[i] / static_cast<double>(models.size());
    }
  }
  return mean;
}

std::span<const TokenSeq> Head(std::span<const TokenSeq> v, int count) {
  return v.first(std::min<std::size_t>(v.size(), count));
}

nlohmann::json RowsJson(std::span<const ResistanceRow> rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) {
    out.push_back(
        {{"x", r.x}, {"vsr", r.vsr}, {"wca", r.wca}, {"mean_wr", r.mean_wr}});
  }
  return out;
}

nlohmann::json ScanJson(const SubspaceScan& s) {
  return {{"eps_n", s.eps_n}, {"eps_a", s.eps_a}, {"wsr", s.wsr}};
}

}  // namespace

TrendReport RunTrendSuite(const Experiment& exp, const Pools& pools) {
  if (pools.vanilla.empty()) throw InputError("trend suite needs a vanilla pool");
  const ExperimentConfig& cfg = exp.cfg;
  TrendReport t;
  t.metrics = EvaluateExperiment(exp, pools);
  t.vanilla_noise = PoolNoiseGrid(pools.vanilla, exp);
  t.protected_noise = PoolNoiseGrid(pools.watermarked, exp);
  t.vanilla_rho = SpearmanRho(t.vanilla_noise.sigmas, t.vanilla_noise.wsr);
  t.protected_min_wsr = *std::min_element(t.protected_noise.wsr.begin(),
                                          t.protected_noise.wsr.end());

  const RandomStream scan_root = RandomStream(cfg.seed).Split("scan");
  t.vanilla_scan = RunSubspaceScan(
      pools.vanilla.front(), Head(exp.triggered_test, cfg.scan.samples),
      cfg.plan.target_label, cfg.subspace_grid, cfg.subspace_grid, scan_root);
  SmoothingConfig sc = cfg.smoothing;
  sc.samples = cfg.scan.draws;
  t.protected_scan = RunSubspaceScan(
      pools.watermarked.front(),
      Head(exp.triggered_test, cfg.scan.smoothed_samples),
      cfg.plan.target_label, cfg.subspace_grid, cfg.subspace_grid, scan_root,
      &sc);
  t.protected_scan.directions.clear();
  t.vanilla_scan.directions.clear();

  const VerifyContext ctx = MakeVerifyContext(exp, t.metrics.threshold);
  TrainConfig ft = cfg.finetune;
  ft.seed = DeriveSeed(cfg.seed, "finetune", 0, "train");
  t.finetune = FinetuneResistance(pools.watermarked, exp.train,
                                  cfg.finetune_schedule, ft, ctx);
  t.prune = PruneResistance(pools.watermarked, cfg.prune_rates, ctx);
  return t;
}

nlohmann::json TrendReport::ToJson() const {
  return {{"format", "dssmooth-trends"},
          {"config_hash", metrics.config_hash},
          {"seed", metrics.seed},
          {"classes", metrics.classes},
          {"noise",
           {{"sigma", vanilla_noise.sigmas},
            {"vanilla_wsr", vanilla_noise.wsr},
            {"protected_wsr", protected_noise.wsr},
            {"vanilla_spearman", vanilla_rho},
            {"protected_min_wsr", protected_min_wsr}}},
          {"vanilla_scan", ScanJson(vanilla_scan)},
          {"protected_scan", ScanJson(protected_scan)},
          {"finetune", RowsJson(finetune)},
          {"prune", RowsJson(prune)}};
}

void WriteTrendReport(const std::string& dir, const TrendReport& report) {
  std::filesystem::create_directories(dir);
  WriteJsonFile(dir + "/metrics.json", report.metrics.ToJson());
  WriteJsonFile(dir + "/trends.json", report.ToJson());
  WriteNoiseGridCsv(dir + "/noise_vanilla.csv", report.vanilla_noise);
  WriteNoiseGridCsv(dir + "/noise_protected.csv", report.protected_noise);
  WriteSubspaceCsv(dir + "/scan_vanilla.csv", report.vanilla_scan);
  WriteSubspaceCsv(dir + "/scan_protected.csv", report.protected_scan);
  WriteResistanceCsv(dir + "/finetune.csv", "epochs", report.finetune);
  WriteResistanceCsv(dir + "/prune.csv", "rate", report.prune);
}

}  // namespace dssmooth
