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

// dssmooth: command-line driver for the watermark / train / certify / verify
// / attack / report pipeline. Every stage reads and writes files under
// --out-dir, so runs can be resumed stage by stage.
//
// Exit codes: 0 success, 1 failed run (a JSON error record goes to stderr),
// 2 usage error.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dssmooth/attacks.h"
#include "dssmooth/errors.h"
#include "dssmooth/harness.h"
#include "json.hpp"

namespace {

using dssmooth::ExperimentConfig;
using nlohmann::json;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<double> sigma;
  std::optional<int> lambda;
  std::optional<int> samples;
  std::optional<double> alpha0;
  std::optional<double> kappa;
  std::optional<std::string> mode;
  std::string pool = "watermarked";
  std::string out_dir = "dssmooth_run";
  std::string calibration;
  std::string wr;
  std::string kind = "all";
  int classes = 4;
};

ExperimentConfig ResolveConfig(const Options& o) {
  ExperimentConfig cfg = o.config.empty()
                             ? ExperimentConfig::Desk(o.classes)
                             : ExperimentConfig::FromJson(
                                   dssmooth::ReadJsonFile(o.config));
  if (o.seed) cfg.seed = *o.seed;
  if (o.sigma) cfg.smoothing.noise.sigma = *o.sigma;
  if (o.lambda) cfg.smoothing.noise.lambda = *o.lambda;
  if (o.samples) cfg.smoothing.samples = *o.samples;
  if (o.mode) cfg.smoothing.mode = dssmooth::ModeFromName(*o.mode);
  if (o.alpha0) cfg.verify.alpha0 = *o.alpha0;
  if (o.kappa) cfg.verify.kappa = *o.kappa;
  cfg.Validate();
  return cfg;
}

json Envelope(const ExperimentConfig& cfg, const std::string& format) {
  return {{"format", format},
          {"config_hash", cfg.Hash()},
          {"seed", cfg.seed},
          {"smoothing_seed", cfg.smoothing.seed},
          {"plan_seed", cfg.plan.seed}};
}

int PoolCount(const ExperimentConfig& cfg, dssmooth::PoolKind kind) {
  switch (kind) {
    case dssmooth::PoolKind::kBenign:
      return cfg.pools.benign;
    case dssmooth::PoolKind::kWatermarked:
      return cfg.pools.watermarked;
    case dssmooth::PoolKind::kIndependent:
      return cfg.pools.independent;
    case dssmooth::PoolKind::kVanilla:
      return cfg.pools.vanilla;
  }
  return 0;
}

std::string ModelDir(const Options& o) { return o.out_dir + "/models"; }

bool PoolExists(const Options& o, dssmooth::PoolKind kind, int count) {
  return count == 0 ||
         std::filesystem::exists(ModelDir(o) + "/" + dssmooth::PoolName(kind) +
                                 "_" + std::to_string(count - 1) + ".json");
}

// Loads a pool from --out-dir, training and saving it first if absent.
std::vector<dssmooth::ClassifierModel> EnsurePool(
    const Options& o, const dssmooth::Experiment& exp,
    dssmooth::PoolKind kind) {
  const int count = PoolCount(exp.cfg, kind);
  if (PoolExists(o, kind, count)) {
    return dssmooth::LoadPool(ModelDir(o), kind, count);
  }
  std::cerr << "training " << count << " " << dssmooth::PoolName(kind)
            << " models\n";
  auto models = dssmooth::TrainPool(exp, kind, count);
  dssmooth::SavePool(ModelDir(o), kind, models);
  return models;
}

int RunWatermark(const Options& o) {
  const ExperimentConfig cfg = ResolveConfig(o);
  const dssmooth::Experiment exp = dssmooth::PrepareExperiment(cfg);
  std::filesystem::create_directories(o.out_dir);
  json c = cfg.ToJson();
  dssmooth::WriteJsonFile(o.out_dir + "/config.json", c);
  dssmooth::WriteJsonFile(o.out_dir + "/vocab.json", exp.vocab.ToJson());
  json manifest = exp.protected_set.manifest;
  manifest["config_hash"] = cfg.Hash();
  manifest["seed"] = cfg.seed;
  dssmooth::WriteJsonFile(o.out_dir + "/manifest.json", manifest);
  const int k = cfg.shape.classes;
  dssmooth::SaveDataset(o.out_dir + "/train.tsv",
                        dssmooth::DecodeDataset(exp.train, exp.vocab, k));
  dssmooth::SaveDataset(o.out_dir + "/test.tsv",
                        dssmooth::DecodeDataset(exp.test, exp.vocab, k));
  dssmooth::SaveDataset(
      o.out_dir + "/protected.tsv",
      dssmooth::DecodeDataset(exp.protected_set.samples, exp.vocab, k));
  std::printf("watermarked %zu of %zu samples; manifest at %s/manifest.json\n",
              exp.protected_set.subset.size(), exp.train.size(),
              o.out_dir.c_str());
  return 0;
}

int RunTrain(const Options& o) {
  const ExperimentConfig cfg = ResolveConfig(o);
  const dssmooth::Experiment exp = dssmooth::PrepareExperiment(cfg);
  const dssmooth::PoolKind kind = dssmooth::PoolFromName(o.pool);
  const int count = PoolCount(cfg, kind);
  auto models = dssmooth::TrainPool(exp, kind, count);
  dssmooth::SavePool(ModelDir(o), kind, models);
  double ba = 0.0;
  for (const auto& m : models) ba += dssmooth::BenignAccuracy(m, exp.test);
  std::printf("trained %d %s models; mean BA %.4f\n", count, o.pool.c_str(),
              count > 0 ? ba / count : 0.0);
  return 0;
}

int RunCertify(const Options& o) {
  const ExperimentConfig cfg = ResolveConfig(o);
  const dssmooth::Experiment exp = dssmooth::PrepareExperiment(cfg);
  const dssmooth::PoolKind kind = dssmooth::PoolFromName(o.pool);
  const auto models = EnsurePool(o, exp, kind);
  std::filesystem::create_directories(o.out_dir);
  if (kind == dssmooth::PoolKind::kBenign) {
    dssmooth::CalibrationSet cal = dssmooth::Calibrate(exp, models);
    json j = Envelope(cfg, "dssmooth-calibration");
    j["smoothing"] = cfg.smoothing.Normalized().ToJson();
    j["calibration"] = cal.ToJson();
    const std::string path = o.out_dir + "/calibration.json";
    dssmooth::WriteJsonFile(path, j);
    std::printf("principal probabilities of %zu benign models -> %s\n",
                models.size(), path.c_str());
    return 0;
  }
  const dssmooth::VerifyContext ctx =
      dssmooth::MakeVerifyContext(exp, dssmooth::Threshold{});
  std::vector<dssmooth::SuspiciousResult> results(models.size());
  for (std::size_t i = 0; i < models.size(); ++i) {
    results[i] = dssmooth::VerifySuspicious(models[i], ctx);
  }
  json j = Envelope(cfg, "dssmooth-wr");
  const dssmooth::SmoothingConfig sc = cfg.smoothing.Normalized();
  j["smoothing"] = sc.ToJson();
  j["records"] = json::array();
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    j["records"].push_back({{"model", o.pool + "_" + std::to_string(i)},
                            {"wr", dssmooth::ToJson(r.wr)},
                            {"r_e", r.verdict.r_e},
                            {"r_p", r.verdict.r_p},
                            {"sigma", sc.noise.sigma},
                            {"lambda", sc.noise.lambda}});
  }
  const std::string path = o.out_dir + "/wr_" + o.pool + ".json";
  dssmooth::WriteJsonFile(path, j);
  std::printf("watermark robustness of %zu %s models -> %s\n", models.size(),
              o.pool.c_str(), path.c_str());
  return 0;
}

int RunVerify(const Options& o) {
  if (o.calibration.empty() || o.wr.empty()) {
    throw dssmooth::ParameterError("verify needs --calibration and --wr");
  }
  const json cal_j = dssmooth::ReadJsonFile(o.calibration);
  const json wr_j = dssmooth::ReadJsonFile(o.wr);
  const dssmooth::CalibrationSet cal = dssmooth::CalibrationSet::FromJson(
      cal_j.contains("calibration") ? cal_j["calibration"] : cal_j);
  dssmooth::VerifyConfig vc;
  if (!o.config.empty()) vc = ResolveConfig(o).verify;
  if (o.alpha0) vc.alpha0 = *o.alpha0;
  if (o.kappa) vc.kappa = *o.kappa;
  vc.Validate();
  const dssmooth::Threshold thr = dssmooth::CalibrationThreshold(cal, vc);

  const json& records = wr_j.contains("records") ? wr_j["records"]
                                                 : json::array({wr_j});
  json out = {{"format", "dssmooth-verdicts"},
              {"config_hash", wr_j.value("config_hash", "")},
              {"seed", wr_j.value("seed", 0)},
              {"verdicts", json::array()}};
  int decided = 0, certified = 0;
  for (const auto& rec : records) {
    const double wr = rec.at("wr").is_object() ? rec["wr"].at("value").get<double>()
                                               : rec.at("wr").get<double>();
    dssmooth::NoiseSpec noise;
    noise.sigma = rec.value("sigma", 0.0);
    noise.lambda = rec.value("lambda", 1);
    dssmooth::Verdict v = dssmooth::CertifiedDecision(
        wr, thr.value, rec.value("r_e", 0.0), rec.value("r_p", 0.0), noise);
    dssmooth::AttachCalibration(v, thr, vc);
    const std::string id = rec.value("model", "suspicious");
    std::printf("%s decision=%s certified=%s wr=%.6f threshold=%.6f\n",
                id.c_str(), v.decision ? "true" : "false",
                v.certified() ? "true" : "false", v.wr, v.threshold);
    decided += v.decision;
    certified += v.certified();
    json vj = v.ToJson();
    vj["model"] = id;
    out["verdicts"].push_back(vj);
  }
  const double n = static_cast<double>(records.size());
  out["vsr"] = n > 0 ? decided / n : 0.0;
  out["wca"] = n > 0 ? certified / n : 0.0;
  std::filesystem::create_directories(o.out_dir);
  dssmooth::WriteJsonFile(o.out_dir + "/verdict.json", out);
  return 0;
}

dssmooth::Threshold LoadOrCalibrate(const Options& o,
                                    const dssmooth::Experiment& exp) {
  std::string path = o.calibration;
  if (path.empty() && std::filesystem::exists(o.out_dir + "/calibration.json")) {
    path = o.out_dir + "/calibration.json";
  }
  dssmooth::CalibrationSet cal;
  if (!path.empty()) {
    const json j = dssmooth::ReadJsonFile(path);
    cal = dssmooth::CalibrationSet::FromJson(
        j.contains("calibration") ? j["calibration"] : j);
  } else {
    cal = dssmooth::Calibrate(exp, EnsurePool(o, exp, dssmooth::PoolKind::kBenign));
  }
  return dssmooth::CalibrationThreshold(cal, exp.cfg.verify);
}

int RunAttack(const Options& o) {
  const ExperimentConfig cfg = ResolveConfig(o);
  const dssmooth::Experiment exp = dssmooth::PrepareExperiment(cfg);
  const dssmooth::PoolKind kind = dssmooth::PoolFromName(o.pool);
  const auto models = EnsurePool(o, exp, kind);
  if (models.empty()) throw dssmooth::InputError("pool is empty");
  const std::string dir = o.out_dir + "/attack";
  std::filesystem::create_directories(dir);
  const bool all = o.kind == "all";
  bool ran = false;
  if (all || o.kind == "noise") {
    dssmooth::NoiseGrid mean;
    for (const auto& m : models) {
      auto g = dssmooth::WsrUnderNoise(
          m, exp.triggered_test, cfg.plan.target_label, cfg.noise_grid,
          dssmooth::RandomStream(cfg.seed).Split("noise_grid"));
      if (mean.sigmas.empty()) {
        mean.sigmas = g.sigmas;
        mean.wsr.assign(g.wsr.size(), 0.0);
      }
      for (std::size_t i = 0; i < g.wsr.size(); ++i) {
        mean.wsr[i] += g.wsr[i] / static_cast<double>(models.size());
      }
    }
    dssmooth::WriteNoiseGridCsv(dir + "/noise_" + o.pool + ".csv", mean);
    std::printf("noise grid: spearman(sigma, wsr) = %.4f\n",
                dssmooth::SpearmanRho(mean.sigmas, mean.wsr));
    ran = true;
  }
  if (all || o.kind == "subspace") {
    std::span<const dssmooth::TokenSeq> batch = exp.triggered_test;
    batch = batch.first(std::min<std::size_t>(batch.size(), cfg.scan.samples));
    const auto scan = dssmooth::RunSubspaceScan(
        models.front(), batch, cfg.plan.target_label, cfg.subspace_grid,
        cfg.subspace_grid, dssmooth::RandomStream(cfg.seed).Split("scan"));
    dssmooth::WriteSubspaceCsv(dir + "/scan_" + o.pool + ".csv", scan);
    std::printf("subspace scan: %zu x %zu cells\n", scan.eps_n.size(),
                scan.eps_a.size());
    ran = true;
  }
  if (all || o.kind == "finetune" || o.kind == "prune") {
    const dssmooth::VerifyContext ctx =
        dssmooth::MakeVerifyContext(exp, LoadOrCalibrate(o, exp));
    if (all || o.kind == "finetune") {
      const auto rows = dssmooth::FinetuneResistance(
          models, exp.train, cfg.finetune_schedule, cfg.finetune, ctx);
      dssmooth::WriteResistanceCsv(dir + "/finetune_" + o.pool + ".csv",
                                   "epochs", rows);
      for (const auto& r : rows) {
        std::printf("finetune epochs=%g vsr=%.3f wca=%.3f\n", r.x, r.vsr, r.wca);
      }
    }
    if (all || o.kind == "prune") {
      const auto rows = dssmooth::PruneResistance(models, cfg.prune_rates, ctx);
      dssmooth::WriteResistanceCsv(dir + "/prune_" + o.pool + ".csv", "rate",
                                   rows);
      for (const auto& r : rows) {
        std::printf("prune rate=%g vsr=%.3f wca=%.3f\n", r.x, r.vsr, r.wca);
      }
    }
    ran = true;
  }
  if (!ran) throw dssmooth::ParameterError("unknown attack kind '" + o.kind + "'");
  return 0;
}

int RunReport(const Options& o) {
  const ExperimentConfig cfg = ResolveConfig(o);
  const dssmooth::Experiment exp = dssmooth::PrepareExperiment(cfg);
  dssmooth::Pools pools;
  pools.benign = EnsurePool(o, exp, dssmooth::PoolKind::kBenign);
  pools.watermarked = EnsurePool(o, exp, dssmooth::PoolKind::kWatermarked);
  pools.independent = EnsurePool(o, exp, dssmooth::PoolKind::kIndependent);
  pools.vanilla = EnsurePool(o, exp, dssmooth::PoolKind::kVanilla);
  const dssmooth::TrendReport t = dssmooth::RunTrendSuite(exp, pools);
  dssmooth::WriteTrendReport(o.out_dir, t);

  const auto& m = t.metrics;
  const double fpr_bound = cfg.shape.classes == 2 ? 0.10 : 0.14;
  const auto& ft = t.finetune;
  const auto& pr = t.prune;
  double prune_drop = 0.0;
  for (const auto& r : pr) {
    if (r.x <= 0.8 + 1e-12) {
      prune_drop = std::max(prune_drop, pr.front().vsr - r.vsr);
      prune_drop = std::max(prune_drop, pr.front().wca - r.wca);
    }
  }
  struct Row {
    std::string name;
    double value;
    std::string target;
  };
  const std::vector<Row> rows = {
      {"ba_gap", m.ba_clean - m.ba_watermarked, "<= 0.03"},
      {"wsr", m.wsr, ">= 0.95"},
      {"vanilla_noise_spearman", t.vanilla_rho, "<= -0.8"},
      {"protected_noise_min_wsr", t.protected_min_wsr, ">= 0.9"},
      {"fpr", m.fpr, "<= " + std::to_string(fpr_bound).substr(0, 4)},
      {"vsr", m.watermarked.vsr, ">= wca"},
      {"wca", m.watermarked.wca, ">= fpr + 0.3"},
      {"finetune_vsr_ratio",
       ft.front().vsr > 0 ? ft.back().vsr / ft.front().vsr : 0.0, ">= 0.7"},
      {"finetune_wca_ratio",
       ft.front().wca > 0 ? ft.back().wca / ft.front().wca : 0.0, ">= 0.7"},
      {"prune_max_drop_to_0.8", prune_drop, "<= 0.2"},
      {"prune_vsr_at_1.0", pr.back().vsr, "collapse"},
  };
  std::FILE* f = std::fopen((o.out_dir + "/table.csv").c_str(), "w");
  if (f == nullptr) throw dssmooth::IoError("cannot write table.csv");
  std::fprintf(f, "metric,value,target\n");
  std::printf("config %s  K=%d\n", m.config_hash.c_str(), m.classes);
  for (const auto& r : rows) {
    std::fprintf(f, "%s,%.6f,%s\n", r.name.c_str(), r.value, r.target.c_str());
    std::printf("%-26s %9.4f   %s\n", r.name.c_str(), r.value, r.target.c_str());
  }
  std::fclose(f);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual-space smoothed dataset watermarking pipeline"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* c) {
    c->add_option("--config", o.config, "experiment config (JSON)");
    c->add_option("--classes", o.classes,
                  "class count of the built-in desk config")
        ->check(CLI::IsMember({2, 4}));
    c->add_option("--seed", o.seed, "global seed");
    c->add_option("--sigma", o.sigma, "embedding noise scale");
    c->add_option("--lambda", o.lambda, "permutation group size");
    c->add_option("--samples", o.samples, "Monte Carlo draws M");
    c->add_option("--mode", o.mode, "dual | gaussian_only");
    c->add_option("--alpha0", o.alpha0, "significance level");
    c->add_option("--kappa", o.kappa, "share of top calibration values dropped");
    c->add_option("--out-dir", o.out_dir, "artifact directory");
  };
  auto* wm = app.add_subcommand("watermark", "build the protected dataset and manifest");
  auto* train = app.add_subcommand("train", "train a model pool");
  auto* certify = app.add_subcommand("certify", "WR or PP records for a pool");
  auto* verify = app.add_subcommand("verify", "ownership verdicts from records");
  auto* attack = app.add_subcommand("attack", "noise, subspace and adaptive attacks");
  auto* report = app.add_subcommand("report", "full desk run and summary table");
  for (auto* c : {wm, train, certify, verify, attack, report}) add_common(c);
  for (auto* c : {train, certify, attack}) {
    c->add_option("--pool", o.pool, "benign | watermarked | independent | vanilla");
  }
  verify->add_option("--calibration", o.calibration, "calibration record")
      ->required();
  verify->add_option("--wr", o.wr, "WR record")->required();
  attack->add_option("--calibration", o.calibration, "calibration record");
  attack->add_option("--kind", o.kind, "all | noise | subspace | finetune | prune");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*wm) return RunWatermark(o);
    if (*train) return RunTrain(o);
    if (*certify) return RunCertify(o);
    if (*verify) return RunVerify(o);
    if (*attack) return RunAttack(o);
    if (*report) return RunReport(o);
  } catch (const dssmooth::Error& e) {
    std::cerr << json{{"error", e.kind()}, {"message", e.what()}}.dump() << "\n";
    return 1;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << json{{"error", "schema"}, {"message", e.what()}}.dump() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", "internal"}, {"message", e.what()}}.dump() << "\n";
    return 1;
  }
  return 2;
}
