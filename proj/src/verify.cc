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

#include "dssmooth/verify.h"

#include <algorithm>
#include <cmath>

#include "dssmooth/errors.h"

namespace dssmooth {

void VerifyConfig::Validate() const {
  if (!(alpha0 > 0.0 && alpha0 < 1.0)) {
    throw ParameterError("alpha0 must lie in (0, 1)");
  }
  if (!(kappa >= 0.0 && kappa < 1.0)) {
    throw ParameterError("kappa must lie in [0, 1)");
  }
}

nlohmann::json VerifyConfig::ToJson() const {
  return {{"alpha0", alpha0}, {"kappa", kappa}};
}

VerifyConfig VerifyConfig::FromJson(const nlohmann::json& j) {
  VerifyConfig c;
  c.alpha0 = j.value("alpha0", c.alpha0);
  c.kappa = j.value("kappa", c.kappa);
  c.Validate();
  return c;
}

nlohmann::json CalibrationSet::ToJson() const {
  return {{"format", "dssmooth-calibration"},
          {"values", values},
          {"model_ids", model_ids}};
}

CalibrationSet CalibrationSet::FromJson(const nlohmann::json& j) {
  CalibrationSet c;
  c.values = j.at("values").get<std::vector<double>>();
  c.model_ids = j.value("model_ids", std::vector<std::string>{});
  for (double v : c.values) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw SchemaError("calibration value outside [0, 1]");
    }
  }
  return c;
}

Threshold CalibrationThreshold(const CalibrationSet& cal,
                               const VerifyConfig& cfg) {
  cfg.Validate();
  const int j_count = static_cast<int>(cal.values.size());
  if (j_count < 1) throw CalibrationError("calibration set is empty");
  Threshold t;
  t.count = j_count;
  t.m = static_cast<int>(std::floor(cfg.kappa * j_count));
  const int kept = j_count - t.m;
  t.index = kept - static_cast<int>(std::floor(cfg.alpha0 * (kept + 1)));
  if (t.index < 1) {
    throw CalibrationError("order-statistic index " + std::to_string(t.index) +
                           " < 1 for J=" + std::to_string(j_count) +
                           "; add benign models or raise alpha0");
  }
  std::vector<double> sorted = cal.values;
  std::sort(sorted.begin(), sorted.end());
  t.value = sorted[t.index - 1];
  return t;
}

bool DecideOwnership(double wr, double threshold) { return wr > threshold; }

Verdict CertifiedDecision(double wr, double threshold, double r_e, double r_p,
                          const NoiseSpec& noise) {
  if (noise.lambda < 1) throw ParameterError("lambda must be >= 1");
  if (r_e < 0.0 || r_p < 0.0) throw ParameterError("radii must be >= 0");
  Verdict v;
  v.wr = wr;
  v.threshold = threshold;
  v.r_e = r_e;
  v.r_p = r_p;
  v.sigma = noise.sigma;
  v.lambda = noise.lambda;
  v.decision = DecideOwnership(wr, threshold);
  if (noise.sigma > 0.0) {
    v.offset_embedding = StdNormalCdf(r_e / noise.sigma);
  } else if (r_e == 0.0) {
    v.offset_embedding = 0.5;
  } else {
    throw DomainError("embedding offset undefined: sigma = 0 with r_e > 0");
  }
  v.offset_permutation = r_p / (2.0 * noise.lambda);
  v.certified_embedding = wr > v.offset_embedding + threshold;
  v.certified_permutation = wr > v.offset_permutation + threshold;
  return v;
}

void AttachCalibration(Verdict& v, const Threshold& thr,
                       const VerifyConfig& cfg) {
  v.alpha0 = cfg.alpha0;
  v.kappa = cfg.kappa;
  v.m = thr.m;
  v.index = thr.index;
  v.calibration_size = thr.count;
}

nlohmann::json Verdict::ToJson() const {
  return {{"format", "dssmooth-verdict"},
          {"wr", wr},
          {"threshold", threshold},
          {"decision", decision},
          {"certified_embedding", certified_embedding},
          {"certified_permutation", certified_permutation},
          {"r_e", r_e},
          {"r_p", r_p},
          {"offset_embedding", offset_embedding},
          {"offset_permutation", offset_permutation},
          {"sigma", sigma},
          {"lambda", lambda},
          {"alpha0", alpha0},
          {"kappa", kappa},
          {"m", m},
          {"index", index},
          {"calibration_size", calibration_size}};
}

Verdict Verdict::FromJson(const nlohmann::json& j) {
  Verdict v;
  v.wr = j.at("wr").get<double>();
  v.threshold = j.at("threshold").get<double>();
  v.decision = j.at("decision").get<bool>();
  v.certified_embedding = j.at("certified_embedding").get<bool>();
  v.certified_permutation = j.at("certified_permutation").get<bool>();
  v.r_e = j.at("r_e").get<double>();
  v.r_p = j.at("r_p").get<double>();
  v.offset_embedding = j.at("offset_embedding").get<double>();
  v.offset_permutation = j.at("offset_permutation").get<double>();
  v.sigma = j.at("sigma").get<double>();
  v.lambda = j.at("lambda").get<int>();
  v.alpha0 = j.value("alpha0", 0.0);
  v.kappa = j.value("kappa", 0.0);
  v.m = j.value("m", 0);
  v.index = j.value("index", 0);
  v.calibration_size = j.value("calibration_size", 0);
  return v;
}

double FalsePositiveRate(std::span<const double> wrs, double threshold) {
  if (wrs.empty()) throw InputError("false-positive trial needs models");
  const auto hits = std::count_if(wrs.begin(), wrs.end(), [&](double wr) {
    return DecideOwnership(wr, threshold);
  });
  return static_cast<double>(hits) / static_cast<double>(wrs.size());
}

std::vector<std::size_t> SelectVerificationSamples(
    const ClassifierModel& model, std::span<const TokenSeq> test) {
  const int k = model.shape().classes;
  std::vector<std::size_t> out(k, test.size());
  int found = 0;
  for (std::size_t i = 0; i < test.size() && found < k; ++i) {
    const int label = test[i].label;
    if (label < 1 || label > k || out[label - 1] != test.size()) continue;
    if (model.PredictTokens(test[i]) == label) {
      out[label - 1] = i;
      ++found;
    }
  }
  // A class the model never gets right (e.g. a fully pruned head) falls back
  // to its first test sample so that such models can still be verified.
  for (int c = 0; c < k && found < k; ++c) {
    if (out[c] != test.size()) continue;
    for (std::size_t i = 0; i < test.size(); ++i) {
      if (test[i].label == c + 1) {
        out[c] = i;
        ++found;
        break;
      }
    }
  }
  if (found < k) throw InputError("some class has no test sample");
  return out;
}

PpResult BenignPrincipalProbability(const ClassifierModel& model,
                                    const VerifyContext& ctx) {
  const std::vector<std::size_t> idx = SelectVerificationSamples(model, ctx.test);
  std::vector<DualSpaceRep> reps;
  for (std::size_t i : idx) reps.push_back(Embed(ctx.test[i], model));
  return PrincipalProbability(model, reps, ctx.smoothing);
}

SuspiciousResult VerifySuspicious(const ClassifierModel& model,
                                  const VerifyContext& ctx) {
  if (ctx.vocab == nullptr) throw ParameterError("VerifyContext needs a vocab");
  SuspiciousResult out;
  out.sample_indices = SelectVerificationSamples(model, ctx.test);
  const RandomStream root = RandomStream(ctx.plan.seed).Split("verify");
  std::vector<DualSpaceRep> reps;
  std::vector<double> delta_e, delta_p;
  nlohmann::json entries = nlohmann::json::array();
  for (std::size_t k = 0; k < out.sample_indices.size(); ++k) {
    const std::size_t idx = out.sample_indices[k];
    WatermarkedSample s = WatermarkSample(ctx.test[idx], idx, *ctx.vocab, model,
                                          ctx.plan, root.Split(k));
    delta_e.push_back(s.delta_e);
    delta_p.push_back(s.delta_p);
    entries.push_back(s.ManifestEntry());
    reps.push_back(std::move(s.watermarked));
  }
  out.manifest = {{"format", "dssmooth-manifest"},
                  {"version", 1},
                  {"plan", ctx.plan.ToJson()},
                  {"entries", std::move(entries)}};
  out.wr = WatermarkRobustness(model, reps, ctx.plan.target_label,
                               ctx.smoothing);
  const NoiseSpec noise = ctx.smoothing.Normalized().noise;
  const double r_e = *std::max_element(delta_e.begin(), delta_e.end());
  const double r_p = *std::max_element(delta_p.begin(), delta_p.end());
  out.verdict = CertifiedDecision(out.wr.value, ctx.threshold.value, r_e, r_p,
                                  noise);
  AttachCalibration(out.verdict, ctx.threshold, ctx.verify);
  int certified = 0;
  for (std::size_t k = 0; k < reps.size(); ++k) {
    const Verdict v = CertifiedDecision(out.wr.per_class[k],
                                        ctx.threshold.value, delta_e[k],
                                        delta_p[k], noise);
    certified += v.certified();
  }
  out.per_sample_certified =
      static_cast<double>(certified) / static_cast<double>(reps.size());
  return out;
}

}  // namespace dssmooth
