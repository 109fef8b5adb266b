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

#include <algorithm>
#include <cmath>

#include "dssmooth/errors.h"

namespace dssmooth {

SmoothingConfig SmoothingConfig::Normalized() const {
  SmoothingConfig c = *this;
  if (c.mode == SmoothingMode::kGaussianOnly) c.noise.lambda = 1;
  return c;
}

void SmoothingConfig::Validate() const {
  if (samples < 1) throw ParameterError("smoothing needs M >= 1");
  if (!(noise.sigma >= 0.0) || !std::isfinite(noise.sigma)) {
    throw ParameterError("sigma must be finite and >= 0");
  }
  if (noise.lambda < 1) throw ParameterError("lambda must be >= 1");
}

std::string ModeName(SmoothingMode mode) {
  return mode == SmoothingMode::kDual ? "dual" : "gaussian_only";
}

SmoothingMode ModeFromName(const std::string& name) {
  if (name == "dual") return SmoothingMode::kDual;
  if (name == "gaussian_only") return SmoothingMode::kGaussianOnly;
  throw ParameterError("unknown smoothing mode '" + name + "'");
}

nlohmann::json SmoothingConfig::ToJson() const {
  return {{"sigma", noise.sigma},
          {"lambda", noise.lambda},
          {"samples", samples},
          {"seed", seed},
          {"mode", ModeName(mode)}};
}

SmoothingConfig SmoothingConfig::FromJson(const nlohmann::json& j) {
  SmoothingConfig c;
  c.noise.sigma = j.value("sigma", c.noise.sigma);
  c.noise.lambda = j.value("lambda", c.noise.lambda);
  c.samples = j.value("samples", c.samples);
  c.seed = j.value("seed", c.seed);
  c.mode = ModeFromName(j.value("mode", std::string("dual")));
  c = c.Normalized();
  c.Validate();
  return c;
}

PredictionDistribution EstimatePd(const Classifier& model,
                                  const DualSpaceRep& rep,
                                  const SmoothingConfig& cfg,
                                  const RandomStream& stream) {
  const SmoothingConfig c = cfg.Normalized();
  c.Validate();
  rep.Validate();
  const int k = model.num_classes();
  std::vector<double> votes(k, 0.0);
  std::vector<double> scores(k);
  const bool noiseless = c.noise.sigma == 0.0 && c.noise.lambda == 1;
  const DenseMatrix clean = noiseless ? Compose(rep) : DenseMatrix();
  const Mask clean_mask = noiseless ? ComposedMask(rep) : Mask();
  for (int i = 0; i < c.samples; ++i) {
    if (noiseless) {
      model.Scores(clean, clean_mask, scores);
    } else {
      const DualSpaceRep noisy =
          PerturbRep(rep, c.noise, stream.Split(static_cast<std::uint64_t>(i)));
      model.Scores(Compose(noisy), ComposedMask(noisy), scores);
    }
    const std::vector<int> top = ArgMaxSet(scores);
    const double share = 1.0 / static_cast<double>(top.size());
    for (int t : top) votes[t] += share;
  }
  PredictionDistribution pd;
  pd.samples = c.samples;
  pd.stream_path = stream.PathString();
  pd.probs.resize(k);
  for (int y = 0; y < k; ++y) pd.probs[y] = votes[y] / c.samples;
  return pd;
}

PredictionDistribution EstimatePd(const Classifier& model,
                                  const DualSpaceRep& rep,
                                  const SmoothingConfig& cfg) {
  return EstimatePd(model, rep, cfg, RandomStream(cfg.seed));
}

SmoothedPrediction SmoothedPredict(const Classifier& model,
                                   const DualSpaceRep& rep,
                                   const SmoothingConfig& cfg) {
  SmoothedPrediction out;
  out.pd = EstimatePd(model, rep, cfg);
  out.label = ArgMax(out.pd.probs) + 1;
  return out;
}

CertifiedRadii ComputeCertifiedRadii(double p_a, double p_b,
                                     const NoiseSpec& noise,
                                     std::size_t samples) {
  if (!std::isfinite(p_a) || !std::isfinite(p_b)) {
    throw DomainError("certified radii need finite probabilities");
  }
  if (p_a < p_b) {
    throw OrderingError("p_A=" + std::to_string(p_a) + " < p_B=" +
                        std::to_string(p_b));
  }
  CertifiedRadii r{0.0, 0.0, p_a, p_b};
  if (p_a == p_b) return r;
  r.r_p = noise.lambda * (p_a - p_b);
  if (noise.sigma > 0.0) {
    r.r_e = GaussianRsRadius(p_a, p_b, noise.sigma, samples);
  }
  return r;
}

double GaussianRsRadius(double p_a, double p_b, double sigma,
                        std::size_t samples) {
  if (p_a < p_b) {
    throw OrderingError("p_A=" + std::to_string(p_a) + " < p_B=" +
                        std::to_string(p_b));
  }
  if (p_a == p_b) return 0.0;
  if (samples > 0) {
    p_a = ClampProbability(p_a, samples);
    p_b = ClampProbability(p_b, samples);
  }
  return sigma / 2.0 * (StdNormalInvCdf(p_a) - StdNormalInvCdf(p_b));
}

CertifiedRadii RadiiFromPd(const PredictionDistribution& pd,
                           const NoiseSpec& noise) {
  if (pd.probs.size() < 2) throw InputError("distribution needs >= 2 classes");
  std::vector<double> sorted = pd.probs;
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  return ComputeCertifiedRadii(sorted[0], sorted[1], noise,
                               static_cast<std::size_t>(pd.samples));
}

namespace {

void CheckPerClass(const Classifier& model, std::size_t reps) {
  if (static_cast<int>(reps) != model.num_classes()) {
    throw InputError("expected one sample per class (" +
                     std::to_string(model.num_classes()) + "), got " +
                     std::to_string(reps));
  }
}

}  // namespace

WrResult WatermarkRobustness(const Classifier& model,
                             std::span<const DualSpaceRep> reps,
                             int target_label, const SmoothingConfig& cfg) {
  CheckPerClass(model, reps.size());
  if (target_label < 1 || target_label > model.num_classes()) {
    throw ParameterError("target label outside 1..K");
  }
  const RandomStream root = RandomStream(cfg.seed).Split("wr");
  WrResult wr;
  wr.samples = cfg.samples;
  for (std::size_t k = 0; k < reps.size(); ++k) {
    const PredictionDistribution pd =
        EstimatePd(model, reps[k], cfg, root.Split(k));
    wr.per_class.push_back(pd.probs[target_label - 1]);
  }
  const auto it = std::min_element(wr.per_class.begin(), wr.per_class.end());
  wr.value = *it;
  wr.argmin = static_cast<int>(it - wr.per_class.begin()) + 1;
  return wr;
}

PpResult PrincipalProbability(const Classifier& model,
                              std::span<const DualSpaceRep> reps,
                              const SmoothingConfig& cfg) {
  CheckPerClass(model, reps.size());
  const RandomStream root = RandomStream(cfg.seed).Split("pp");
  PpResult pp;
  pp.samples = cfg.samples;
  pp.mean.assign(model.num_classes(), 0.0);
  for (std::size_t k = 0; k < reps.size(); ++k) {
    const PredictionDistribution pd =
        EstimatePd(model, reps[k], cfg, root.Split(k));
    for (std::size_t y = 0; y < pd.probs.size(); ++y) {
      pp.mean[y] += pd.probs[y];
    }
  }
  for (double& v : pp.mean) v /= static_cast<double>(reps.size());
  pp.value = *std::max_element(pp.mean.begin(), pp.mean.end());
  return pp;
}

nlohmann::json ToJson(const WrResult& wr) {
  return {{"value", wr.value},
          {"per_class", wr.per_class},
          {"argmin", wr.argmin},
          {"samples", wr.samples}};
}

WrResult WrFromJson(const nlohmann::json& j) {
  WrResult wr;
  wr.value = j.at("value").get<double>();
  wr.per_class = j.value("per_class", std::vector<double>{});
  wr.argmin = j.value("argmin", 1);
  wr.samples = j.value("samples", 0);
  if (!(wr.value >= 0.0 && wr.value <= 1.0)) {
    throw SchemaError("WR value outside [0, 1]");
  }
  return wr;
}

nlohmann::json ToJson(const PpResult& pp) {
  return {{"value", pp.value}, {"mean", pp.mean}, {"samples", pp.samples}};
}

PpResult PpFromJson(const nlohmann::json& j) {
  PpResult pp;
  pp.value = j.at("value").get<double>();
  pp.mean = j.value("mean", std::vector<double>{});
  pp.samples = j.value("samples", 0);
  if (!(pp.value >= 0.0 && pp.value <= 1.0)) {
    throw SchemaError("PP value outside [0, 1]");
  }
  return pp;
}

}  // namespace dssmooth
