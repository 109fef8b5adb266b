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

// Randomized smoothing over the dual space: Monte Carlo prediction
// distributions under permutation + Gaussian noise, the smoothed classifier,
// certified radii, watermark robustness (WR) and principal probability (PP).

#ifndef DSSMOOTH_CERTIFY_H_
#define DSSMOOTH_CERTIFY_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dssmooth/classifier.h"
#include "dssmooth/dual_space.h"
#include "dssmooth/statcore.h"
#include "json.hpp"

namespace dssmooth {

enum class SmoothingMode { kDual, kGaussianOnly };

struct SmoothingConfig {
  NoiseSpec noise;
  int samples = 1024;  // M
  std::uint64_t seed = 0;
  SmoothingMode mode = SmoothingMode::kDual;

  // Copy with the mode rule applied: gaussian_only forces lambda = 1.
  SmoothingConfig Normalized() const;
  // Throws ParameterError on M < 1, sigma < 0 or lambda < 1.
  void Validate() const;

  nlohmann::json ToJson() const;
  static SmoothingConfig FromJson(const nlohmann::json& j);
};

std::string ModeName(SmoothingMode mode);
SmoothingMode ModeFromName(const std::string& name);

struct PredictionDistribution {
  std::vector<double> probs;  // per class, index 0 = class 1
  int samples = 0;
  std::string stream_path;
};

// Frequencies of the base classifier's argmax over M noisy copies of `rep`.
// Sample i draws from stream.Split(i), so the result does not depend on the
// evaluation order. A draw whose top score is tied splits its vote evenly
// among the tied classes.
PredictionDistribution EstimatePd(const Classifier& model,
                                  const DualSpaceRep& rep,
                                  const SmoothingConfig& cfg,
                                  const RandomStream& stream);
// Same, with the stream rooted at cfg.seed.
PredictionDistribution EstimatePd(const Classifier& model,
                                  const DualSpaceRep& rep,
                                  const SmoothingConfig& cfg);

struct SmoothedPrediction {
  int label = 1;  // 1-based; ties go to the lowest class
  PredictionDistribution pd;
};

SmoothedPrediction SmoothedPredict(const Classifier& model,
                                   const DualSpaceRep& rep,
                                   const SmoothingConfig& cfg);

struct CertifiedRadii {
  double r_e = 0.0;
  double r_p = 0.0;
  double p_a = 0.0;
  double p_b = 0.0;
};

// r_e = sigma/2 * (InvCdf(p_a) - InvCdf(p_b)) and r_p = lambda * (p_a - p_b).
// With samples > 0 the probabilities are clamped to [1/(2M), 1 - 1/(2M)]
// before the quantiles. Both radii are 0 when p_a == p_b. Throws
// OrderingError when p_a < p_b.
CertifiedRadii ComputeCertifiedRadii(double p_a, double p_b,
                                     const NoiseSpec& noise,
                                     std::size_t samples = 0);

// Gaussian-only certified radius; the same formula as r_e above.
double GaussianRsRadius(double p_a, double p_b, double sigma,
                        std::size_t samples = 0);

// Radii from the top two entries of a prediction distribution.
CertifiedRadii RadiiFromPd(const PredictionDistribution& pd,
                           const NoiseSpec& noise);

struct WrResult {
  double value = 0.0;
  std::vector<double> per_class;  // P[target] for the sample of class k
  int argmin = 1;                 // 1-based class attaining the minimum
  int samples = 0;
};

// min over classes k of P[smoothed model maps watermarked sample k to
// target]. reps[k - 1] is the watermarked sample of class k. Throws
// InputError unless there is exactly one rep per class.
WrResult WatermarkRobustness(const Classifier& model,
                             std::span<const DualSpaceRep> reps,
                             int target_label, const SmoothingConfig& cfg);

struct PpResult {
  double value = 0.0;
  std::vector<double> mean;  // class-averaged distribution
  int samples = 0;
};

// Max entry of the mean prediction distribution over one clean sample per
// class. Throws InputError unless there is exactly one rep per class.
PpResult PrincipalProbability(const Classifier& model,
                              std::span<const DualSpaceRep> reps,
                              const SmoothingConfig& cfg);

nlohmann::json ToJson(const WrResult& wr);
WrResult WrFromJson(const nlohmann::json& j);
nlohmann::json ToJson(const PpResult& pp);
PpResult PpFromJson(const nlohmann::json& j);

}  // namespace dssmooth

#endif  // DSSMOOTH_CERTIFY_H_
