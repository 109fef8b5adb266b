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

// Ownership verification: a conformal threshold over benign-model principal
// probabilities, the plain ownership decision, and the two certified
// conditions that make the decision robust to bounded watermark
// perturbations.

#ifndef DSSMOOTH_VERIFY_H_
#define DSSMOOTH_VERIFY_H_

#include <span>
#include <string>
#include <vector>

#include "dssmooth/certify.h"
#include "dssmooth/text_model.h"
#include "dssmooth/watermark.h"
#include "json.hpp"

namespace dssmooth {

struct VerifyConfig {
  double alpha0 = 0.05;  // significance level
  double kappa = 0.05;   // share of the largest calibration values dropped

  void Validate() const;
  nlohmann::json ToJson() const;
  static VerifyConfig FromJson(const nlohmann::json& j);
};

struct CalibrationSet {
  std::vector<double> values;  // one PP per benign model
  std::vector<std::string> model_ids;

  nlohmann::json ToJson() const;
  static CalibrationSet FromJson(const nlohmann::json& j);
};

struct Threshold {
  double value = 0.0;
  int m = 0;      // floor(kappa * J) values discarded
  int index = 0;  // 1-based order statistic
  int count = 0;  // J
};

// Sorts ascending, drops m = floor(kappa J) largest values and returns the
// j-th smallest with j = J - m - floor(alpha0 (J - m + 1)). Throws
// CalibrationError when j < 1.
Threshold CalibrationThreshold(const CalibrationSet& cal,
                               const VerifyConfig& cfg);

// WR > threshold, strictly.
bool DecideOwnership(double wr, double threshold);

struct Verdict {
  double wr = 0.0;
  double threshold = 0.0;
  bool decision = false;
  bool certified_embedding = false;
  bool certified_permutation = false;
  double r_e = 0.0;
  double r_p = 0.0;
  double offset_embedding = 0.0;    // StdNormalCdf(r_e / sigma)
  double offset_permutation = 0.0;  // r_p / (2 lambda)
  double sigma = 0.0;
  int lambda = 1;
  // Calibration echo.
  double alpha0 = 0.0;
  double kappa = 0.0;
  int m = 0;
  int index = 0;
  int calibration_size = 0;

  bool certified() const { return certified_embedding && certified_permutation; }
  nlohmann::json ToJson() const;
  static Verdict FromJson(const nlohmann::json& j);
  friend bool operator==(const Verdict&, const Verdict&) = default;
};

// Evaluates WR > Phi(r_e/sigma) + threshold and WR > r_p/(2 lambda) +
// threshold independently. r_e, r_p are the watermark's own maximum
// perturbation sizes. Throws DomainError when sigma = 0 and r_e > 0.
Verdict CertifiedDecision(double wr, double threshold, double r_e, double r_p,
                          const NoiseSpec& noise);
// Copies the threshold and config into the verdict's echo fields.
void AttachCalibration(Verdict& v, const Threshold& thr,
                       const VerifyConfig& cfg);

// Fraction of `wrs` with DecideOwnership true. Throws InputError on empty.
double FalsePositiveRate(std::span<const double> wrs, double threshold);

// Everything needed to verify one suspicious model.
struct VerifyContext {
  std::span<const TokenSeq> test;  // clean test samples
  const Vocab* vocab = nullptr;
  WatermarkPlan plan;
  SmoothingConfig smoothing;
  VerifyConfig verify;
  Threshold threshold;
};

// Lowest-index test sample of each class that `model` classifies correctly;
// the first sample of the class when there is none. Throws InputError when a
// class is absent from `test`.
std::vector<std::size_t> SelectVerificationSamples(
    const ClassifierModel& model, std::span<const TokenSeq> test);

// Principal probability of a benign model on its clean verification samples.
PpResult BenignPrincipalProbability(const ClassifierModel& model,
                                    const VerifyContext& ctx);

struct SuspiciousResult {
  std::vector<std::size_t> sample_indices;
  WrResult wr;
  Verdict verdict;
  // Share of the K verification samples whose own target probability clears
  // both certified conditions with their own delta_e, delta_p.
  double per_sample_certified = 0.0;
  nlohmann::json manifest;  // the K verification samples' watermark records
};

// Watermarks one correctly classified test sample per class with the
// suspicious model's embedding table, estimates WR under dual smoothing and
// renders the verdict. r_e, r_p are the maxima of the K samples' deltas.
SuspiciousResult VerifySuspicious(const ClassifierModel& model,
                                  const VerifyContext& ctx);

}  // namespace dssmooth

#endif  // DSSMOOTH_VERIFY_H_
