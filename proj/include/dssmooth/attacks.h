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

// Robustness probes for watermarked models: trigger success under embedding
// noise, a two-direction (noise / adversarial) subspace scan, and the
// fine-tuning and pruning attacks against ownership verification.

#ifndef DSSMOOTH_ATTACKS_H_
#define DSSMOOTH_ATTACKS_H_

#include <span>
#include <string>
#include <vector>

#include "dssmooth/certify.h"
#include "dssmooth/text_model.h"
#include "dssmooth/verify.h"

namespace dssmooth {

struct NoiseGrid {
  std::vector<double> sigmas;  // strictly ascending, >= 0
  std::vector<double> wsr;
};

// For each sigma, the fraction of `triggered` predicted as the target after
// one Gaussian draw per sample on the non-padding rows (no permutation
// noise). Sample i uses the same standard-normal draw at every sigma, scaled.
// Throws InputError on an empty set, ParameterError on a bad grid.
NoiseGrid WsrUnderNoise(const ClassifierModel& model,
                        std::span<const TokenSeq> triggered, int target_label,
                        std::span<const double> sigmas,
                        const RandomStream& stream);

struct Directions {
  DenseMatrix d_n;  // sign of a Gaussian draw
  DenseMatrix d_a;  // sign of the loss gradient at the target label
};

// Both matrices are n x d with entries in {-1, +1}; zeros map to +1. d_a
// ascends the loss at the target, pushing predictions off the watermark.
Directions BuildDirections(const ClassifierModel& model, const DualSpaceRep& rep,
                           int target_label, double sigma, RandomStream& stream);

struct SubspaceScan {
  std::vector<double> eps_n;
  std::vector<double> eps_a;
  std::vector<std::vector<double>> wsr;  // [i_n][i_a]
  std::vector<Directions> directions;    // per sample
};

// WSR over `triggered` at every E + eps_n d_N + eps_a d_A (directions built
// per sample). With `smoothing` set, predictions go through SmoothedPredict.
// Throws ParameterError unless both grids contain 0.
SubspaceScan RunSubspaceScan(const ClassifierModel& model,
                             std::span<const TokenSeq> triggered,
                             int target_label, std::span<const double> eps_n,
                             std::span<const double> eps_a,
                             const RandomStream& stream,
                             const SmoothingConfig* smoothing = nullptr);

struct ResistanceRow {
  double x = 0.0;  // epochs or pruning rate
  double vsr = 0.0;
  double wca = 0.0;
  double mean_wr = 0.0;
};

// Fine-tunes every model on `clean` and re-verifies after each cumulative
// epoch count in `schedule` (ascending; 0 = unattacked).
std::vector<ResistanceRow> FinetuneResistance(
    std::span<const ClassifierModel> models, std::span<const TokenSeq> clean,
    std::span<const int> schedule, const TrainConfig& finetune,
    const VerifyContext& ctx);

// Re-verifies every model after magnitude pruning at each rate.
std::vector<ResistanceRow> PruneResistance(
    std::span<const ClassifierModel> models, std::span<const double> rates,
    const VerifyContext& ctx);

// Long-format CSV writers for plotting.
void WriteNoiseGridCsv(const std::string& path, const NoiseGrid& grid);
void WriteSubspaceCsv(const std::string& path, const SubspaceScan& scan);
void WriteResistanceCsv(const std::string& path, const std::string& x_name,
                        std::span<const ResistanceRow> rows);

}  // namespace dssmooth

#endif  // DSSMOOTH_ATTACKS_H_
