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

#include "dssmooth/attacks.h"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "dssmooth/errors.h"
#include "dssmooth/parallel.h"

namespace dssmooth {
namespace {

int PredictComposed(const ClassifierModel& model, const DenseMatrix& e,
                    std::span<const std::uint8_t> mask) {
  return ArgMax(model.ForwardComposed(e, mask).probs) + 1;
}

double Sign(double v) { return v < 0.0 ? -1.0 : 1.0; }

}  // namespace

NoiseGrid WsrUnderNoise(const ClassifierModel& model,
                        std::span<const TokenSeq> triggered, int target_label,
                        std::span<const double> sigmas,
                        const RandomStream& stream) {
  if (triggered.empty()) throw InputError("WsrUnderNoise: empty test set");
  for (std::size_t i = 0; i < sigmas.size(); ++i) {
    if (!(sigmas[i] >= 0.0) || (i > 0 && !(sigmas[i] > sigmas[i - 1]))) {
      throw ParameterError("noise grid must be ascending and >= 0");
    }
  }
  NoiseGrid grid;
  grid.sigmas.assign(sigmas.begin(), sigmas.end());
  std::vector<std::vector<char>> hits(triggered.size(),
                                      std::vector<char>(sigmas.size(), 0));
  ParallelFor(triggered.size(), [&](std::size_t i) {
    const DualSpaceRep rep = Embed(triggered[i], model);
    const DenseMatrix clean = Compose(rep);
    const Mask mask = ComposedMask(rep);
    // One standard-normal draw per sample, shared across the grid.
    RandomStream draw = stream.Split(i);
    DenseMatrix z(clean.rows(), clean.cols());
    for (std::size_t r = 0; r < z.rows(); ++r) {
      if (mask[r] == 0) continue;
      for (double& v : z.row(r)) v = draw.Normal();
    }
    DenseMatrix noisy = clean;
    for (std::size_t s = 0; s < sigmas.size(); ++s) {
      for (std::size_t k = 0; k < noisy.size(); ++k) {
        noisy.data()[k] = clean.data()[k] + sigmas[s] * z.data()[k];
      }
      hits[i][s] = PredictComposed(model, noisy, mask) == target_label;
    }
  });
  for (std::size_t s = 0; s < sigmas.size(); ++s) {
    double h = 0;
    for (const auto& row : hits) h += row[s];
    grid.wsr.push_back(h / static_cast<double>(triggered.size()));
  }
  return grid;
}

Directions BuildDirections(const ClassifierModel& model, const DualSpaceRep& rep,
                           int target_label, double sigma,
                           RandomStream& stream) {
  const DenseMatrix grad = GradWrtEmbeddings(model, rep, target_label);
  Directions d{DenseMatrix(rep.n(), rep.d()), DenseMatrix(rep.n(), rep.d())};
  for (std::size_t k = 0; k < grad.size(); ++k) {
    d.d_n.data()[k] = Sign(sigma * stream.Normal());
    d.d_a.data()[k] = Sign(grad.data()[k]);
  }
  return d;
}

SubspaceScan RunSubspaceScan(const ClassifierModel& model,
                             std::span<const TokenSeq> triggered,
                             int target_label, std::span<const double> eps_n,
                             std::span<const double> eps_a,
                             const RandomStream& stream,
                             const SmoothingConfig* smoothing) {
  if (triggered.empty()) throw InputError("RunSubspaceScan: empty sample set");
  auto has_zero = [](std::span<const double> g) {
    return std::find(g.begin(), g.end(), 0.0) != g.end();
  };
  if (!has_zero(eps_n) || !has_zero(eps_a)) {
    throw ParameterError("subspace grid must contain the origin");
  }
  SubspaceScan scan;
  scan.eps_n.assign(eps_n.begin(), eps_n.end());
  scan.eps_a.assign(eps_a.begin(), eps_a.end());
  scan.directions.resize(triggered.size());
  const std::size_t cells = eps_n.size() * eps_a.size();
  std::vector<std::vector<char>> hits(triggered.size(),
                                      std::vector<char>(cells, 0));
  ParallelFor(triggered.size(), [&](std::size_t i) {
    const DualSpaceRep rep = Embed(triggered[i], model);
    RandomStream dir_stream = stream.Split(i).Split("directions");
    scan.directions[i] =
        BuildDirections(model, rep, target_label, 1.0, dir_stream);
    const Directions& d = scan.directions[i];
    const DenseMatrix clean = Compose(rep);
    for (std::size_t a = 0; a < eps_n.size(); ++a) {
      for (std::size_t b = 0; b < eps_a.size(); ++b) {
        DualSpaceRep moved = rep;
        DenseMatrix& w = moved.emb.mutable_values();
        for (std::size_t k = 0; k < w.size(); ++k) {
          w.data()[k] = clean.data()[k] + eps_n[a] * d.d_n.data()[k] +
                        eps_a[b] * d.d_a.data()[k];
        }
        int label;
        if (smoothing != nullptr) {
          SmoothingConfig c = *smoothing;
          c.seed = stream.Split(i).Split("smooth").NextU64();
          label = SmoothedPredict(model, moved, c).label;
        } else {
          label = PredictComposed(model, w, moved.mask);
        }
        hits[i][a * eps_a.size() + b] = label == target_label;
      }
    }
  });
  scan.wsr.assign(eps_n.size(), std::vector<double>(eps_a.size(), 0.0));
  for (std::size_t a = 0; a < eps_n.size(); ++a) {
    for (std::size_t b = 0; b < eps_a.size(); ++b) {
      double h = 0;
      for (const auto& row : hits) h += row[a * eps_a.size() + b];
      scan.wsr[a][b] = h / static_cast<double>(triggered.size());
    }
  }
  return scan;
}

namespace {

ResistanceRow Measure(double x, std::span<const ClassifierModel> models,
                      const VerifyContext& ctx) {
  std::vector<SuspiciousResult> results(models.size());
  ParallelFor(models.size(), [&](std::size_t i) {
    results[i] = VerifySuspicious(models[i], ctx);
  });
  ResistanceRow row;
  row.x = x;
  for (const auto& r : results) {
    row.vsr += r.verdict.decision;
    row.wca += r.verdict.certified();
    row.mean_wr += r.wr.value;
  }
  const double n = static_cast<double>(models.size());
  row.vsr /= n;
  row.wca /= n;
  row.mean_wr /= n;
  return row;
}

}  // namespace

std::vector<ResistanceRow> FinetuneResistance(
    std::span<const ClassifierModel> models, std::span<const TokenSeq> clean,
    std::span<const int> schedule, const TrainConfig& finetune,
    const VerifyContext& ctx) {
  if (models.empty()) throw InputError("FinetuneResistance: empty pool");
  std::vector<ClassifierModel> current(models.begin(), models.end());
  std::vector<ResistanceRow> rows;
  int done = 0;
  for (int target : schedule) {
    if (target < done) {
      throw ParameterError("fine-tuning schedule must be ascending");
    }
    if (target > done) {
      ParallelFor(current.size(), [&](std::size_t i) {
        TrainConfig tc = finetune;
        tc.epochs = target - done;
        tc.augment_scope = AugmentScope::kNone;
        tc.seed = RandomStream(finetune.seed).Split(i).Split(
            static_cast<std::uint64_t>(done)).NextU64();
        current[i] = FineTune(current[i], clean, tc);
      });
      done = target;
    }
    rows.push_back(Measure(target, current, ctx));
  }
  return rows;
}

std::vector<ResistanceRow> PruneResistance(
    std::span<const ClassifierModel> models, std::span<const double> rates,
    const VerifyContext& ctx) {
  if (models.empty()) throw InputError("PruneResistance: empty pool");
  std::vector<ResistanceRow> rows;
  for (double rate : rates) {
    std::vector<ClassifierModel> pruned;
    for (const auto& m : models) pruned.push_back(Prune(m, rate));
    rows.push_back(Measure(rate, pruned, ctx));
  }
  return rows;
}

void WriteNoiseGridCsv(const std::string& path, const NoiseGrid& grid) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path);
  f.precision(17);
  f << "sigma,metric,value\n";
  for (std::size_t i = 0; i < grid.sigmas.size(); ++i) {
    f << grid.sigmas[i] << ",wsr," << grid.wsr[i] << "\n";
  }
}

void WriteSubspaceCsv(const std::string& path, const SubspaceScan& scan) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path);
  f.precision(17);
  f << "eps_n,eps_a,metric,value\n";
  for (std::size_t a = 0; a < scan.eps_n.size(); ++a) {
    for (std::size_t b = 0; b < scan.eps_a.size(); ++b) {
      f << scan.eps_n[a] << "," << scan.eps_a[b] << ",wsr," << scan.wsr[a][b]
        << "\n";
    }
  }
}

void WriteResistanceCsv(const std::string& path, const std::string& x_name,
                        std::span<const ResistanceRow> rows) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path);
  f.precision(17);
  f << x_name << ",metric,value\n";
  for (const auto& r : rows) {
    f << r.x << ",vsr," << r.vsr << "\n";
    f << r.x << ",wca," << r.wca << "\n";
    f << r.x << ",mean_wr," << r.mean_wr << "\n";
  }
}

}  // namespace dssmooth
