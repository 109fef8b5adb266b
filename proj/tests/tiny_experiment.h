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

// A small, fast experiment shared by the attack, harness and CLI tests.

#ifndef DSSMOOTH_TESTS_TINY_EXPERIMENT_H_
#define DSSMOOTH_TESTS_TINY_EXPERIMENT_H_

#include "dssmooth/harness.h"

namespace dssmooth::testing {

inline ExperimentConfig TinyConfig() {
  ExperimentConfig c = ExperimentConfig::Desk(4);
  c.name = "tiny";
  c.corpus.train_size = 400;
  c.corpus.test_size = 160;
  c.train.epochs = 6;
  c.finetune.epochs = 1;
  c.pools = {3, 2, 2, 1};
  c.verify.kappa = 0.0;
  c.smoothing.samples = 64;
  c.noise_grid = {0.0, 1.0, 3.0};
  c.subspace_grid = {-0.2, 0.0, 0.2};
  c.finetune_schedule = {0, 1};
  c.prune_rates = {0.0, 0.5, 1.0};
  c.scan = {20, 4, 16};
  return c;
}

struct TinyRun {
  Experiment exp;
  Pools pools;
};

// Trained once per test binary.
inline const TinyRun& Tiny() {
  static const TinyRun* run = [] {
    auto* r = new TinyRun;
    r->exp = PrepareExperiment(TinyConfig());
    r->pools = TrainPools(r->exp);
    return r;
  }();
  return *run;
}

}  // namespace dssmooth::testing

#endif  // DSSMOOTH_TESTS_TINY_EXPERIMENT_H_
