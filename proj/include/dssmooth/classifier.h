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

#ifndef DSSMOOTH_CLASSIFIER_H_
#define DSSMOOTH_CLASSIFIER_H_

#include <cstdint>
#include <span>
#include <vector>

#include "dssmooth/statcore.h"

namespace dssmooth {

// A base classifier over composed representations E = U * W. Implementations
// must be safe to call concurrently on a const instance.
class Classifier {
 public:
  virtual ~Classifier() = default;

  virtual int num_classes() const = 0;

  // Writes one score per class into `out` (size num_classes()). Larger is
  // more likely; only the argmax is consumed by smoothing.
  virtual void Scores(const DenseMatrix& composed,
                      std::span<const std::uint8_t> composed_mask,
                      std::span<double> out) const = 0;
};

// Index of the largest entry; ties resolve to the lowest index.
int ArgMax(std::span<const double> values);

// Indices of all entries equal to the maximum.
std::vector<int> ArgMaxSet(std::span<const double> values);

}  // namespace dssmooth

#endif  // DSSMOOTH_CLASSIFIER_H_
