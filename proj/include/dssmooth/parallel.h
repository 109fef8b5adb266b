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

#ifndef DSSMOOTH_PARALLEL_H_
#define DSSMOOTH_PARALLEL_H_

#include <cstddef>
#include <functional>

namespace dssmooth {

// Worker count: hardware concurrency, capped by DSSMOOTH_THREADS when set.
int WorkerCount();

// Runs body(i) for i in [0, count). Each index runs exactly once; results
// must be written to per-index slots so the outcome is independent of the
// schedule. The first exception thrown by any body is rethrown.
void ParallelFor(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace dssmooth

#endif  // DSSMOOTH_PARALLEL_H_
