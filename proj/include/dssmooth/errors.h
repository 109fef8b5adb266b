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

#ifndef DSSMOOTH_ERRORS_H_
#define DSSMOOTH_ERRORS_H_

#include <stdexcept>
#include <string>

namespace dssmooth {

// Root of every error raised by the library. `kind()` is a stable
// machine-readable tag used by the CLI's error records.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const { return kind_; }

 private:
  std::string kind_;
};

#define DSSMOOTH_DEFINE_ERROR(Name, tag)                             \
  class Name : public Error {                                        \
   public:                                                           \
    explicit Name(const std::string& what) : Error(tag, what) {}     \
  }

DSSMOOTH_DEFINE_ERROR(DomainError, "domain");
DSSMOOTH_DEFINE_ERROR(ShapeError, "shape");
DSSMOOTH_DEFINE_ERROR(ParameterError, "parameter");
DSSMOOTH_DEFINE_ERROR(IndexError, "index");
DSSMOOTH_DEFINE_ERROR(TrainingError, "training");
DSSMOOTH_DEFINE_ERROR(DegenerateError, "degenerate");
DSSMOOTH_DEFINE_ERROR(BudgetError, "watermark_budget");
DSSMOOTH_DEFINE_ERROR(OrderingError, "ordering");
DSSMOOTH_DEFINE_ERROR(InputError, "input");
DSSMOOTH_DEFINE_ERROR(CalibrationError, "calibration_too_small");
DSSMOOTH_DEFINE_ERROR(ParseError, "parse");
DSSMOOTH_DEFINE_ERROR(SchemaError, "schema");
DSSMOOTH_DEFINE_ERROR(IoError, "io");

#undef DSSMOOTH_DEFINE_ERROR

}  // namespace dssmooth

#endif  // DSSMOOTH_ERRORS_H_
