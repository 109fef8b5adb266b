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

// Numerical substrate: dense row-major matrices, a splittable counter-based
// random stream, and the standard normal CDF / quantile.

#ifndef DSSMOOTH_STATCORE_H_
#define DSSMOOTH_STATCORE_H_

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dssmooth {

class DenseMatrix {
 public:
  DenseMatrix() = default;
  // Zero-filled rows x cols matrix.
  DenseMatrix(std::size_t rows, std::size_t cols);
  // Throws ShapeError if data.size() != rows * cols, DomainError if any entry
  // is not finite.
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static DenseMatrix Identity(std::size_t n);
  static DenseMatrix FromRows(
      std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) {
    return data_[r * cols_ + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }

  std::span<double> row(std::size_t r) {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  const std::vector<double>& values() const { return data_; }

  bool AllFinite() const;

  friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Exact matrix product. Throws ShapeError when a.cols() != b.rows().
DenseMatrix MatMul(const DenseMatrix& a, const DenseMatrix& b);

DenseMatrix Scale(const DenseMatrix& a, double c);
// a - b; throws ShapeError on mismatch.
DenseMatrix Subtract(const DenseMatrix& a, const DenseMatrix& b);

double FrobeniusNorm(const DenseMatrix& a);
double EntrywiseL1(const DenseMatrix& a);

// Standard normal CDF. Absolute error is bounded by that of std::erfc
// (a few ulp), well under 1e-12. Throws DomainError on non-finite input.
double StdNormalCdf(double x);

// Standard normal quantile by bracketed bisection on StdNormalCdf.
// Requires 0 < p < 1; otherwise throws DomainError.
double StdNormalInvCdf(double p);

// Clamps an estimated probability into [1/(2M), 1 - 1/(2M)].
double ClampProbability(double p, std::size_t monte_carlo_count);

// Spearman rank correlation with average ranks for ties. Throws ShapeError on
// length mismatch and DomainError when either input is constant or shorter
// than 2.
double SpearmanRho(std::span<const double> x, std::span<const double> y);

// Deterministic, splittable random stream. Draws are a pure function of
// (seed, path, draw index): two streams with the same seed and split path
// produce bit-identical sequences on every platform. Child streams are
// derived by hashing a label into the key; they do not share state with the
// parent.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed);

  RandomStream Split(std::string_view label) const;
  RandomStream Split(std::uint64_t index) const;

  std::uint64_t seed() const { return seed_; }
  const std::vector<std::string>& path() const { return path_; }
  // "seed/label/label..." for audit records.
  std::string PathString() const;

  std::uint64_t NextU64();
  // Uniform in [0, 1).
  double Uniform();
  // Uniform integer in [0, n). Requires n > 0.
  std::uint64_t UniformInt(std::uint64_t n);
  // Standard normal via Box-Muller.
  double Normal();
  // Uniform random permutation of `values` (Fisher-Yates).
  template <typename T>
  void Shuffle(std::span<T> values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(UniformInt(i));
      std::swap(values[i - 1], values[j]);
    }
  }

 private:
  RandomStream(std::uint64_t seed, std::uint64_t key,
               std::vector<std::string> path);

  std::uint64_t seed_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  std::vector<std::string> path_;
  bool has_spare_normal_ = false;
  double spare_normal_ = 0.0;
};

// SplitMix64 finalizer, exposed for hashing in tests and audit ids.
std::uint64_t Mix64(std::uint64_t x);

}  // namespace dssmooth

#endif  // DSSMOOTH_STATCORE_H_
