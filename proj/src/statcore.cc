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

#include "dssmooth/statcore.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "dssmooth/errors.h"

namespace dssmooth {
namespace {

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

std::uint64_t HashLabel(std::string_view label) {
  // FNV-1a, then mixed.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : label) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return Mix64(h);
}

}  // namespace

std::uint64_t Mix64(std::uint64_t x) {
  x += kGolden;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols,
                         std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw ShapeError("DenseMatrix: " + std::to_string(data_.size()) +
                     " entries for shape " + std::to_string(rows_) + "x" +
                     std::to_string(cols_));
  }
  if (!AllFinite()) throw DomainError("DenseMatrix: non-finite entry");
}

DenseMatrix DenseMatrix::Identity(std::size_t n) {
  DenseMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

DenseMatrix DenseMatrix::FromRows(
    std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("FromRows: ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return DenseMatrix(r, c, std::move(data));
}

bool DenseMatrix::AllFinite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

DenseMatrix MatMul(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("MatMul: " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " times " +
                     std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  DenseMatrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out_row = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const auto b_row = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += aik * b_row[j];
    }
  }
  return out;
}

DenseMatrix Scale(const DenseMatrix& a, double c) {
  DenseMatrix out = a;
  for (double& v : out.data()) v *= c;
  return out;
}

DenseMatrix Subtract(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError("Subtract: shape mismatch");
  }
  DenseMatrix out = a;
  auto od = out.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] -= bd[i];
  return out;
}

double FrobeniusNorm(const DenseMatrix& a) {
  double s = 0.0;
  for (double v : a.data()) s += v * v;
  return std::sqrt(s);
}

double EntrywiseL1(const DenseMatrix& a) {
  double s = 0.0;
  for (double v : a.data()) s += std::fabs(v);
  return s;
}

double StdNormalCdf(double x) {
  if (!std::isfinite(x)) throw DomainError("StdNormalCdf: non-finite input");
  return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

double StdNormalInvCdf(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw DomainError("StdNormalInvCdf: p must lie in (0, 1), got " +
                      std::to_string(p));
  }
  if (p == 0.5) return 0.0;
  // Solve in the tail where the target is small to keep relative precision:
  // for p > 1/2 find x > 0 with Q(x) = 1 - p, Q the upper tail.
  const bool upper = p > 0.5;
  const double target = upper ? 1.0 - p : p;
  // Lower-tail CDF at -x equals the upper tail at x; bracket x in [0, 40].
  double lo = 0.0;
  double hi = 40.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    const double tail = 0.5 * std::erfc(mid / std::numbers::sqrt2);
    if (tail > target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  const double x = 0.5 * (lo + hi);
  return upper ? x : -x;
}

namespace {

std::vector<double> AverageRanks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double SpearmanRho(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ShapeError("SpearmanRho: length mismatch");
  if (x.size() < 2) throw DomainError("SpearmanRho: need at least 2 points");
  const std::vector<double> rx = AverageRanks(x);
  const std::vector<double> ry = AverageRanks(y);
  const double n = static_cast<double>(x.size());
  const double mean = (n + 1.0) / 2.0;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mean) * (ry[i] - mean);
    sxx += (rx[i] - mean) * (rx[i] - mean);
    syy += (ry[i] - mean) * (ry[i] - mean);
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw DomainError("SpearmanRho: constant input");
  }
  return sxy / std::sqrt(sxx * syy);
}

double ClampProbability(double p, std::size_t monte_carlo_count) {
  if (monte_carlo_count == 0) return p;
  const double eps = 1.0 / (2.0 * static_cast<double>(monte_carlo_count));
  return std::clamp(p, eps, 1.0 - eps);
}

RandomStream::RandomStream(std::uint64_t seed)
    : seed_(seed), key_(Mix64(seed)) {}

RandomStream::RandomStream(std::uint64_t seed, std::uint64_t key,
                           std::vector<std::string> path)
    : seed_(seed), key_(key), path_(std::move(path)) {}

RandomStream RandomStream::Split(std::string_view label) const {
  std::vector<std::string> path = path_;
  path.emplace_back(label);
  return RandomStream(seed_, Mix64(key_ ^ HashLabel(label)), std::move(path));
}

RandomStream RandomStream::Split(std::uint64_t index) const {
  std::vector<std::string> path = path_;
  path.push_back("#" + std::to_string(index));
  return RandomStream(seed_, Mix64(key_ ^ Mix64(index * kGolden + 1)),
                      std::move(path));
}

std::string RandomStream::PathString() const {
  std::string out = std::to_string(seed_);
  for (const auto& p : path_) out += "/" + p;
  return out;
}

std::uint64_t RandomStream::NextU64() {
  return Mix64(key_ + (counter_++) * kGolden);
}

double RandomStream::Uniform() {
  return static_cast<double>(NextU64() >> 11) * 0x1.0p-53;
}

std::uint64_t RandomStream::UniformInt(std::uint64_t n) {
  if (n == 0) throw ParameterError("UniformInt: n must be positive");
  // Rejection sampling on the top of the range to remove modulo bias.
  const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % n);
  std::uint64_t x;
  do {
    x = NextU64();
  } while (x >= limit);
  return x % n;
}

double RandomStream::Normal() {
  if (has_spare_normal_) {
    has_spare_normal_ = false;
    return spare_normal_;
  }
  double u1;
  do {
    u1 = Uniform();
  } while (u1 <= 0.0);
  const double u2 = Uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_normal_ = r * std::sin(theta);
  has_spare_normal_ = true;
  return r * std::cos(theta);
}

}  // namespace dssmooth
