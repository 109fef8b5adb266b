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

#include "dssmooth/dual_space.h"

#include <algorithm>
#include <numeric>
#include <string>

#include "dssmooth/errors.h"

namespace dssmooth {

PermutationMatrix::PermutationMatrix(std::vector<int> mapping)
    : mapping_(std::move(mapping)) {
  std::vector<char> seen(mapping_.size(), 0);
  for (int j : mapping_) {
    if (j < 0 || j >= n() || seen[j]) {
      throw ParameterError("PermutationMatrix: mapping is not a bijection");
    }
    seen[j] = 1;
  }
}

PermutationMatrix PermutationMatrix::Identity(int n) {
  std::vector<int> m(n);
  std::iota(m.begin(), m.end(), 0);
  return PermutationMatrix(std::move(m));
}

bool PermutationMatrix::IsIdentity() const {
  for (int i = 0; i < n(); ++i) {
    if (mapping_[i] != i) return false;
  }
  return true;
}

PermutationMatrix PermutationMatrix::Inverse() const {
  std::vector<int> inv(mapping_.size());
  for (int i = 0; i < n(); ++i) inv[mapping_[i]] = i;
  return PermutationMatrix(std::move(inv));
}

PermutationMatrix PermutationMatrix::Then(const PermutationMatrix& other) const {
  if (other.n() != n()) throw ShapeError("PermutationMatrix::Then: size");
  std::vector<int> out(mapping_.size());
  for (int i = 0; i < n(); ++i) out[i] = other.mapping_[mapping_[i]];
  return PermutationMatrix(std::move(out));
}

DenseMatrix PermutationMatrix::ToDense() const {
  DenseMatrix m(mapping_.size(), mapping_.size());
  for (int i = 0; i < n(); ++i) m(i, mapping_[i]) = 1.0;
  return m;
}

EmbeddingMatrix::EmbeddingMatrix(DenseMatrix values)
    : values_(std::move(values)) {}

void DualSpaceRep::Validate() const {
  if (perm.n() != emb.n() || static_cast<int>(mask.size()) != emb.n()) {
    throw ShapeError("DualSpaceRep: perm.n=" + std::to_string(perm.n()) +
                     " emb.n=" + std::to_string(emb.n()) +
                     " mask=" + std::to_string(mask.size()));
  }
}

int DualSpaceRep::ActiveCount() const {
  return static_cast<int>(std::count_if(mask.begin(), mask.end(),
                                        [](std::uint8_t m) { return m != 0; }));
}

DenseMatrix Compose(const DualSpaceRep& rep) {
  rep.Validate();
  DenseMatrix out(rep.n(), rep.d());
  for (int i = 0; i < rep.n(); ++i) {
    const auto src = rep.emb.row(rep.perm[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

Mask ComposedMask(const DualSpaceRep& rep) {
  rep.Validate();
  Mask out(rep.mask.size());
  for (int i = 0; i < rep.n(); ++i) out[i] = rep.mask[rep.perm[i]];
  return out;
}

PermutationMatrix ApplyPermNoise(const PermutationMatrix& perm,
                                 const NoiseSpec& spec, RandomStream& stream,
                                 std::span<const std::uint8_t> mask) {
  const int n = perm.n();
  if (spec.lambda < 1 || spec.lambda > std::max(n, 1)) {
    throw ParameterError("ApplyPermNoise: lambda=" +
                         std::to_string(spec.lambda) + " outside [1, " +
                         std::to_string(n) + "]");
  }
  if (!mask.empty() && static_cast<int>(mask.size()) != n) {
    throw ShapeError("ApplyPermNoise: mask length");
  }
  std::vector<int> out = perm.mapping();
  if (spec.lambda == 1) return PermutationMatrix(std::move(out));

  std::vector<int> slots;
  std::vector<int> order;
  for (int start = 0; start < n; start += spec.lambda) {
    const int end = std::min(start + spec.lambda, n);
    slots.clear();
    for (int i = start; i < end; ++i) {
      if (mask.empty() || mask[perm[i]] != 0) slots.push_back(i);
    }
    order = slots;
    stream.Shuffle(std::span<int>(order));
    for (std::size_t k = 0; k < slots.size(); ++k) {
      out[slots[k]] = perm[order[k]];
    }
  }
  return PermutationMatrix(std::move(out));
}

EmbeddingMatrix ApplyEmbNoise(const EmbeddingMatrix& emb,
                              const NoiseSpec& spec, RandomStream& stream,
                              std::span<const std::uint8_t> mask) {
  if (spec.sigma < 0.0) throw ParameterError("ApplyEmbNoise: sigma < 0");
  if (!mask.empty() && static_cast<int>(mask.size()) != emb.n()) {
    throw ShapeError("ApplyEmbNoise: mask length");
  }
  EmbeddingMatrix out = emb;
  if (spec.sigma == 0.0) return out;
  for (int i = 0; i < emb.n(); ++i) {
    if (!mask.empty() && mask[i] == 0) continue;
    for (double& v : out.row(i)) v += spec.sigma * stream.Normal();
  }
  return out;
}

DualSpaceRep PerturbRep(const DualSpaceRep& rep, const NoiseSpec& spec,
                        const RandomStream& stream) {
  rep.Validate();
  RandomStream perm_stream = stream.Split("perm");
  RandomStream emb_stream = stream.Split("emb");
  DualSpaceRep out;
  out.perm = ApplyPermNoise(rep.perm, spec, perm_stream, rep.mask);
  out.emb = ApplyEmbNoise(rep.emb, spec, emb_stream, rep.mask);
  out.mask = rep.mask;
  return out;
}

double PermDistance(const PermutationMatrix& a, const PermutationMatrix& b) {
  if (a.n() != b.n()) throw ShapeError("PermDistance: length mismatch");
  int differing = 0;
  for (int i = 0; i < a.n(); ++i) differing += a[i] != b[i];
  return 2.0 * differing;
}

double EmbDistance(const EmbeddingMatrix& a, const EmbeddingMatrix& b) {
  if (a.n() != b.n() || a.d() != b.d()) {
    throw ShapeError("EmbDistance: shape mismatch");
  }
  return FrobeniusNorm(Subtract(a.values(), b.values()));
}

}  // namespace dssmooth
