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

// Embedding/permutation representation of a fixed-length token sequence.
//
// A sequence of n tokens is held as a permutation U (n x n, one 1 per row and
// column), an embedding matrix W (n x d, row j = embedding of source token j)
// and a padding mask over source positions. The model input is E = U * W:
// output row i is source row U.mapping()[i]. Masks travel with their tokens,
// so the mask seen at output row i is mask[mapping[i]].
//
// Two noise transformations act on the pair:
//  - permutation noise: positions are cut into consecutive groups of size
//    lambda anchored at 0 (the last group may be short) and each group is
//    reordered by an independent uniform permutation;
//  - embedding noise: i.i.d. N(0, sigma^2) added to every entry.
// Both leave padding tokens untouched.

#ifndef DSSMOOTH_DUAL_SPACE_H_
#define DSSMOOTH_DUAL_SPACE_H_

#include <cstdint>
#include <span>
#include <vector>

#include "dssmooth/statcore.h"

namespace dssmooth {

using Mask = std::vector<std::uint8_t>;

class PermutationMatrix {
 public:
  PermutationMatrix() = default;
  // mapping[i] = j moves the token at source position j to output position i.
  // Throws ParameterError unless `mapping` is a bijection on {0..n-1}.
  explicit PermutationMatrix(std::vector<int> mapping);

  static PermutationMatrix Identity(int n);

  int n() const { return static_cast<int>(mapping_.size()); }
  const std::vector<int>& mapping() const { return mapping_; }
  int operator[](int i) const { return mapping_[i]; }

  bool IsIdentity() const;
  PermutationMatrix Inverse() const;
  // (this o other): row i of the result picks source other[this[i]], i.e.
  // the 0/1 matrix product this * other.
  PermutationMatrix Then(const PermutationMatrix& other) const;
  // Explicit 0/1 matrix.
  DenseMatrix ToDense() const;

  friend bool operator==(const PermutationMatrix&,
                         const PermutationMatrix&) = default;

 private:
  std::vector<int> mapping_;
};

class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;
  explicit EmbeddingMatrix(DenseMatrix values);

  int n() const { return static_cast<int>(values_.rows()); }
  int d() const { return static_cast<int>(values_.cols()); }
  const DenseMatrix& values() const { return values_; }
  DenseMatrix& mutable_values() { return values_; }
  std::span<const double> row(int i) const { return values_.row(i); }
  std::span<double> row(int i) { return values_.row(i); }

  friend bool operator==(const EmbeddingMatrix&,
                         const EmbeddingMatrix&) = default;

 private:
  DenseMatrix values_;
};

struct DualSpaceRep {
  PermutationMatrix perm;
  EmbeddingMatrix emb;
  Mask mask;  // indexed by source position; 0 marks padding

  int n() const { return emb.n(); }
  int d() const { return emb.d(); }
  // Throws ShapeError if perm.n, emb.n and mask length disagree.
  void Validate() const;
  int ActiveCount() const;
};

struct NoiseSpec {
  double sigma = 0.0;  // Gaussian scale in embedding space
  int lambda = 1;      // group size in permutation space
};

// E = U * W.
DenseMatrix Compose(const DualSpaceRep& rep);
// Mask aligned with the rows of Compose(rep).
Mask ComposedMask(const DualSpaceRep& rep);

// Group reordering. When `mask` (indexed by source position) is given, output
// positions holding padding tokens stay fixed and each group's non-padding
// positions are permuted uniformly among themselves. Throws ParameterError
// unless 1 <= spec.lambda <= n.
PermutationMatrix ApplyPermNoise(const PermutationMatrix& perm,
                                 const NoiseSpec& spec, RandomStream& stream,
                                 std::span<const std::uint8_t> mask = {});

// W + eps with eps ~ N(0, sigma^2 I); rows whose mask is 0 are copied as-is.
EmbeddingMatrix ApplyEmbNoise(const EmbeddingMatrix& emb,
                              const NoiseSpec& spec, RandomStream& stream,
                              std::span<const std::uint8_t> mask = {});

// Permutation noise followed by embedding noise, both restricted to
// non-padding tokens. Draws come from two child streams of `stream`.
DualSpaceRep PerturbRep(const DualSpaceRep& rep, const NoiseSpec& spec,
                        const RandomStream& stream);

// ||U_a - U_b||_1 over the implied 0/1 matrices, i.e. twice the number of
// rows whose mappings differ.
double PermDistance(const PermutationMatrix& a, const PermutationMatrix& b);
// ||W_a - W_b||_F.
double EmbDistance(const EmbeddingMatrix& a, const EmbeddingMatrix& b);

}  // namespace dssmooth

#endif  // DSSMOOTH_DUAL_SPACE_H_
