// Copyright 2026 The avtrack Authors
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

// Jensen-Shannon mutual-information estimation between two views, and the
// view-invariance objective built on it.

#ifndef AVTRACK_MI_H_
#define AVTRACK_MI_H_

#include <cstdint>
#include <string>
#include <vector>

#include "avtrack/params.h"
#include "avtrack/rng.h"
#include "avtrack/tensor.h"

namespace avtrack {

// Scores a (a, b) pair: [a; b] -> hidden -> gelu -> 1.
struct Critic {
  Linear fc1;  // 2d -> hidden
  Linear fc2;  // hidden -> 1

  int64_t width() const { return fc1.weight.dim(0) / 2; }
  // a, b: [B, d] -> [B, 1]
  Tensor operator()(const Tensor& a, const Tensor& b) const;

  static Critic create(ParamStore& store, const std::string& name, int64_t d, int64_t hidden,
                       Rng& rng, DType dtype);
  // Identically zero critic.
  static Critic zeros(ParamStore& store, const std::string& name, int64_t d, int64_t hidden,
                      DType dtype);
};

// Row-aligned pairs, each [B, d].
struct PairBatch {
  Tensor a;
  Tensor b;
};

// E_joint[-softplus(-T)] - E_marginal[softplus(T)].
Tensor jsd_mi_lower_bound(const PairBatch& joint, const PairBatch& marginal,
                          const Critic& critic);
// Same estimator on precomputed critic scores.
Tensor jsd_from_scores(const Tensor& joint_scores, const Tensor& marginal_scores);

// Uniformly random cyclic permutation of [0, n) (Sattolo), which never has
// a fixed point. Requires n >= 2.
std::vector<int64_t> derangement(int64_t n, uint64_t seed);
// rows[i] of the result is rows[perm[i]] of x; differentiable in x.
Tensor permute_rows(const Tensor& x, const std::vector<int64_t>& perm);
PairBatch shuffle_negatives(const PairBatch& pairs, uint64_t seed);

// Normalized (cx, cy, w, h) boxes, [B, 4], resampled from a [B, gh*gw, d]
// token field onto an out_h x out_w grid: [B, out_h*out_w, d].
Tensor roi_token_interp(const Tensor& search_tokens, int64_t grid_h, int64_t grid_w,
                        const Tensor& boxes, int64_t out_h, int64_t out_w);

// -jsd_mi_lower_bound of mean-pooled views with deranged negatives.
// t_z, t_zp: [B, n, d] with B >= 2.
Tensor vir_loss(const Tensor& t_z, const Tensor& t_zp, const Critic& critic, uint64_t seed);

// Number of calls into this module's estimators since process start.
uint64_t mi_invocations();

}  // namespace avtrack

#endif  // AVTRACK_MI_H_
