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

#include "avtrack/mi.h"

#include <atomic>
#include <utility>

#include "avtrack/ops.h"

namespace avtrack {
namespace {

std::atomic<uint64_t> g_invocations{0};

void count() { g_invocations.fetch_add(1, std::memory_order_relaxed); }

}  // namespace

uint64_t mi_invocations() { return g_invocations.load(std::memory_order_relaxed); }

Tensor Critic::operator()(const Tensor& a, const Tensor& b) const {
  count();
  if (a.rank() != 2 || a.shape() != b.shape() || a.dim(1) != width()) {
    throw ShapeError("critic: expected two [B, " + std::to_string(width()) + "] inputs, got " +
                     shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  return fc2(gelu(fc1(concat({a, b}, 1))));
}

Critic Critic::create(ParamStore& store, const std::string& name, int64_t d, int64_t hidden,
                      Rng& rng, DType dtype) {
  return Critic{Linear::create(store, name + ".fc1", 2 * d, hidden, rng, dtype),
                Linear::create(store, name + ".fc2", hidden, 1, rng, dtype)};
}

Critic Critic::zeros(ParamStore& store, const std::string& name, int64_t d, int64_t hidden,
                     DType dtype) {
  return Critic{Linear::zeros(store, name + ".fc1", 2 * d, hidden, dtype),
                Linear::zeros(store, name + ".fc2", hidden, 1, dtype)};
}

Tensor jsd_from_scores(const Tensor& joint_scores, const Tensor& marginal_scores) {
  count();
  if (!joint_scores.defined() || !marginal_scores.defined()) {
    throw Error("jsd_mi_lower_bound: empty batch");
  }
  return sub(neg(mean(softplus(neg(joint_scores)))), mean(softplus(marginal_scores)));
}

Tensor jsd_mi_lower_bound(const PairBatch& joint, const PairBatch& marginal,
                          const Critic& critic) {
  if (!joint.a.defined() || !marginal.a.defined() || joint.a.dim(0) == 0 ||
      marginal.a.dim(0) == 0) {
    throw Error("jsd_mi_lower_bound: empty batch");
  }
  return jsd_from_scores(critic(joint.a, joint.b), critic(marginal.a, marginal.b));
}

std::vector<int64_t> derangement(int64_t n, uint64_t seed) {
  if (n < 2) throw Error("shuffle_negatives: a batch of " + std::to_string(n) +
                         " has no derangement");
  std::vector<int64_t> perm(n);
  for (int64_t i = 0; i < n; ++i) perm[i] = i;
  Rng rng(seed);
  for (int64_t i = n - 1; i > 0; --i) {
    const int64_t j = static_cast<int64_t>(rng.below(static_cast<uint64_t>(i)));
    std::swap(perm[i], perm[j]);
  }
  return perm;
}

Tensor permute_rows(const Tensor& x, const std::vector<int64_t>& perm) {
  const int64_t n = x.dim(0);
  if (static_cast<int64_t>(perm.size()) != n) {
    throw ShapeError("permute_rows: permutation length differs from " + shape_str(x.shape()));
  }
  std::vector<double> m(n * n, 0.0);
  for (int64_t i = 0; i < n; ++i) m[i * n + perm[i]] = 1.0;
  Tensor flat = reshape(x, {n, -1});
  Shape shape = x.shape();
  return reshape(matmul(Tensor::from_vector({n, n}, m, x.dtype()), flat), shape);
}

PairBatch shuffle_negatives(const PairBatch& pairs, uint64_t seed) {
  return PairBatch{pairs.a, permute_rows(pairs.b, derangement(pairs.b.dim(0), seed))};
}

Tensor roi_token_interp(const Tensor& search_tokens, int64_t grid_h, int64_t grid_w,
                        const Tensor& boxes, int64_t out_h, int64_t out_w) {
  count();
  const int64_t B = search_tokens.dim(0);
  if (search_tokens.rank() != 3 || search_tokens.dim(1) != grid_h * grid_w) {
    throw ShapeError("roi_token_interp: tokens " + shape_str(search_tokens.shape()) +
                     " do not form a " + std::to_string(grid_h) + "x" + std::to_string(grid_w) +
                     " grid");
  }
  if (boxes.shape() != Shape{B, 4}) {
    throw ShapeError("roi_token_interp: boxes " + shape_str(boxes.shape()) + " for batch " +
                     std::to_string(B));
  }
  const int64_t d = search_tokens.dim(2);
  const std::vector<double> bv = boxes.to_vector();
  std::vector<double> grid(B * out_h * out_w * 2);
  constexpr double kTol = 1e-9;
  for (int64_t b = 0; b < B; ++b) {
    const double cx = bv[b * 4], cy = bv[b * 4 + 1], w = bv[b * 4 + 2], h = bv[b * 4 + 3];
    if (!(w > 0.0) || !(h > 0.0)) throw Error("roi_token_interp: degenerate box");
    const double x0 = cx - 0.5 * w, y0 = cy - 0.5 * h;
    if (x0 < -kTol || y0 < -kTol || x0 + w > 1.0 + kTol || y0 + h > 1.0 + kTol) {
      throw Error("roi_token_interp: box outside the unit square");
    }
    for (int64_t i = 0; i < out_h; ++i) {
      for (int64_t j = 0; j < out_w; ++j) {
        double* g = &grid[((b * out_h + i) * out_w + j) * 2];
        g[0] = x0 + (static_cast<double>(j) + 0.5) / static_cast<double>(out_w) * w;
        g[1] = y0 + (static_cast<double>(i) + 0.5) / static_cast<double>(out_h) * h;
      }
    }
  }
  Tensor field = reshape(search_tokens, {B, grid_h, grid_w, d});
  Tensor g = Tensor::from_vector({B, out_h, out_w, 2}, grid, search_tokens.dtype());
  return reshape(bilinear_resample(field, g), {B, out_h * out_w, d});
}

Tensor vir_loss(const Tensor& t_z, const Tensor& t_zp, const Critic& critic, uint64_t seed) {
  if (t_z.rank() != 3 || t_z.dim(0) != t_zp.dim(0) || t_z.dim(2) != t_zp.dim(2)) {
    throw ShapeError("vir_loss: views " + shape_str(t_z.shape()) + " and " +
                     shape_str(t_zp.shape()) + " are incompatible");
  }
  PairBatch joint{mean(t_z, 1), mean(t_zp, 1)};
  return neg(jsd_mi_lower_bound(joint, shuffle_negatives(joint, seed), critic));
}

}  // namespace avtrack
