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

// Single-stream ViT backbone with per-block activation modules.
//
// Template and search images are patch-embedded into one token sequence of
// K = P_z + P_x tokens. Blocks [0, n_f) always run; every later block has an
// activation module (AM) that reads the first embedding coordinate of all K
// tokens, maps it to a probability p, and runs the block iff p > beta.

#ifndef AVTRACK_BACKBONE_H_
#define AVTRACK_BACKBONE_H_

#include <cstdint>
#include <string>
#include <vector>

#include "avtrack/params.h"
#include "avtrack/rng.h"
#include "avtrack/tensor.h"

namespace avtrack {

struct BackboneConfig {
  int64_t N = 8;
  int64_t n_f = 2;
  int64_t d = 64;
  int64_t heads = 2;
  double mlp_ratio = 4.0;
  int64_t P = 8;
  int64_t H_z = 32, W_z = 32;
  int64_t H_x = 64, W_x = 64;
  double beta = 0.6;
  double zeta = 0.4;

  int64_t P_z() const { return (H_z / P) * (W_z / P); }
  int64_t P_x() const { return (H_x / P) * (W_x / P); }
  int64_t K() const { return P_z() + P_x(); }
  int64_t mlp_hidden() const { return static_cast<int64_t>(mlp_ratio * static_cast<double>(d)); }
  int64_t adaptive_blocks() const { return N - n_f; }
  // Search-region feature map side in tokens.
  int64_t search_grid_h() const { return H_x / P; }
  int64_t search_grid_w() const { return W_x / P; }

  // Throws Error naming the first violated invariant.
  void validate() const;

  static BackboneConfig desk();
  static BackboneConfig paper();
};

// Half-open token index interval.
struct TokenRange {
  int64_t begin = 0;
  int64_t end = 0;
  int64_t size() const { return end - begin; }
};

struct TokenState {
  Tensor tokens;  // [B, K, d]
  TokenRange template_range;
  TokenRange search_range;

  int64_t batch() const { return tokens.dim(0); }
  Tensor template_tokens() const;  // [B, P_z, d]
  Tensor search_tokens() const;    // [B, P_x, d]
};

struct BlockParams {
  LayerNormParams norm1;
  Linear qkv;   // d -> 3d
  Linear proj;  // d -> d
  LayerNormParams norm2;
  Linear fc1;  // d -> hidden
  Linear fc2;  // hidden -> d
};

struct AMParams {
  Linear affine;  // K -> 1
};

struct BackboneParams {
  Tensor patch_weight;  // [d, 3, P, P]
  Tensor patch_bias;    // [d]
  Tensor pos_z;         // [P_z, d]
  Tensor pos_x;         // [P_x, d]
  std::vector<BlockParams> blocks;  // N
  std::vector<AMParams> ams;        // N - n_f, ams[j] gates blocks[n_f + j]
  LayerNormParams final_norm;
};

// Registers every backbone parameter in `store` under `prefix`. AM weights
// and biases start at zero, so p = 0.5 everywhere at initialization.
BackboneParams init_backbone(const BackboneConfig& cfg, ParamStore& store,
                             const std::string& prefix, Rng& rng, DType dtype);

enum class Mode { kTrain, kInfer };

// Externally imposed gate decisions. Probabilities are still computed and
// recorded; only the run/skip decision is replaced.
struct GateOverride {
  enum class Kind { kNone, kAllOn, kAllOff, kMask };
  Kind kind = Kind::kNone;
  std::vector<bool> mask;  // per adaptive block, used by kMask

  static GateOverride none() { return {}; }
  static GateOverride all_on() { return {Kind::kAllOn, {}}; }
  static GateOverride all_off() { return {Kind::kAllOff, {}}; }
  static GateOverride from_mask(std::vector<bool> m) { return {Kind::kMask, std::move(m)}; }
  static GateOverride parse(const std::string& name);  // none | all-on | all-off
};

// One adaptive block's entry in the trace.
struct GateRecord {
  Tensor prob;              // [B, 1], differentiable in train mode
  std::vector<bool> active;  // per sample
};

struct ActivationTrace {
  std::vector<GateRecord> blocks;  // N - n_f entries

  size_t size() const { return blocks.size(); }
  int64_t batch() const;
  double prob(size_t block, int64_t sample = 0) const;
  bool gate(size_t block, int64_t sample = 0) const;
  std::vector<double> probs(int64_t sample = 0) const;
  std::vector<bool> gates(int64_t sample = 0) const;
  int64_t active_count(int64_t sample = 0) const;
};

TokenState patch_embed(const Tensor& Z, const Tensor& X, const BackboneParams& params,
                       const BackboneConfig& cfg);

// Returns p with shape [B, 1].
Tensor am_probability(const TokenState& state, const AMParams& am);

// Plain pre-norm transformer block. `branch_scale` ([B, 1, 1]) multiplies
// both residual branches when defined.
Tensor block_forward(const Tensor& x, const BlockParams& block, int64_t heads,
                     const Tensor& branch_scale = Tensor());

struct GatedBlockResult {
  TokenState state;
  Tensor prob;  // [B, 1]
  std::vector<bool> active;
};

// `forced`, when non-empty, replaces the per-sample p > beta decision.
GatedBlockResult gated_block_forward(const TokenState& state, const BlockParams& block,
                                     const AMParams& am, int64_t heads, double beta, Mode mode,
                                     const std::vector<bool>& forced = {});

struct BackboneOutput {
  TokenState state;  // after the final layer norm
  ActivationTrace trace;
};

BackboneOutput backbone_forward(const Tensor& Z, const Tensor& X, const BackboneParams& params,
                                const BackboneConfig& cfg, Mode mode,
                                const GateOverride& gates = GateOverride::none());

// Per-sample |mean_j p_j - zeta|, averaged over the batch.
Tensor sparsity_loss(const ActivationTrace& trace, double zeta);
// Same loss over explicit probability tensors ([B, 1] each).
Tensor sparsity_loss(const std::vector<Tensor>& probs, double zeta);

}  // namespace avtrack

#endif  // AVTRACK_BACKBONE_H_
