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

#include "avtrack/backbone.h"

#include <cmath>

#include "avtrack/ops.h"

namespace avtrack {

void BackboneConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error("invalid backbone config: " + msg); };
  if (N < 2) fail("N must be at least 2");
  if (n_f < 1 || n_f >= N) fail("n_f must satisfy 1 <= n_f < N");
  if (d < 1 || heads < 1 || d % heads != 0) fail("d must be a positive multiple of heads");
  if (!(mlp_ratio > 0.0) || mlp_hidden() < 1) fail("mlp_ratio must be positive");
  if (P < 1) fail("P must be positive");
  for (int64_t side : {H_z, W_z, H_x, W_x}) {
    if (side < P || side % P != 0) fail("image sides must be positive multiples of P");
  }
  if (!(beta > 0.5 && beta < 1.0)) fail("beta must lie in (0.5, 1)");
  if (!(zeta >= 0.0 && zeta <= 1.0)) fail("zeta must lie in [0, 1]");
}

BackboneConfig BackboneConfig::desk() { return BackboneConfig{}; }

BackboneConfig BackboneConfig::paper() {
  BackboneConfig c;
  c.N = 12;
  c.n_f = 4;
  c.d = 192;
  c.heads = 3;
  c.P = 16;
  c.H_z = c.W_z = 128;
  c.H_x = c.W_x = 256;
  return c;
}

Tensor TokenState::template_tokens() const {
  return slice(tokens, 1, template_range.begin, template_range.end);
}

Tensor TokenState::search_tokens() const {
  return slice(tokens, 1, search_range.begin, search_range.end);
}

BackboneParams init_backbone(const BackboneConfig& cfg, ParamStore& store,
                             const std::string& prefix, Rng& rng, DType dtype) {
  cfg.validate();
  const int64_t d = cfg.d;
  BackboneParams p;
  const int64_t fan_in = 3 * cfg.P * cfg.P;
  p.patch_weight = store.add(prefix + "patch.weight",
                             reshape(xavier_uniform({d, fan_in}, fan_in, d, rng, dtype),
                                     {d, 3, cfg.P, cfg.P}));
  p.patch_bias = store.add(prefix + "patch.bias", Tensor::zeros({d}, dtype));
  p.pos_z = store.add(prefix + "pos_z", normal_tensor({cfg.P_z(), d}, 0.02, rng, dtype));
  p.pos_x = store.add(prefix + "pos_x", normal_tensor({cfg.P_x(), d}, 0.02, rng, dtype));
  for (int64_t i = 0; i < cfg.N; ++i) {
    const std::string b = prefix + "blocks." + std::to_string(i) + ".";
    BlockParams blk;
    blk.norm1 = LayerNormParams::create(store, b + "norm1", d, dtype);
    blk.qkv = Linear::create(store, b + "qkv", d, 3 * d, rng, dtype);
    blk.proj = Linear::create(store, b + "proj", d, d, rng, dtype);
    blk.norm2 = LayerNormParams::create(store, b + "norm2", d, dtype);
    blk.fc1 = Linear::create(store, b + "fc1", d, cfg.mlp_hidden(), rng, dtype);
    blk.fc2 = Linear::create(store, b + "fc2", cfg.mlp_hidden(), d, rng, dtype);
    p.blocks.push_back(blk);
  }
  for (int64_t j = 0; j < cfg.adaptive_blocks(); ++j) {
    p.ams.push_back(
        AMParams{Linear::zeros(store, prefix + "am." + std::to_string(j), cfg.K(), 1, dtype)});
  }
  p.final_norm = LayerNormParams::create(store, prefix + "norm", d, dtype);
  return p;
}

GateOverride GateOverride::parse(const std::string& name) {
  if (name == "none") return none();
  if (name == "all-on") return all_on();
  if (name == "all-off") return all_off();
  throw Error("unknown gate override '" + name + "' (expected none, all-on or all-off)");
}

int64_t ActivationTrace::batch() const { return blocks.empty() ? 0 : blocks[0].prob.dim(0); }

double ActivationTrace::prob(size_t block, int64_t sample) const {
  return blocks.at(block).prob.at(sample);
}

bool ActivationTrace::gate(size_t block, int64_t sample) const {
  return blocks.at(block).active.at(sample);
}

std::vector<double> ActivationTrace::probs(int64_t sample) const {
  std::vector<double> out;
  for (size_t j = 0; j < blocks.size(); ++j) out.push_back(prob(j, sample));
  return out;
}

std::vector<bool> ActivationTrace::gates(int64_t sample) const {
  std::vector<bool> out;
  for (size_t j = 0; j < blocks.size(); ++j) out.push_back(gate(j, sample));
  return out;
}

int64_t ActivationTrace::active_count(int64_t sample) const {
  int64_t n = 0;
  for (size_t j = 0; j < blocks.size(); ++j) n += gate(j, sample) ? 1 : 0;
  return n;
}

namespace {

// [B, 3, H, W] -> [B, (H/P)(W/P), d]
Tensor embed_image(const Tensor& img, const BackboneParams& params, int64_t P, const char* what) {
  if (img.rank() != 4 || img.dim(1) != 3) {
    throw ShapeError(std::string("patch_embed: ") + what + " must be [B, 3, H, W], got " +
                     shape_str(img.shape()));
  }
  if (img.dim(2) % P != 0 || img.dim(3) % P != 0) {
    throw ShapeError(std::string("patch_embed: ") + what + " sides " + shape_str(img.shape()) +
                     " not divisible by patch size " + std::to_string(P));
  }
  Tensor f = conv2d(img, params.patch_weight, params.patch_bias, static_cast<int>(P), 0);
  const int64_t B = f.dim(0), d = f.dim(1), n = f.dim(2) * f.dim(3);
  return transpose(reshape(f, {B, d, n}), {0, 2, 1});
}

Tensor attention(const Tensor& x, const BlockParams& blk, int64_t heads) {
  const int64_t B = x.dim(0), K = x.dim(1), d = x.dim(2), dh = d / heads;
  Tensor qkv = reshape(blk.qkv(x), {B, K, 3, heads, dh});
  qkv = transpose(qkv, {2, 0, 3, 1, 4});  // [3, B, h, K, dh]
  auto part = [&](int64_t i) { return reshape(slice(qkv, 0, i, i + 1), {B * heads, K, dh}); };
  Tensor q = part(0), k = part(1), v = part(2);
  Tensor scores = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(dh)));
  Tensor out = matmul(softmax(scores, -1), v);  // [B*h, K, dh]
  out = transpose(reshape(out, {B, heads, K, dh}), {0, 2, 1, 3});
  return blk.proj(reshape(out, {B, K, d}));
}

Tensor mlp(const Tensor& x, const BlockParams& blk) { return blk.fc2(gelu(blk.fc1(x))); }

}  // namespace

TokenState patch_embed(const Tensor& Z, const Tensor& X, const BackboneParams& params,
                       const BackboneConfig& cfg) {
  if (Z.dim(0) != X.dim(0)) {
    throw ShapeError("patch_embed: batch mismatch between " + shape_str(Z.shape()) + " and " +
                     shape_str(X.shape()));
  }
  Tensor tz = embed_image(Z, params, cfg.P, "template");
  Tensor tx = embed_image(X, params, cfg.P, "search");
  if (tz.dim(1) != params.pos_z.dim(0) || tx.dim(1) != params.pos_x.dim(0)) {
    throw ShapeError("patch_embed: image sizes do not match the configured token counts");
  }
  TokenState s;
  s.tokens = concat({add(tz, params.pos_z), add(tx, params.pos_x)}, 1);
  s.template_range = {0, tz.dim(1)};
  s.search_range = {tz.dim(1), tz.dim(1) + tx.dim(1)};
  return s;
}

Tensor am_probability(const TokenState& state, const AMParams& am) {
  const Tensor& t = state.tokens;
  const int64_t B = t.dim(0), K = t.dim(1);
  if (am.affine.weight.dim(0) != K) {
    throw ShapeError("am_probability: AM expects " + std::to_string(am.affine.weight.dim(0)) +
                     " tokens, state has " + std::to_string(K));
  }
  Tensor r = reshape(slice(t, 2, 0, 1), {B, K});
  return sigmoid(am.affine(r));
}

Tensor block_forward(const Tensor& x, const BlockParams& block, int64_t heads,
                     const Tensor& branch_scale) {
  auto scaled = [&](const Tensor& branch) {
    return branch_scale.defined() ? mul(branch, branch_scale) : branch;
  };
  Tensor h = add(x, scaled(attention(block.norm1(x), block, heads)));
  return add(h, scaled(mlp(block.norm2(h), block)));
}

GatedBlockResult gated_block_forward(const TokenState& state, const BlockParams& block,
                                     const AMParams& am, int64_t heads, double beta, Mode mode,
                                     const std::vector<bool>& forced) {
  GatedBlockResult r;
  r.prob = am_probability(state, am);
  const int64_t B = state.batch();
  if (!forced.empty() && static_cast<int64_t>(forced.size()) != B) {
    throw ShapeError("gated_block_forward: forced gate count differs from batch size");
  }
  int64_t n_active = 0;
  for (int64_t b = 0; b < B; ++b) {
    const bool on = forced.empty() ? r.prob.at(b) > beta : forced[b];
    r.active.push_back(on);
    n_active += on ? 1 : 0;
  }
  r.state = state;
  if (n_active == 0) return r;

  const DType dt = state.tokens.dtype();
  std::vector<double> indicator(B);
  for (int64_t b = 0; b < B; ++b) indicator[b] = r.active[b] ? 1.0 : 0.0;
  const Tensor g = Tensor::from_vector({B, 1, 1}, indicator, dt);

  if (mode == Mode::kTrain) {
    r.state.tokens =
        block_forward(state.tokens, block, heads, mul(g, reshape(r.prob, {B, 1, 1})));
  } else if (n_active == B) {
    r.state.tokens = block_forward(state.tokens, block, heads);
  } else {
    r.state.tokens = where(g, block_forward(state.tokens, block, heads), state.tokens);
  }
  return r;
}

BackboneOutput backbone_forward(const Tensor& Z, const Tensor& X, const BackboneParams& params,
                                const BackboneConfig& cfg, Mode mode, const GateOverride& gates) {
  const int64_t n_f = cfg.n_f;
  if (static_cast<int64_t>(params.blocks.size()) != cfg.N ||
      static_cast<int64_t>(params.ams.size()) != cfg.N - n_f) {
    throw ShapeError("backbone_forward: parameters do not match config block counts");
  }
  if (gates.kind == GateOverride::Kind::kMask &&
      static_cast<int64_t>(gates.mask.size()) != cfg.N - n_f) {
    throw ShapeError("backbone_forward: gate mask length " + std::to_string(gates.mask.size()) +
                     " != adaptive block count " + std::to_string(cfg.N - n_f));
  }
  BackboneOutput out;
  TokenState s = patch_embed(Z, X, params, cfg);
  for (int64_t i = 0; i < n_f; ++i) s.tokens = block_forward(s.tokens, params.blocks[i], cfg.heads);
  const int64_t B = s.batch();
  for (int64_t j = 0; j < cfg.N - n_f; ++j) {
    std::vector<bool> forced;
    switch (gates.kind) {
      case GateOverride::Kind::kNone: break;
      case GateOverride::Kind::kAllOn: forced.assign(B, true); break;
      case GateOverride::Kind::kAllOff: forced.assign(B, false); break;
      case GateOverride::Kind::kMask: forced.assign(B, gates.mask[j]); break;
    }
    GatedBlockResult r = gated_block_forward(s, params.blocks[n_f + j], params.ams[j], cfg.heads,
                                             cfg.beta, mode, forced);
    s = std::move(r.state);
    out.trace.blocks.push_back(GateRecord{r.prob, std::move(r.active)});
  }
  s.tokens = params.final_norm(s.tokens);
  out.state = std::move(s);
  return out;
}

Tensor sparsity_loss(const std::vector<Tensor>& probs, double zeta) {
  if (probs.empty()) throw Error("sparsity_loss: empty activation trace");
  Tensor total = concat(probs, 1);  // [B, N - n_f]
  return mean(abs(add_scalar(mean(total, 1), -zeta)));
}

Tensor sparsity_loss(const ActivationTrace& trace, double zeta) {
  std::vector<Tensor> probs;
  for (const GateRecord& g : trace.blocks) probs.push_back(g.prob);
  return sparsity_loss(probs, zeta);
}

}  // namespace avtrack
