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

// Plain nested-loop ViT used as a reference for the tensor-engine backbone.
// Shares only parameter values with the library, never its kernels.

#ifndef AVTRACK_TESTS_VIT_ORACLE_H_
#define AVTRACK_TESTS_VIT_ORACLE_H_

#include <cmath>
#include <vector>

#include "avtrack/backbone.h"

namespace avtrack::testing {

using Mat = std::vector<std::vector<double>>;  // [rows][cols]

inline Mat oracle_layer_norm(const Mat& x, const LayerNormParams& p) {
  auto g = p.gamma.to_vector();
  auto b = p.beta.to_vector();
  Mat y = x;
  for (auto& row : y) {
    double mu = 0.0, var = 0.0;
    for (double v : row) mu += v;
    mu /= static_cast<double>(row.size());
    for (double v : row) var += (v - mu) * (v - mu);
    var /= static_cast<double>(row.size());
    for (size_t c = 0; c < row.size(); ++c) row[c] = (row[c] - mu) / std::sqrt(var + 1e-5) * g[c] + b[c];
  }
  return y;
}

inline Mat oracle_linear(const Mat& x, const Linear& l) {
  auto w = l.weight.to_vector();
  auto b = l.bias.to_vector();
  const size_t in = l.weight.dim(0), out = l.weight.dim(1);
  Mat y(x.size(), std::vector<double>(out));
  for (size_t r = 0; r < x.size(); ++r) {
    for (size_t o = 0; o < out; ++o) {
      double s = b[o];
      for (size_t i = 0; i < in; ++i) s += x[r][i] * w[i * out + o];
      y[r][o] = s;
    }
  }
  return y;
}

inline double oracle_gelu(double x) {
  const double k = std::sqrt(2.0 / M_PI);
  return 0.5 * x * (1.0 + std::tanh(k * (x + 0.044715 * x * x * x)));
}

inline Mat oracle_block(const Mat& x, const BlockParams& blk, int64_t heads) {
  const size_t K = x.size(), d = x[0].size(), dh = d / heads;
  Mat qkv = oracle_linear(oracle_layer_norm(x, blk.norm1), blk.qkv);
  Mat att(K, std::vector<double>(d, 0.0));
  for (size_t h = 0; h < static_cast<size_t>(heads); ++h) {
    for (size_t i = 0; i < K; ++i) {
      std::vector<double> s(K);
      double mx = -1e300;
      for (size_t j = 0; j < K; ++j) {
        double dot = 0.0;
        for (size_t c = 0; c < dh; ++c) dot += qkv[i][h * dh + c] * qkv[j][d + h * dh + c];
        s[j] = dot / std::sqrt(static_cast<double>(dh));
        mx = std::max(mx, s[j]);
      }
      double z = 0.0;
      for (double& v : s) z += (v = std::exp(v - mx));
      for (size_t j = 0; j < K; ++j) {
        for (size_t c = 0; c < dh; ++c) att[i][h * dh + c] += s[j] / z * qkv[j][2 * d + h * dh + c];
      }
    }
  }
  Mat a = oracle_linear(att, blk.proj);
  Mat y = x;
  for (size_t i = 0; i < K; ++i)
    for (size_t c = 0; c < d; ++c) y[i][c] += a[i][c];
  Mat hdn = oracle_linear(oracle_layer_norm(y, blk.norm2), blk.fc1);
  for (auto& row : hdn)
    for (double& v : row) v = oracle_gelu(v);
  Mat m = oracle_linear(hdn, blk.fc2);
  for (size_t i = 0; i < K; ++i)
    for (size_t c = 0; c < d; ++c) y[i][c] += m[i][c];
  return y;
}

// Patch tokens of image `b` of a [B, 3, H, W] tensor, plus positional rows.
inline Mat oracle_embed(const Tensor& img, int64_t b, const BackboneParams& p, int64_t P,
                        const Tensor& pos) {
  const int64_t H = img.dim(2), W = img.dim(3), d = p.patch_weight.dim(0);
  auto x = img.to_vector();
  auto w = p.patch_weight.to_vector();
  auto bias = p.patch_bias.to_vector();
  auto pe = pos.to_vector();
  Mat out;
  for (int64_t py = 0; py < H / P; ++py) {
    for (int64_t px = 0; px < W / P; ++px) {
      std::vector<double> tok(d);
      for (int64_t o = 0; o < d; ++o) {
        double s = bias[o];
        for (int64_t c = 0; c < 3; ++c)
          for (int64_t ky = 0; ky < P; ++ky)
            for (int64_t kx = 0; kx < P; ++kx)
              s += w[((o * 3 + c) * P + ky) * P + kx] *
                   x[((b * 3 + c) * H + py * P + ky) * W + px * P + kx];
        tok[o] = s + pe[out.size() * d + o];
      }
      out.push_back(tok);
    }
  }
  return out;
}

// Plain ViT over the first `depth` blocks, with final norm. Returns [K][d].
inline Mat oracle_vit(const Tensor& Z, const Tensor& X, int64_t b, const BackboneParams& p,
                      const BackboneConfig& cfg, int64_t depth) {
  Mat t = oracle_embed(Z, b, p, cfg.P, p.pos_z);
  Mat tx = oracle_embed(X, b, p, cfg.P, p.pos_x);
  t.insert(t.end(), tx.begin(), tx.end());
  for (int64_t i = 0; i < depth; ++i) t = oracle_block(t, p.blocks[i], cfg.heads);
  return oracle_layer_norm(t, p.final_norm);
}

}  // namespace avtrack::testing

#endif  // AVTRACK_TESTS_VIT_ORACLE_H_
