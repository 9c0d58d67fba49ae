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
#include <cstring>

#include "avtrack/gradcheck.h"
#include "avtrack/ops.h"
#include "avtrack/tape.h"
#include "gtest/gtest.h"
#include "test_util.h"
#include "vit_oracle.h"

namespace avtrack {
namespace {

using testing::random_tensor;

BackboneConfig tiny_config() {
  BackboneConfig c;
  c.N = 4;
  c.n_f = 1;
  c.d = 16;
  c.heads = 2;
  c.mlp_ratio = 2.0;
  c.P = 8;
  c.H_z = c.W_z = 16;
  c.H_x = c.W_x = 32;
  return c;
}

struct Fixture {
  BackboneConfig cfg;
  ParamStore store;
  BackboneParams params;
  Tensor Z, X;

  explicit Fixture(BackboneConfig c, int64_t batch = 1, uint64_t seed = 3) : cfg(c) {
    Rng rng(seed);
    params = init_backbone(cfg, store, "", rng, DType::kF64);
    Z = random_tensor({batch, 3, cfg.H_z, cfg.W_z}, seed + 1, 0.0, 1.0);
    X = random_tensor({batch, 3, cfg.H_x, cfg.W_x}, seed + 2, 0.0, 1.0);
  }

  void set_am_bias(double v) {
    for (AMParams& am : params.ams) am.affine.bias.mutable_data<double>()[0] = v;
  }
};

double max_diff_to_oracle(const Tensor& tokens, int64_t b, const testing::Mat& ref) {
  const int64_t K = tokens.dim(1), d = tokens.dim(2);
  auto v = tokens.to_vector();
  double m = 0.0;
  for (int64_t i = 0; i < K; ++i)
    for (int64_t c = 0; c < d; ++c) m = std::max(m, std::abs(v[(b * K + i) * d + c] - ref[i][c]));
  return m;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape() || a.dtype() != b.dtype()) return false;
  bool eq = false;
  dispatch(a.dtype(), [&]<typename T>() {
    auto x = a.data<T>();
    auto y = b.data<T>();
    eq = std::memcmp(x.data(), y.data(), x.size_bytes()) == 0;
  });
  return eq;
}

TEST(BackboneConfigTest, TokenCounts) {
  BackboneConfig paper = BackboneConfig::paper();
  EXPECT_EQ(paper.P_z(), 64);
  EXPECT_EQ(paper.P_x(), 256);
  EXPECT_EQ(paper.K(), 320);
  BackboneConfig desk = BackboneConfig::desk();
  EXPECT_EQ(desk.P_z(), 16);
  EXPECT_EQ(desk.P_x(), 64);
  EXPECT_EQ(desk.K(), 80);
  EXPECT_NO_THROW(paper.validate());
  EXPECT_NO_THROW(desk.validate());
}

TEST(BackboneConfigTest, RejectsInvalidConfigs) {
  auto broken = [](auto mutate) {
    BackboneConfig c;
    mutate(c);
    return c;
  };
  EXPECT_THROW(broken([](BackboneConfig& c) { c.n_f = c.N; }).validate(), Error);
  EXPECT_THROW(broken([](BackboneConfig& c) { c.n_f = 0; }).validate(), Error);
  EXPECT_THROW(broken([](BackboneConfig& c) { c.heads = 3; }).validate(), Error);
  EXPECT_THROW(broken([](BackboneConfig& c) { c.H_x = 60; }).validate(), Error);
  EXPECT_THROW(broken([](BackboneConfig& c) { c.beta = 0.5; }).validate(), Error);
  EXPECT_THROW(broken([](BackboneConfig& c) { c.beta = 1.0; }).validate(), Error);
  EXPECT_THROW(broken([](BackboneConfig& c) { c.zeta = 1.5; }).validate(), Error);
}

TEST(PatchEmbedTest, RangesPartitionTokens) {
  Fixture f(BackboneConfig::desk(), 2);
  TokenState s = patch_embed(f.Z, f.X, f.params, f.cfg);
  EXPECT_EQ(s.tokens.shape(), (Shape{2, 80, 64}));
  EXPECT_EQ(s.template_range.begin, 0);
  EXPECT_EQ(s.template_range.end, 16);
  EXPECT_EQ(s.search_range.begin, 16);
  EXPECT_EQ(s.search_range.end, 80);
  EXPECT_EQ(s.template_tokens().dim(1), 16);
  EXPECT_EQ(s.search_tokens().dim(1), 64);
}

TEST(PatchEmbedTest, RejectsIndivisibleSides) {
  Fixture f(tiny_config());
  EXPECT_THROW(patch_embed(random_tensor({1, 3, 15, 16}, 1), f.X, f.params, f.cfg), ShapeError);
  EXPECT_THROW(patch_embed(f.Z, random_tensor({1, 3, 32, 30}, 1), f.params, f.cfg), ShapeError);
  EXPECT_THROW(patch_embed(f.Z, random_tensor({1, 3, 40, 40}, 1), f.params, f.cfg), ShapeError);
}

TEST(PatchEmbedTest, ConstantImageGivesIdenticalTemplateEmbeddings) {
  Fixture f(tiny_config());
  Tensor Z = Tensor::full({1, 3, 16, 16}, 0.3);
  TokenState s = patch_embed(Z, f.X, f.params, f.cfg);
  Tensor without_pos = sub(s.template_tokens(), f.params.pos_z);
  auto v = without_pos.to_vector();
  const int64_t d = f.cfg.d;
  for (int64_t t = 1; t < f.cfg.P_z(); ++t)
    for (int64_t c = 0; c < d; ++c) EXPECT_NEAR(v[t * d + c], v[c], 1e-12);
}

TEST(ActivationModuleTest, ProbabilityFromBias) {
  Fixture f(tiny_config());
  TokenState s = patch_embed(f.Z, f.X, f.params, f.cfg);
  EXPECT_DOUBLE_EQ(am_probability(s, f.params.ams[0]).item(), 0.5);
  f.set_am_bias(std::log(9.0));
  const double oracle = 1.0 / (1.0 + std::exp(-std::log(9.0)));
  EXPECT_NEAR(am_probability(s, f.params.ams[0]).item(), oracle, 1e-15);
  EXPECT_NEAR(oracle, 0.9, 1e-15);
}

TEST(ActivationModuleTest, ReadsFirstCoordinateOfEveryToken) {
  Fixture f(tiny_config());
  TokenState s = patch_embed(f.Z, f.X, f.params, f.cfg);
  const int64_t K = f.cfg.K(), d = f.cfg.d;
  Tensor w = random_tensor({K, 1}, 5);
  std::memcpy(f.params.ams[0].affine.weight.mutable_data<double>().data(),
              w.data<double>().data(), K * sizeof(double));
  auto t = s.tokens.to_vector();
  auto wv = w.to_vector();
  double z = 0.0;
  for (int64_t k = 0; k < K; ++k) z += t[k * d] * wv[k];
  EXPECT_NEAR(am_probability(s, f.params.ams[0]).item(), 1.0 / (1.0 + std::exp(-z)), 1e-14);
}

TEST(ActivationModuleTest, RejectsTokenCountMismatch) {
  Fixture f(tiny_config());
  ParamStore other;
  AMParams wrong{Linear::zeros(other, "am", f.cfg.K() + 1, 1, DType::kF64)};
  TokenState s = patch_embed(f.Z, f.X, f.params, f.cfg);
  EXPECT_THROW(am_probability(s, wrong), ShapeError);
}

TEST(ActivationModuleTest, GateMonotoneInLogit) {
  const double beta = 0.6;
  const double threshold = std::log(beta / (1.0 - beta));
  for (double z = -3.0; z <= 3.0; z += 0.01) {
    const double p = sigmoid(Tensor::scalar(z)).item();
    EXPECT_EQ(p > beta, z > threshold) << z;
  }
}

TEST(GatedBlockTest, InactiveBlockIsIdentity) {
  Fixture f(tiny_config());
  f.set_am_bias(-10.0);
  TokenState s = patch_embed(f.Z, f.X, f.params, f.cfg);
  for (Mode mode : {Mode::kInfer, Mode::kTrain}) {
    GatedBlockResult r =
        gated_block_forward(s, f.params.blocks[1], f.params.ams[0], f.cfg.heads, 0.6, mode);
    EXPECT_FALSE(r.active[0]);
    EXPECT_LT(r.prob.item(), 1e-4);
    EXPECT_TRUE(bitwise_equal(r.state.tokens, s.tokens));
  }
}

TEST(GatedBlockTest, ZeroAmIsInactiveAtDefaultBeta) {
  Fixture f(tiny_config());
  TokenState s = patch_embed(f.Z, f.X, f.params, f.cfg);
  GatedBlockResult r = gated_block_forward(s, f.params.blocks[1], f.params.ams[0], f.cfg.heads,
                                           0.6, Mode::kInfer);
  EXPECT_DOUBLE_EQ(r.prob.item(), 0.5);
  EXPECT_FALSE(r.active[0]);
}

TEST(GatedBlockTest, ActiveInferMatchesOracleBlock) {
  Fixture f(tiny_config());
  f.set_am_bias(10.0);
  TokenState s = patch_embed(f.Z, f.X, f.params, f.cfg);
  GatedBlockResult r = gated_block_forward(s, f.params.blocks[1], f.params.ams[0], f.cfg.heads,
                                           0.6, Mode::kInfer);
  ASSERT_TRUE(r.active[0]);
  const int64_t K = f.cfg.K(), d = f.cfg.d;
  auto t = s.tokens.to_vector();
  testing::Mat x(K, std::vector<double>(d));
  for (int64_t i = 0; i < K; ++i)
    for (int64_t c = 0; c < d; ++c) x[i][c] = t[i * d + c];
  testing::Mat ref = testing::oracle_block(x, f.params.blocks[1], f.cfg.heads);
  EXPECT_LE(max_diff_to_oracle(r.state.tokens, 0, ref), 1e-6);
}

TEST(GatedBlockTest, TrainModeSendsTaskGradientToAm) {
  Fixture f(tiny_config());
  f.set_am_bias(1.0);  // p ~ 0.73 > beta
  Tensor target = random_tensor({1, f.cfg.K(), f.cfg.d}, 77);
  auto loss = [&] {
    TokenState s = patch_embed(f.Z, f.X, f.params, f.cfg);
    GatedBlockResult r = gated_block_forward(s, f.params.blocks[1], f.params.ams[0],
                                             f.cfg.heads, 0.6, Mode::kTrain);
    return mean(mul(r.state.tokens, target));
  };
  f.store.zero_grad();
  value_and_grad(loss);
  double norm = 0.0;
  for (double g : f.params.ams[0].affine.weight.grad().to_vector()) norm += g * g;
  EXPECT_GT(norm, 0.0);
  EXPECT_LE(finite_diff_report_inplace(loss, f.params.ams[0].affine.weight, 1e-5).max_rel_error,
            1e-4);
  EXPECT_LE(finite_diff_report_inplace(loss, f.params.ams[0].affine.bias, 1e-5).max_rel_error,
            1e-4);
}

TEST(GatedBlockTest, MixedBatchGatesPerSample) {
  Fixture f(tiny_config(), 2);
  TokenState s = patch_embed(f.Z, f.X, f.params, f.cfg);
  GatedBlockResult mixed = gated_block_forward(s, f.params.blocks[1], f.params.ams[0],
                                               f.cfg.heads, 0.6, Mode::kInfer, {true, false});
  GatedBlockResult dense = gated_block_forward(s, f.params.blocks[1], f.params.ams[0],
                                               f.cfg.heads, 0.6, Mode::kInfer, {true, true});
  const int64_t n = f.cfg.K() * f.cfg.d;
  auto m = mixed.state.tokens.to_vector();
  auto d = dense.state.tokens.to_vector();
  auto in = s.tokens.to_vector();
  for (int64_t i = 0; i < n; ++i) {
    EXPECT_EQ(m[i], d[i]);
    EXPECT_EQ(m[n + i], in[n + i]);
  }
}

TEST(BackboneTest, AllActiveMatchesDenseOracle) {
  for (BackboneConfig cfg : {tiny_config(), BackboneConfig::desk()}) {
    Fixture f(cfg, 2);
    f.set_am_bias(10.0);
    f.cfg.beta = 0.9;
    BackboneOutput out = backbone_forward(f.Z, f.X, f.params, f.cfg, Mode::kInfer);
    ASSERT_EQ(out.trace.size(), static_cast<size_t>(cfg.N - cfg.n_f));
    for (int64_t b = 0; b < 2; ++b) {
      EXPECT_EQ(out.trace.active_count(b), cfg.N - cfg.n_f);
      testing::Mat ref = testing::oracle_vit(f.Z, f.X, b, f.params, f.cfg, cfg.N);
      EXPECT_LE(max_diff_to_oracle(out.state.tokens, b, ref), 1e-6);
    }
  }
}

TEST(BackboneTest, ForcedAllOnMatchesDenseOracle) {
  Fixture f(tiny_config());
  BackboneOutput out =
      backbone_forward(f.Z, f.X, f.params, f.cfg, Mode::kInfer, GateOverride::all_on());
  testing::Mat ref = testing::oracle_vit(f.Z, f.X, 0, f.params, f.cfg, f.cfg.N);
  EXPECT_LE(max_diff_to_oracle(out.state.tokens, 0, ref), 1e-6);
}

TEST(BackboneTest, ZeroAmEqualsPrefixBitwise) {
  Fixture f(tiny_config());
  BackboneOutput gated = backbone_forward(f.Z, f.X, f.params, f.cfg, Mode::kInfer);
  EXPECT_EQ(gated.trace.active_count(), 0);
  BackboneOutput forced =
      backbone_forward(f.Z, f.X, f.params, f.cfg, Mode::kInfer, GateOverride::all_off());

  // A genuine n_f-block model sharing the prefix weights.
  BackboneConfig short_cfg = f.cfg;
  short_cfg.N = f.cfg.n_f + 1;
  BackboneParams prefix = f.params;
  prefix.blocks.resize(short_cfg.N);
  prefix.ams.resize(1);
  BackboneOutput ref = backbone_forward(f.Z, f.X, prefix, short_cfg, Mode::kInfer,
                                        GateOverride::all_off());
  EXPECT_TRUE(bitwise_equal(gated.state.tokens, ref.state.tokens));
  EXPECT_TRUE(bitwise_equal(forced.state.tokens, ref.state.tokens));
  testing::Mat oracle = testing::oracle_vit(f.Z, f.X, 0, f.params, f.cfg, f.cfg.n_f);
  EXPECT_LE(max_diff_to_oracle(gated.state.tokens, 0, oracle), 1e-6);
}

TEST(BackboneTest, PrefixRunsRegardlessOfAm) {
  Fixture f(tiny_config());
  f.set_am_bias(-10.0);
  BackboneOutput out = backbone_forward(f.Z, f.X, f.params, f.cfg, Mode::kInfer);
  testing::Mat embed_only = testing::oracle_vit(f.Z, f.X, 0, f.params, f.cfg, 0);
  testing::Mat prefix = testing::oracle_vit(f.Z, f.X, 0, f.params, f.cfg, f.cfg.n_f);
  EXPECT_LE(max_diff_to_oracle(out.state.tokens, 0, prefix), 1e-6);
  EXPECT_GT(max_diff_to_oracle(out.state.tokens, 0, embed_only), 1e-3);
}

TEST(BackboneTest, MaskOverrideSelectsBlocks) {
  Fixture f(tiny_config());
  BackboneOutput out = backbone_forward(f.Z, f.X, f.params, f.cfg, Mode::kInfer,
                                        GateOverride::from_mask({true, false, true}));
  EXPECT_EQ(out.trace.gates(), (std::vector<bool>{true, false, true}));
  EXPECT_THROW(backbone_forward(f.Z, f.X, f.params, f.cfg, Mode::kInfer,
                                GateOverride::from_mask({true})),
               ShapeError);
  EXPECT_EQ(GateOverride::parse("all-on").kind, GateOverride::Kind::kAllOn);
  EXPECT_THROW(GateOverride::parse("some"), Error);
}

TEST(BackboneTest, TraceProbabilitiesInUnitInterval) {
  for (uint64_t seed = 0; seed < 5; ++seed) {
    Fixture f(tiny_config(), 3, seed);
    for (AMParams& am : f.params.ams) {
      auto w = am.affine.weight.mutable_data<double>();
      Rng rng(seed + 100);
      for (double& v : w) v = rng.uniform(-3.0, 3.0);
    }
    BackboneOutput out = backbone_forward(f.Z, f.X, f.params, f.cfg, Mode::kTrain);
    ASSERT_EQ(out.trace.size(), 3u);
    for (size_t j = 0; j < out.trace.size(); ++j) {
      for (int64_t b = 0; b < 3; ++b) {
        const double p = out.trace.prob(j, b);
        EXPECT_GE(p, 0.0);
        EXPECT_LE(p, 1.0);
        EXPECT_EQ(out.trace.gate(j, b), p > f.cfg.beta);
      }
    }
  }
}

std::vector<Tensor> split_probs(const std::vector<double>& v) {
  std::vector<Tensor> out;
  for (double p : v) out.push_back(Tensor::from_vector({1, 1}, {p}));
  return out;
}

TEST(SparsityLossTest, HandComputedCases) {
  EXPECT_EQ(sparsity_loss(split_probs({0.2, 0.4, 0.6, 0.8}), 0.0).item(), 0.5);
  EXPECT_EQ(sparsity_loss(split_probs({0.4, 0.4, 0.4}), 0.4).item(), 0.0);
  EXPECT_NEAR(sparsity_loss(split_probs(std::vector<double>(8, 1.0)), 0.4).item(), 0.6, 1e-15);
  EXPECT_THROW(sparsity_loss(std::vector<Tensor>{}, 0.4), Error);
  EXPECT_THROW(sparsity_loss(ActivationTrace{}, 0.4), Error);
}

TEST(SparsityLossTest, ZeroIffMeanEqualsTarget) {
  for (uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    std::vector<double> p(5);
    for (double& v : p) v = rng.uniform();
    double m = 0.0;
    for (double v : p) m += v;
    m /= 5.0;
    EXPECT_NEAR(sparsity_loss(split_probs(p), m).item(), 0.0, 1e-15);
    EXPECT_GT(sparsity_loss(split_probs(p), m + 0.01).item(), 0.0);
  }
}

TEST(SparsityLossTest, GradientIsScaledSign) {
  std::vector<Tensor> probs = split_probs({0.9, 0.8, 0.7, 0.6});
  for (Tensor& p : probs) p.set_requires_grad(true);
  value_and_grad([&] { return sparsity_loss(probs, 0.2); });
  for (const Tensor& p : probs) EXPECT_DOUBLE_EQ(p.grad().item(), 0.25);
}

TEST(SparsityLossTest, FiniteDifferencesThroughModel) {
  Fixture f(tiny_config(), 2);
  for (AMParams& am : f.params.ams) {
    auto w = am.affine.weight.mutable_data<double>();
    Rng rng(4);
    for (double& v : w) v = rng.uniform(-0.5, 0.5);
  }
  auto loss = [&] {
    return sparsity_loss(backbone_forward(f.Z, f.X, f.params, f.cfg, Mode::kTrain).trace, 0.1);
  };
  EXPECT_LE(finite_diff_report_inplace(loss, f.params.ams[1].affine.weight, 1e-5).max_rel_error,
            1e-4);
}

}  // namespace
}  // namespace avtrack
