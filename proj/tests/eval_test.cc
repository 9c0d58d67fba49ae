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

#include "avtrack/eval.h"

#include <cstring>

#include "gtest/gtest.h"
#include "avtrack/tape.h"
#include "model_fixtures.h"
#include "test_util.h"

namespace avtrack {
namespace {

using testing::tiny_config;

std::vector<Rect> shifted(const std::vector<Rect>& gt, double dx, double dy) {
  std::vector<Rect> out = gt;
  for (Rect& r : out) {
    r.x += dx;
    r.y += dy;
  }
  return out;
}

std::vector<Rect> some_boxes(size_t n) {
  std::vector<Rect> out;
  for (size_t i = 0; i < n; ++i)
    out.push_back(Rect{10.0 + 3.0 * i, 20.0 - i, 30.0 + i, 18.0 + 2.0 * i});
  return out;
}

TEST(PrecisionTest, PerfectIsOneEverywhere) {
  const auto gt = some_boxes(7);
  for (double v : precision_curve(gt, gt)) EXPECT_EQ(v, 1.0);
  EXPECT_EQ(precision_curve(gt, gt).size(), 51u);
}

TEST(PrecisionTest, TwentyFivePixelsMissesTwenty) {
  const auto gt = some_boxes(6);
  const auto pred = shifted(gt, 15.0, 20.0);
  EXPECT_EQ(precision_at(pred, gt, 20.0), 0.0);
  EXPECT_EQ(precision_at(pred, gt, 25.0), 1.0);
}

TEST(PrecisionTest, HalfAtTenHalfAtThirty) {
  const auto gt = some_boxes(8);
  std::vector<Rect> pred = gt;
  for (size_t i = 0; i < pred.size(); ++i) pred[i].x += i % 2 ? 30.0 : 10.0;
  EXPECT_EQ(precision_at(pred, gt, 20.0), 0.5);
}

TEST(SuccessTest, StrictInequalityAtOne) {
  const auto gt = some_boxes(5);
  const auto curve = success_curve(gt, gt);
  ASSERT_EQ(curve.size(), 21u);
  for (size_t i = 0; i < 20; ++i) EXPECT_EQ(curve[i], 1.0);
  EXPECT_EQ(curve[20], 0.0);
  EXPECT_DOUBLE_EQ(success_auc(gt, gt), 20.0 / 21.0);
}

TEST(SuccessTest, DisjointIsZero) {
  const auto gt = some_boxes(5);
  EXPECT_EQ(success_auc(shifted(gt, 500.0, 0.0), gt), 0.0);
}

TEST(SuccessTest, ConstantHalfOverlap) {
  // Same height, shifted by a third of the width: intersection 2/3,
  // union 4/3, IoU 1/2.
  std::vector<Rect> gt, pred;
  for (int i = 0; i < 4; ++i) {
    gt.push_back(Rect{0.0, 0.0, 30.0, 10.0 + i});
    pred.push_back(Rect{10.0, 0.0, 30.0, 10.0 + i});
  }
  ASSERT_DOUBLE_EQ(iou(pred[0], gt[0]), 0.5);
  EXPECT_DOUBLE_EQ(success_auc(pred, gt), 10.0 / 21.0);
}

TEST(SuccessTest, ThresholdsAreExactTwentieths) {
  const auto t = success_thresholds();
  ASSERT_EQ(t.size(), 21u);
  for (int i = 0; i <= 20; ++i) EXPECT_EQ(t[i], i / 20.0);
}

TEST(MetricTest, MatchesBruteForce) {
  Rng rng(42);
  std::vector<Rect> pred, gt;
  for (int i = 0; i < 100; ++i) {
    gt.push_back(Rect{rng.uniform(0, 100), rng.uniform(0, 100), rng.uniform(5, 40),
                      rng.uniform(5, 40)});
    pred.push_back(Rect{gt.back().x + rng.uniform(-30, 30), gt.back().y + rng.uniform(-30, 30),
                        gt.back().w * rng.uniform(0.5, 1.5), gt.back().h * rng.uniform(0.5, 1.5)});
  }
  double auc = 0.0;
  for (int k = 0; k <= 20; ++k) {
    int n = 0;
    for (int i = 0; i < 100; ++i) {
      const Rect &a = pred[i], &b = gt[i];
      const double iw =
          std::max(0.0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
      const double ih =
          std::max(0.0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
      const double o = iw * ih / (a.w * a.h + b.w * b.h - iw * ih);
      n += o > k / 20.0;
    }
    EXPECT_EQ(success_curve(pred, gt)[k], n / 100.0) << k;
    auc += n / 100.0;
  }
  EXPECT_NEAR(success_auc(pred, gt), auc / 21.0, 1e-15);
  for (int t = 0; t <= 50; ++t) {
    int n = 0;
    for (int i = 0; i < 100; ++i) {
      const double dx = (pred[i].x + pred[i].w / 2) - (gt[i].x + gt[i].w / 2);
      const double dy = (pred[i].y + pred[i].h / 2) - (gt[i].y + gt[i].h / 2);
      n += std::sqrt(dx * dx + dy * dy) <= t;
    }
    EXPECT_EQ(precision_curve(pred, gt)[t], n / 100.0) << t;
  }
  const auto curve = precision_curve(pred, gt);
  for (size_t i = 1; i < curve.size(); ++i) EXPECT_GE(curve[i], curve[i - 1]);
}

TEST(MetricTest, LengthMismatchRejected) {
  const auto gt = some_boxes(4);
  const auto pred = some_boxes(3);
  EXPECT_THROW(precision_at(pred, gt, 20), Error);
  EXPECT_THROW(success_auc(pred, gt), Error);
  EXPECT_THROW(success_auc({}, {}), Error);
}

// Layer-by-layer MAC enumeration.
struct Linear {
  double tokens, in, out;
};

double enumerate_macs(const BackboneConfig& c, int64_t head_c, int64_t blocks) {
  const double K = static_cast<double>(c.K()), d = static_cast<double>(c.d);
  const double hidden = d * c.mlp_ratio;
  std::vector<Linear> layers;
  layers.push_back({K, 3.0 * c.P * c.P, d});  // patch embedding
  for (int64_t b = 0; b < blocks; ++b) {
    layers.push_back({K, d, 3 * d});       // qkv
    layers.push_back({K, d, d});           // proj
    layers.push_back({K, d, hidden});      // fc1
    layers.push_back({K, hidden, d});      // fc2
  }
  double macs = 0.0;
  for (const Linear& l : layers) macs += l.tokens * l.in * l.out;
  macs += blocks * (2.0 * K * K * d);        // scores and weighted sum
  macs += blocks * 2.0 * K * d + K * d;      // layer-norm scaling
  macs += static_cast<double>(c.adaptive_blocks()) * K;  // gate projections
  const double cells = static_cast<double>(c.search_grid_h() * c.search_grid_w());
  for (int outs : {1, 2, 2}) {
    double w = d, next = static_cast<double>(head_c);
    for (int i = 0; i < 4; ++i) {
      macs += cells * 9.0 * w * next;
      w = next;
      next /= 2;
    }
    macs += cells * w * outs;
  }
  return macs;
}

TEST(CostTest, FlopsMatchLayerEnumeration) {
  for (const BackboneConfig& c : {tiny_config(), BackboneConfig::paper()}) {
    const int64_t hc = c.d;
    const CostReport r = count_flops(c);
    EXPECT_NEAR(r.flops_min, enumerate_macs(c, hc, c.n_f), 1e-9 * r.flops_min);
    EXPECT_NEAR(r.flops_max, enumerate_macs(c, hc, c.N), 1e-9 * r.flops_max);
    const CostReport twice = count_flops(c, 0, FlopConvention::kTwiceMac);
    EXPECT_DOUBLE_EQ(twice.flops_min, 2.0 * r.flops_min);
    EXPECT_DOUBLE_EQ(twice.flops_per_block, 2.0 * r.flops_per_block);
  }
}

TEST(CostTest, ParamsMatchModelStore) {
  const TrackerModel m = testing::tiny_model(1);
  int64_t inference = 0;
  for (const auto& e : m.store->entries()) {
    if (e.trainable && e.name.rfind(kCriticPrefix, 0) != 0) inference += e.tensor.numel();
  }
  const ParamCounts with_am = count_params(m.cfg, true, m.head_channels);
  EXPECT_EQ(with_am.max, inference);
  const ParamCounts without = count_params(m.cfg, false, m.head_channels);
  EXPECT_EQ(with_am.max - without.max, m.cfg.adaptive_blocks() * (m.cfg.K() + 1));
  int64_t one_block = 0;
  for (const auto& e : m.store->entries()) {
    if (e.name.rfind("backbone.blocks.0.", 0) == 0) one_block += e.tensor.numel();
  }
  EXPECT_EQ(with_am.max - with_am.min, (m.cfg.N - m.cfg.n_f) * one_block);
}

TEST(CostTest, PerRunIsAffineInActiveGates) {
  const CostReport r = count_flops(tiny_config());
  const int64_t adaptive = tiny_config().adaptive_blocks();
  EXPECT_EQ(flops_for_active(r, 0), r.flops_min);
  EXPECT_DOUBLE_EQ(flops_for_active(r, adaptive), r.flops_max);
  for (int64_t a = 1; a <= adaptive; ++a) {
    EXPECT_DOUBLE_EQ(flops_for_active(r, a) - flops_for_active(r, a - 1), r.flops_per_block);
  }
}

TEST(CostTest, PerRunFromTraceStaysInBounds) {
  const TrackerModel m = testing::tiny_model(2);
  const CostReport r = count_flops(m.cfg, m.head_channels);
  Tensor Z = testing::random_tensor({2, 3, 16, 16}, 1, 0, 1);
  Tensor X = testing::random_tensor({2, 3, 32, 32}, 2, 0, 1);
  NoGradGuard guard;
  for (const GateOverride& g : {GateOverride::all_off(), GateOverride::all_on(),
                                GateOverride::from_mask({true, false}), GateOverride::none()}) {
    const BackboneOutput out = backbone_forward(Z, X, m.backbone, m.cfg, Mode::kInfer, g);
    for (int64_t s = 0; s < 2; ++s) {
      const double f = flops_for_trace(r, out.trace, s);
      EXPECT_GE(f, r.flops_min);
      EXPECT_LE(f, r.flops_max);
      EXPECT_DOUBLE_EQ(f, r.flops_min + out.trace.active_count(s) * r.flops_per_block);
    }
  }
  const BackboneOutput off =
      backbone_forward(Z, X, m.backbone, m.cfg, Mode::kInfer, GateOverride::all_off());
  EXPECT_EQ(flops_for_trace(r, off.trace), r.flops_min);
}

TEST(CostTest, LargeProfileNearReportedRange) {
  // Reported range: 0.97G to 2.4G operations, 3.5M to 7.9M parameters.
  const BackboneConfig c = BackboneConfig::paper();
  EXPECT_EQ(c.N, 12);
  EXPECT_EQ(c.d, 192);
  EXPECT_EQ(c.n_f, 4);
  const CostReport r = count_flops(c);
  EXPECT_NEAR(r.flops_min / 0.97e9, 1.0, 0.25) << r.flops_min;
  EXPECT_NEAR(r.flops_max / 2.4e9, 1.0, 0.25) << r.flops_max;
  EXPECT_NEAR(r.params_min / 3.5e6, 1.0, 0.25) << r.params_min;
  EXPECT_NEAR(r.params_max / 7.9e6, 1.0, 0.25) << r.params_max;
}

TEST(BenchFpsTest, WarmupExcluded) {
  const TrackerModel m = testing::tiny_model(3, DType::kF32);
  SequenceDataset ds = testing::small_sequences(1, 5, 10)[0];
  const FpsReport r = bench_fps(m, ds, 3);
  EXPECT_EQ(r.frames, 6);
  EXPECT_GT(r.mean_fps, 0.0);
  EXPECT_LE(r.p50_ms, r.p99_ms);
  EXPECT_EQ(bench_fps(m, ds, 0).frames, 9);
  EXPECT_THROW(bench_fps(m, ds, 9), Error);
}

}  // namespace
}  // namespace avtrack
