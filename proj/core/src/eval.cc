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

#include <algorithm>
#include <chrono>

namespace avtrack {
namespace {

void require_same_length(const std::vector<Rect>& pred, const std::vector<Rect>& gt,
                         const char* what) {
  if (pred.size() != gt.size()) {
    throw Error(std::string(what) + ": " + std::to_string(pred.size()) + " predictions for " +
                std::to_string(gt.size()) + " ground-truth boxes");
  }
  if (gt.empty()) throw Error(std::string(what) + ": empty sequence");
}

int64_t head_width(const BackboneConfig& cfg, int64_t head_channels) {
  return head_channels > 0 ? head_channels : cfg.d;
}

struct HeadCost {
  int64_t params = 0;
  double macs = 0.0;
};

HeadCost head_cost(const BackboneConfig& cfg, int64_t c) {
  HeadCost h;
  const double cells = static_cast<double>(cfg.search_grid_h() * cfg.search_grid_w());
  const int64_t widths[5] = {cfg.d, c, c / 2, c / 4, c / 8};
  for (int64_t outputs : {1, 2, 2}) {
    for (int i = 0; i < 4; ++i) {
      h.params += 9 * widths[i] * widths[i + 1] + 2 * widths[i + 1];
      h.macs += cells * 9.0 * static_cast<double>(widths[i] * widths[i + 1]);
    }
    h.params += widths[4] * outputs + outputs;
    h.macs += cells * static_cast<double>(widths[4] * outputs);
  }
  return h;
}

int64_t block_params(const BackboneConfig& cfg) {
  const int64_t d = cfg.d, h = cfg.mlp_hidden();
  return 2 * d + (3 * d * d + 3 * d) + (d * d + d) + 2 * d + (d * h + h) + (h * d + d);
}

}  // namespace

double precision_at(const std::vector<Rect>& pred, const std::vector<Rect>& gt, double threshold) {
  require_same_length(pred, gt, "precision_at");
  int64_t hits = 0;
  for (size_t i = 0; i < gt.size(); ++i) hits += center_error(pred[i], gt[i]) <= threshold;
  return static_cast<double>(hits) / static_cast<double>(gt.size());
}

std::vector<double> precision_curve(const std::vector<Rect>& pred, const std::vector<Rect>& gt) {
  std::vector<double> curve;
  for (int t = 0; t <= 50; ++t) curve.push_back(precision_at(pred, gt, t));
  return curve;
}

std::vector<double> success_thresholds() {
  std::vector<double> t;
  for (int i = 0; i <= 20; ++i) t.push_back(static_cast<double>(i) / 20.0);
  return t;
}

std::vector<double> success_curve(const std::vector<Rect>& pred, const std::vector<Rect>& gt) {
  require_same_length(pred, gt, "success_curve");
  std::vector<double> overlaps;
  for (size_t i = 0; i < gt.size(); ++i) overlaps.push_back(iou(pred[i], gt[i]));
  std::vector<double> curve;
  for (double t : success_thresholds()) {
    int64_t n = 0;
    for (double o : overlaps) n += o > t;
    curve.push_back(static_cast<double>(n) / static_cast<double>(gt.size()));
  }
  return curve;
}

double success_auc(const std::vector<Rect>& pred, const std::vector<Rect>& gt) {
  const std::vector<double> curve = success_curve(pred, gt);
  double total = 0.0;
  for (double v : curve) total += v;
  return total / static_cast<double>(curve.size());
}

ParamCounts count_params(const BackboneConfig& cfg, bool include_am, int64_t head_channels) {
  cfg.validate();
  const int64_t d = cfg.d;
  int64_t fixed = d * 3 * cfg.P * cfg.P + d + cfg.K() * d + 2 * d;
  fixed += head_cost(cfg, head_width(cfg, head_channels)).params;
  if (include_am) fixed += cfg.adaptive_blocks() * (cfg.K() + 1);
  return ParamCounts{fixed + cfg.n_f * block_params(cfg), fixed + cfg.N * block_params(cfg)};
}

CostReport count_flops(const BackboneConfig& cfg, int64_t head_channels,
                       FlopConvention convention) {
  cfg.validate();
  const double k = static_cast<double>(cfg.K()), d = static_cast<double>(cfg.d);
  const double mul = convention == FlopConvention::kTwiceMac ? 2.0 : 1.0;
  CostReport r;
  r.convention = convention;
  // Two layer norms per block and the final one: one multiply per element.
  const double block = 4.0 * k * d * d + 2.0 * k * k * d +
                       2.0 * k * d * static_cast<double>(cfg.mlp_hidden()) + 2.0 * k * d;
  r.flops_per_block = mul * block;
  r.flops_embed = mul * k * d * 3.0 * static_cast<double>(cfg.P * cfg.P);
  r.flops_am = mul * static_cast<double>(cfg.adaptive_blocks()) * k;
  r.flops_norm = mul * k * d;
  r.flops_head = mul * head_cost(cfg, head_width(cfg, head_channels)).macs;
  const double fixed = r.flops_embed + r.flops_am + r.flops_norm + r.flops_head;
  r.flops_min = fixed + static_cast<double>(cfg.n_f) * r.flops_per_block;
  r.flops_max = fixed + static_cast<double>(cfg.N) * r.flops_per_block;
  const ParamCounts p = count_params(cfg, true, head_channels);
  r.params_min = p.min;
  r.params_max = p.max;
  return r;
}

double flops_for_active(const CostReport& report, int64_t active_gates) {
  return report.flops_min + static_cast<double>(active_gates) * report.flops_per_block;
}

double flops_for_trace(const CostReport& report, const ActivationTrace& trace, int64_t sample) {
  return flops_for_active(report, trace.active_count(sample));
}

FpsReport bench_fps(const TrackerModel& model, const SequenceDataset& ds, int64_t warmup,
                    const TrackerOptions& options) {
  if (warmup < 0 || static_cast<int64_t>(ds.size()) <= warmup + 1) {
    throw Error("bench_fps: sequence of " + std::to_string(ds.size()) +
                " frames is too short for " + std::to_string(warmup) + " warmup frames");
  }
  TrackState state = init_track(ds.frames[0], ds.boxes[0], model, options);
  std::vector<double> ms;
  for (size_t i = 1; i < ds.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    track_step(state, ds.frames[i], model, options);
    const double elapsed =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
            .count();
    if (static_cast<int64_t>(i) > warmup) ms.push_back(elapsed);
  }
  FpsReport r;
  r.frames = static_cast<int64_t>(ms.size());
  double total = 0.0;
  for (double v : ms) total += v;
  r.mean_fps = total > 0.0 ? 1000.0 * static_cast<double>(ms.size()) / total : 0.0;
  std::vector<double> sorted = ms;
  std::sort(sorted.begin(), sorted.end());
  auto pct = [&](double q) {
    const size_t idx = static_cast<size_t>(q * static_cast<double>(sorted.size() - 1) + 0.5);
    return sorted[std::min(idx, sorted.size() - 1)];
  };
  r.p50_ms = pct(0.5);
  r.p99_ms = pct(0.99);
  return r;
}

}  // namespace avtrack
