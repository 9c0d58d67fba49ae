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

// One-pass evaluation metrics, cost accounting and throughput measurement.

#ifndef AVTRACK_EVAL_H_
#define AVTRACK_EVAL_H_

#include <cstdint>
#include <string>
#include <vector>

#include "avtrack/backbone.h"
#include "avtrack/box.h"
#include "avtrack/data.h"
#include "avtrack/model.h"
#include "avtrack/tracker.h"

namespace avtrack {

// Fraction of frames whose center error is <= threshold pixels.
double precision_at(const std::vector<Rect>& pred, const std::vector<Rect>& gt, double threshold);
// Thresholds 0, 1, ..., 50.
std::vector<double> precision_curve(const std::vector<Rect>& pred, const std::vector<Rect>& gt);
// Fraction of frames with IoU > t for t = 0, 0.05, ..., 1.
std::vector<double> success_curve(const std::vector<Rect>& pred, const std::vector<Rect>& gt);
double success_auc(const std::vector<Rect>& pred, const std::vector<Rect>& gt);
// The 21 overlap thresholds, computed as i / 20.
std::vector<double> success_thresholds();

enum class FlopConvention {
  kMac,       // one multiply-accumulate counts as one operation
  kTwiceMac,  // one multiply-accumulate counts as two operations
};

struct CostReport {
  int64_t params_min = 0;  // fixed parts plus the n_f prefix blocks
  int64_t params_max = 0;  // fixed parts plus all N blocks
  double flops_min = 0.0;
  double flops_max = 0.0;
  double flops_per_block = 0.0;
  // Itemized operation counts in the selected convention.
  double flops_embed = 0.0;
  double flops_am = 0.0;
  double flops_norm = 0.0;
  double flops_head = 0.0;
  FlopConvention convention = FlopConvention::kMac;
};

struct ParamCounts {
  int64_t min = 0;
  int64_t max = 0;
};

// Inference parameters (backbone and head). Critics are excluded. With
// include_am the activation modules are added to both bounds.
ParamCounts count_params(const BackboneConfig& cfg, bool include_am, int64_t head_channels = 0);

CostReport count_flops(const BackboneConfig& cfg, int64_t head_channels = 0,
                       FlopConvention convention = FlopConvention::kMac);

// flops_min + active_gates(sample) * flops_per_block.
double flops_for_trace(const CostReport& report, const ActivationTrace& trace, int64_t sample = 0);
double flops_for_active(const CostReport& report, int64_t active_gates);

struct FpsReport {
  double mean_fps = 0.0;
  double p50_ms = 0.0;
  double p99_ms = 0.0;
  int64_t frames = 0;  // timed frames, warmup excluded
};

// Times track_step over frames [warmup + 1, size) after initializing on
// frame 0. Frames 1..warmup run untimed.
FpsReport bench_fps(const TrackerModel& model, const SequenceDataset& ds, int64_t warmup,
                    const TrackerOptions& options = {});

}  // namespace avtrack

#endif  // AVTRACK_EVAL_H_
