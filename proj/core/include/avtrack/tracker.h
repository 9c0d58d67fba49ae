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

// One-pass tracking runtime: crop, infer, penalize, decode, map back.

#ifndef AVTRACK_TRACKER_H_
#define AVTRACK_TRACKER_H_

#include <cstdint>
#include <string>
#include <vector>

#include "avtrack/backbone.h"
#include "avtrack/box.h"
#include "avtrack/data.h"
#include "avtrack/model.h"

namespace avtrack {

inline constexpr double kSearchFactor = 4.0;
inline constexpr double kTemplateFactor = 2.0;

// Crop side for a box under a context factor: factor * sqrt(w * h).
inline double context_side(const Rect& box, double factor) {
  return factor * std::sqrt(box.w * box.h);
}

struct TrackerOptions {
  double search_factor = kSearchFactor;
  double template_factor = kTemplateFactor;
  bool hanning = true;
  GateOverride gates;
};

struct TrackState {
  Tensor template_patch;  // [1, 3, H_z, W_z]
  Rect current_box;
  double search_factor = kSearchFactor;
  int64_t frame_index = 0;
};

TrackState init_track(const Image& frame, const Rect& gt_box, const TrackerModel& model,
                      const TrackerOptions& options = {});

struct FrameResult {
  int64_t frame = 0;
  Rect box;
  double score = 0.0;
  int64_t active_blocks = 0;  // n_f plus active adaptive gates
  double millis = 0.0;
  ActivationTrace trace;
};

// Advances `state` by one frame. Runs under a no-grad guard and never
// records onto a tape.
FrameResult track_step(TrackState& state, const Image& frame, const TrackerModel& model,
                       const TrackerOptions& options = {});

// Initializes on frame 0 and tracks the rest. The first record holds the
// initialization box.
std::vector<FrameResult> track_sequence(const SequenceDataset& ds, const TrackerModel& model,
                                        const TrackerOptions& options = {});

// Comma-separated per-frame record.
std::string frame_record_header();
std::string format_frame_record(const FrameResult& r);

}  // namespace avtrack

#endif  // AVTRACK_TRACKER_H_
