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

#include "avtrack/tracker.h"

#include <chrono>
#include <cstdio>

#include "avtrack/ops.h"
#include "avtrack/tape.h"

namespace avtrack {

TrackState init_track(const Image& frame, const Rect& gt_box, const TrackerModel& model,
                      const TrackerOptions& options) {
  if (!(gt_box.w > 0.0) || !(gt_box.h > 0.0)) throw Error("init_track: degenerate box");
  const BackboneConfig& cfg = model.cfg;
  TrackState s;
  s.template_patch = crop_patch(frame, gt_box.cx(), gt_box.cy(),
                                context_side(gt_box, options.template_factor), cfg.H_z,
                                model.dtype());
  s.current_box = gt_box;
  s.search_factor = options.search_factor;
  return s;
}

FrameResult track_step(TrackState& state, const Image& frame, const TrackerModel& model,
                       const TrackerOptions& options) {
  NoGradGuard guard;
  const auto start = std::chrono::steady_clock::now();
  const BackboneConfig& cfg = model.cfg;
  const Rect& prev = state.current_box;
  const double side = context_side(prev, state.search_factor);
  const double x0 = prev.cx() - 0.5 * side, y0 = prev.cy() - 0.5 * side;
  Tensor search = crop_patch(frame, prev.cx(), prev.cy(), side, cfg.H_x, model.dtype());

  BackboneOutput out =
      backbone_forward(state.template_patch, search, model.backbone, cfg, Mode::kInfer,
                       options.gates);
  const int64_t gh = cfg.search_grid_h(), gw = cfg.search_grid_w();
  HeadMaps maps = head_forward(out.state.search_tokens(), gh, gw, model.head, false);
  Tensor score = options.hanning ? hanning_penalize(maps.score, HannWindow::create(gh, gw))
                                 : maps.score;
  Decoded dec = decode_box(score, maps.offset, maps.size);

  const double W = static_cast<double>(frame.width), H = static_cast<double>(frame.height);
  Box b{x0 + dec.box.cx * side, y0 + dec.box.cy * side, dec.box.w * side, dec.box.h * side};
  b.cx = std::clamp(b.cx, 0.0, W);
  b.cy = std::clamp(b.cy, 0.0, H);
  b.w = std::clamp(b.w, 1.0, W);
  b.h = std::clamp(b.h, 1.0, H);

  FrameResult r;
  state.current_box = to_rect(b);
  r.frame = ++state.frame_index;
  r.box = state.current_box;
  r.score = dec.score;
  r.active_blocks = cfg.n_f + out.trace.active_count();
  r.trace = std::move(out.trace);
  r.millis = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
                 .count();
  return r;
}

std::vector<FrameResult> track_sequence(const SequenceDataset& ds, const TrackerModel& model,
                                        const TrackerOptions& options) {
  if (ds.frames.empty()) throw Error("track_sequence: empty sequence");
  std::vector<FrameResult> results;
  TrackState state = init_track(ds.frames[0], ds.boxes[0], model, options);
  FrameResult first;
  first.box = ds.boxes[0];
  first.score = 1.0;
  first.active_blocks = 0;
  results.push_back(first);
  for (size_t i = 1; i < ds.frames.size(); ++i) {
    results.push_back(track_step(state, ds.frames[i], model, options));
  }
  return results;
}

std::string frame_record_header() { return "frame,x,y,w,h,score,active_blocks,ms"; }

std::string format_frame_record(const FrameResult& r) {
  char buf[192];
  std::snprintf(buf, sizeof(buf), "%lld,%.3f,%.3f,%.3f,%.3f,%.6f,%lld,%.4f",
                static_cast<long long>(r.frame), r.box.x, r.box.y, r.box.w, r.box.h, r.score,
                static_cast<long long>(r.active_blocks), r.millis);
  return buf;
}

}  // namespace avtrack
