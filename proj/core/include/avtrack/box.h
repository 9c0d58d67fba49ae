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

#ifndef AVTRACK_BOX_H_
#define AVTRACK_BOX_H_

#include <algorithm>
#include <cmath>

namespace avtrack {

// Center form (cx, cy, w, h). Used both normalized to a crop and in pixels.
struct Box {
  double cx = 0.0, cy = 0.0, w = 0.0, h = 0.0;
  bool operator==(const Box&) const = default;
};

// Top-left form (x, y, w, h) in frame pixels.
struct Rect {
  double x = 0.0, y = 0.0, w = 0.0, h = 0.0;
  bool operator==(const Rect&) const = default;

  double cx() const { return x + 0.5 * w; }
  double cy() const { return y + 0.5 * h; }
};

inline Box to_box(const Rect& r) { return Box{r.cx(), r.cy(), r.w, r.h}; }
inline Rect to_rect(const Box& b) { return Rect{b.cx - 0.5 * b.w, b.cy - 0.5 * b.h, b.w, b.h}; }

inline double iou(const Rect& a, const Rect& b) {
  const double iw = std::max(0.0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
  const double ih = std::max(0.0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
  const double inter = iw * ih;
  const double uni = a.w * a.h + b.w * b.h - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

inline double center_error(const Rect& a, const Rect& b) {
  return std::hypot(a.cx() - b.cx(), a.cy() - b.cy());
}

}  // namespace avtrack

#endif  // AVTRACK_BOX_H_
