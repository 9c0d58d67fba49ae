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

// Images, synthetic sequences and the on-disk dataset layout.

#ifndef AVTRACK_DATA_H_
#define AVTRACK_DATA_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "avtrack/box.h"
#include "avtrack/tensor.h"

namespace avtrack {

// 8-bit interleaved RGB, row-major.
struct Image {
  int64_t width = 0;
  int64_t height = 0;
  std::vector<uint8_t> rgb;

  Image() = default;
  Image(int64_t w, int64_t h) : width(w), height(h), rgb(static_cast<size_t>(w * h * 3), 0) {}
  uint8_t* pixel(int64_t x, int64_t y) { return &rgb[(y * width + x) * 3]; }
  const uint8_t* pixel(int64_t x, int64_t y) const { return &rgb[(y * width + x) * 3]; }
  bool operator==(const Image&) const = default;
};

// Per-channel mean in [0, 1].
std::array<double, 3> channel_means(const Image& img);

// Square crop of side `side` pixels centered at (cx, cy), bilinearly resized
// to out x out. Pixels outside the frame take the per-channel frame mean.
// Returns [1, 3, out, out] with values in [0, 1].
Tensor crop_patch(const Image& img, double cx, double cy, double side, int64_t out, DType dtype);

struct SequenceDataset {
  std::string name;
  std::vector<Image> frames;
  std::vector<Rect> boxes;  // integer-valued pixels, top-left form

  size_t size() const { return frames.size(); }
  bool operator==(const SequenceDataset&) const = default;
};

enum class TargetShape { kRectangle, kEllipse };

struct GenConfig {
  uint64_t seed = 0;
  int64_t width = 128;
  int64_t height = 128;
  int64_t length = 40;
  TargetShape shape = TargetShape::kRectangle;
  double target_w = 16.0;
  double target_h = 16.0;
  double motion = 1.5;       // max per-frame velocity change, pixels
  double rotation = 0.15;    // radians
  double scale = 0.1;        // relative
  double shear = 0.1;
  double texture_scale = 12.0;  // background lattice spacing, pixels
  double occluder_prob = 0.0;
  std::string name = "seq";

  void validate() const;
};

// Deterministic in cfg; uses only uniform draws from the integer-state RNG.
SequenceDataset gen_sequence(const GenConfig& cfg);

// frame_%06d.ppm plus groundtruth_rect.txt.
void write_sequence(const SequenceDataset& ds, const std::filesystem::path& dir);
SequenceDataset read_sequence(const std::filesystem::path& dir);

void write_ppm(const Image& img, const std::filesystem::path& path);
Image read_ppm(const std::filesystem::path& path);

}  // namespace avtrack

#endif  // AVTRACK_DATA_H_
