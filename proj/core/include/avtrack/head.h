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

// Center-based prediction head, box decoding, target encoding and the
// tracking losses.

#ifndef AVTRACK_HEAD_H_
#define AVTRACK_HEAD_H_

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "avtrack/box.h"
#include "avtrack/params.h"
#include "avtrack/rng.h"
#include "avtrack/tensor.h"

namespace avtrack {

// 3x3 conv (no bias) + batch norm + relu.
struct ConvBnRelu {
  Tensor weight;  // [out, in, 3, 3]
  Tensor gamma, beta;
  Tensor running_mean, running_var;

  Tensor operator()(const Tensor& x, bool train) const;
};

struct HeadBranch {
  std::array<ConvBnRelu, 4> layers;  // d -> c -> c/2 -> c/4 -> c/8
  Tensor out_weight;                 // [outputs, c/8, 1, 1]
  Tensor out_bias;                   // [outputs]

  Tensor operator()(const Tensor& x, bool train) const;
};

struct HeadParams {
  HeadBranch score;   // 1 channel
  HeadBranch offset;  // 2 channels
  HeadBranch size;    // 2 channels
};

// `channels` is the width of the first conv layer; it must be divisible by 8.
HeadParams init_head(ParamStore& store, const std::string& prefix, int64_t d, int64_t channels,
                     Rng& rng, DType dtype);

struct HeadMaps {
  Tensor score;   // [B, 1, H, W], sigmoid
  Tensor offset;  // [B, 2, H, W], sigmoid, (x, y)
  Tensor size;    // [B, 2, H, W], sigmoid, (w, h)
};

// search_tokens: [B, grid_h * grid_w, d]. `train` selects batch statistics
// in the batch-norm layers.
HeadMaps head_forward(const Tensor& search_tokens, int64_t grid_h, int64_t grid_w,
                      const HeadParams& head, bool train);

struct Decoded {
  Box box;  // normalized to the search crop
  double score = 0.0;
  int64_t cell_x = 0, cell_y = 0;
};

// Argmax of sample `b` (first cell in row-major order on ties), refined by
// the offset and size maps at that cell. `score_map` may differ from
// maps.score, e.g. after a window penalty; it must have the same shape.
Decoded decode_box(const Tensor& score_map, const Tensor& offset_map, const Tensor& size_map,
                   int64_t b = 0);

// Cosine window w(i, j) = h(i) h(j), shape [H, W].
struct HannWindow {
  int64_t h = 0, w = 0;
  std::vector<double> weights;

  static HannWindow create(int64_t grid_h, int64_t grid_w);
  double at(int64_t i, int64_t j) const { return weights[i * w + j]; }
};

// Elementwise product of a [B, 1, H, W] map with the window.
Tensor hanning_penalize(const Tensor& score_map, const HannWindow& window);

struct GtMaps {
  std::vector<double> heat;  // [H * W], 1 at the center cell
  int64_t cell_x = 0, cell_y = 0;
  double offset_x = 0.0, offset_y = 0.0;
  double w = 0.0, h = 0.0;
};

GtMaps make_gt_maps(const Box& box, int64_t grid_h, int64_t grid_w);

// Batched targets for the losses.
struct GtBatch {
  Tensor heat;    // [B, 1, H, W]
  Tensor onehot;  // [B, 1, H, W], 1 at each sample's center cell
  Tensor cell;    // [B, 2]: (cell_x / W, cell_y / H)
  Tensor boxes;   // [B, 4] normalized (cx, cy, w, h)
  int64_t grid_h = 0, grid_w = 0;
};

GtBatch make_gt_batch(const std::vector<Box>& boxes, int64_t grid_h, int64_t grid_w, DType dtype);

// Summed positive and negative terms over the positive count.
Tensor focal_loss(const Tensor& score_map, const Tensor& gt_heat);

// Boxes [B, 4] in (cx, cy, w, h); both losses average over the batch.
Tensor giou_loss(const Tensor& pred, const Tensor& gt);
Tensor l1_loss(const Tensor& pred, const Tensor& gt);

// Predicted [B, 4] boxes read off at each sample's ground-truth cell.
Tensor boxes_at_cells(const HeadMaps& maps, const GtBatch& gt);

struct LossWeights {
  double lambda_iou = 2.0;
  double lambda_l1 = 5.0;
  double gamma = 50.0;  // sparsity
  double kappa = 1e-4;  // view invariance
  double eta = 1e-4;    // distillation
};

struct PredLoss {
  Tensor cls, iou, l1, total;
};

PredLoss pred_loss(const HeadMaps& maps, const GtBatch& gt, const LossWeights& w);
// cls + lambda_iou * iou + lambda_l1 * l1.
Tensor pred_total(const Tensor& cls, const Tensor& iou, const Tensor& l1, const LossWeights& w);

// total = pred + gamma * spar + kappa * vir. Undefined spar/vir count as 0.
Tensor overall_loss(const Tensor& pred, const Tensor& spar, const Tensor& vir,
                    const LossWeights& w);

}  // namespace avtrack

#endif  // AVTRACK_HEAD_H_
