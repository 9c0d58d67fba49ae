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

#include "avtrack/head.h"

#include <cmath>

#include "avtrack/ops.h"

namespace avtrack {

Tensor ConvBnRelu::operator()(const Tensor& x, bool train) const {
  Tensor y = conv2d(x, weight, Tensor(), 1, 1);
  return relu(batch_norm2d(y, gamma, beta, running_mean, running_var, train));
}

Tensor HeadBranch::operator()(const Tensor& x, bool train) const {
  Tensor y = x;
  for (const ConvBnRelu& layer : layers) y = layer(y, train);
  return sigmoid(conv2d(y, out_weight, out_bias, 1, 0));
}

namespace {

HeadBranch init_branch(ParamStore& store, const std::string& name, int64_t d, int64_t c,
                       int64_t outputs, Rng& rng, DType dtype) {
  HeadBranch br;
  const int64_t widths[5] = {d, c, c / 2, c / 4, c / 8};
  for (int i = 0; i < 4; ++i) {
    const std::string l = name + ".conv" + std::to_string(i);
    const int64_t in = widths[i], out = widths[i + 1];
    ConvBnRelu& layer = br.layers[i];
    layer.weight = store.add(l + ".weight", normal_tensor({out, in, 3, 3},
                                                          std::sqrt(2.0 / (9.0 * in)), rng, dtype));
    layer.gamma = store.add(l + ".bn.gamma", Tensor::full({out}, 1.0, dtype));
    layer.beta = store.add(l + ".bn.beta", Tensor::zeros({out}, dtype));
    layer.running_mean = store.add(l + ".bn.running_mean", Tensor::zeros({out}, dtype), false);
    layer.running_var = store.add(l + ".bn.running_var", Tensor::full({out}, 1.0, dtype), false);
  }
  const int64_t last = widths[4];
  br.out_weight = store.add(name + ".out.weight",
                            reshape(xavier_uniform({outputs, last}, last, outputs, rng, dtype),
                                    {outputs, last, 1, 1}));
  br.out_bias = store.add(name + ".out.bias", Tensor::zeros({outputs}, dtype));
  return br;
}

void require_finite(const Tensor& t, const char* name) {
  if (!t.defined()) return;
  for (double v : t.to_vector()) {
    if (!std::isfinite(v)) throw Error(std::string("non-finite loss component: ") + name);
  }
}

// Column `i` of a [B, 4] box tensor as [B, 1].
Tensor col(const Tensor& boxes, int64_t i) { return slice(boxes, 1, i, i + 1); }

void require_positive_sizes(const Tensor& boxes, const char* what) {
  if (boxes.rank() != 2 || boxes.dim(1) != 4) {
    throw ShapeError(std::string(what) + ": boxes must be [B, 4], got " +
                     shape_str(boxes.shape()));
  }
  auto v = boxes.to_vector();
  for (size_t i = 0; i < v.size(); i += 4) {
    if (!(v[i + 2] > 0.0) || !(v[i + 3] > 0.0)) {
      throw Error(std::string(what) + ": degenerate box with non-positive size");
    }
  }
}

}  // namespace

HeadParams init_head(ParamStore& store, const std::string& prefix, int64_t d, int64_t channels,
                     Rng& rng, DType dtype) {
  if (channels < 8 || channels % 8 != 0) {
    throw Error("init_head: channel width must be a positive multiple of 8");
  }
  HeadParams h;
  h.score = init_branch(store, prefix + "score", d, channels, 1, rng, dtype);
  h.offset = init_branch(store, prefix + "offset", d, channels, 2, rng, dtype);
  h.size = init_branch(store, prefix + "size", d, channels, 2, rng, dtype);
  return h;
}

HeadMaps head_forward(const Tensor& search_tokens, int64_t grid_h, int64_t grid_w,
                      const HeadParams& head, bool train) {
  if (search_tokens.rank() != 3 || search_tokens.dim(1) != grid_h * grid_w) {
    throw ShapeError("head_forward: tokens " + shape_str(search_tokens.shape()) +
                     " do not form a " + std::to_string(grid_h) + "x" + std::to_string(grid_w) +
                     " grid");
  }
  const int64_t B = search_tokens.dim(0), d = search_tokens.dim(2);
  Tensor fmap = reshape(transpose(search_tokens, {0, 2, 1}), {B, d, grid_h, grid_w});
  return HeadMaps{head.score(fmap, train), head.offset(fmap, train), head.size(fmap, train)};
}

Decoded decode_box(const Tensor& score_map, const Tensor& offset_map, const Tensor& size_map,
                   int64_t b) {
  const int64_t H = score_map.dim(2), W = score_map.dim(3);
  if (score_map.dim(1) != 1 || offset_map.shape() != Shape{score_map.dim(0), 2, H, W} ||
      size_map.shape() != offset_map.shape()) {
    throw ShapeError("decode_box: inconsistent maps " + shape_str(score_map.shape()) + ", " +
                     shape_str(offset_map.shape()) + ", " + shape_str(size_map.shape()));
  }
  const std::vector<double> s = score_map.to_vector();
  const int64_t base = b * H * W;
  int64_t best = 0;
  for (int64_t i = 1; i < H * W; ++i) {
    if (s[base + i] > s[base + best]) best = i;
  }
  Decoded out;
  out.cell_x = best % W;
  out.cell_y = best / W;
  out.score = s[base + best];
  const int64_t plane = H * W;
  const double ox = offset_map.at(b * 2 * plane + best);
  const double oy = offset_map.at(b * 2 * plane + plane + best);
  out.box.cx = (static_cast<double>(out.cell_x) + ox) / static_cast<double>(W);
  out.box.cy = (static_cast<double>(out.cell_y) + oy) / static_cast<double>(H);
  out.box.w = size_map.at(b * 2 * plane + best);
  out.box.h = size_map.at(b * 2 * plane + plane + best);
  return out;
}

HannWindow HannWindow::create(int64_t grid_h, int64_t grid_w) {
  auto hann = [](int64_t M) {
    std::vector<double> v(M, 1.0);
    if (M > 1) {
      for (int64_t n = 0; n < M; ++n) {
        v[n] = 0.5 * (1.0 - std::cos(2.0 * M_PI * static_cast<double>(n) /
                                     static_cast<double>(M - 1)));
      }
    }
    return v;
  };
  HannWindow win;
  win.h = grid_h;
  win.w = grid_w;
  const std::vector<double> hy = hann(grid_h), hx = hann(grid_w);
  for (int64_t i = 0; i < grid_h; ++i)
    for (int64_t j = 0; j < grid_w; ++j) win.weights.push_back(hy[i] * hx[j]);
  return win;
}

Tensor hanning_penalize(const Tensor& score_map, const HannWindow& window) {
  if (score_map.rank() != 4 || score_map.dim(2) != window.h || score_map.dim(3) != window.w) {
    throw ShapeError("hanning_penalize: map " + shape_str(score_map.shape()) + " vs window [" +
                     std::to_string(window.h) + ", " + std::to_string(window.w) + "]");
  }
  return mul(score_map,
             Tensor::from_vector({window.h, window.w}, window.weights, score_map.dtype()));
}

GtMaps make_gt_maps(const Box& box, int64_t grid_h, int64_t grid_w) {
  GtMaps g;
  const double gx = box.cx * static_cast<double>(grid_w);
  const double gy = box.cy * static_cast<double>(grid_h);
  g.cell_x = std::clamp<int64_t>(static_cast<int64_t>(std::floor(gx)), 0, grid_w - 1);
  g.cell_y = std::clamp<int64_t>(static_cast<int64_t>(std::floor(gy)), 0, grid_h - 1);
  g.offset_x = gx - static_cast<double>(g.cell_x);
  g.offset_y = gy - static_cast<double>(g.cell_y);
  g.w = box.w;
  g.h = box.h;
  const double sigma =
      std::max(1.0, std::min(box.w * static_cast<double>(grid_w),
                             box.h * static_cast<double>(grid_h)) / 6.0);
  g.heat.resize(grid_h * grid_w);
  for (int64_t i = 0; i < grid_h; ++i) {
    for (int64_t j = 0; j < grid_w; ++j) {
      const double dy = static_cast<double>(i - g.cell_y), dx = static_cast<double>(j - g.cell_x);
      g.heat[i * grid_w + j] = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
    }
  }
  return g;
}

GtBatch make_gt_batch(const std::vector<Box>& boxes, int64_t grid_h, int64_t grid_w,
                      DType dtype) {
  const int64_t B = static_cast<int64_t>(boxes.size());
  const int64_t plane = grid_h * grid_w;
  std::vector<double> heat, onehot(B * plane, 0.0), cell, bx;
  for (int64_t b = 0; b < B; ++b) {
    GtMaps g = make_gt_maps(boxes[b], grid_h, grid_w);
    heat.insert(heat.end(), g.heat.begin(), g.heat.end());
    onehot[b * plane + g.cell_y * grid_w + g.cell_x] = 1.0;
    cell.push_back(static_cast<double>(g.cell_x) / static_cast<double>(grid_w));
    cell.push_back(static_cast<double>(g.cell_y) / static_cast<double>(grid_h));
    bx.insert(bx.end(), {boxes[b].cx, boxes[b].cy, boxes[b].w, boxes[b].h});
  }
  GtBatch gt;
  gt.heat = Tensor::from_vector({B, 1, grid_h, grid_w}, heat, dtype);
  gt.onehot = Tensor::from_vector({B, 1, grid_h, grid_w}, onehot, dtype);
  gt.cell = Tensor::from_vector({B, 2}, cell, dtype);
  gt.boxes = Tensor::from_vector({B, 4}, bx, dtype);
  gt.grid_h = grid_h;
  gt.grid_w = grid_w;
  return gt;
}

Tensor focal_loss(const Tensor& score_map, const Tensor& gt_heat) {
  if (score_map.shape() != gt_heat.shape()) {
    throw ShapeError("focal_loss: map " + shape_str(score_map.shape()) + " vs target " +
                     shape_str(gt_heat.shape()));
  }
  std::vector<double> heat = gt_heat.to_vector();
  std::vector<double> pos(heat.size()), neg_w(heat.size());
  double n_pos = 0.0;
  for (size_t i = 0; i < heat.size(); ++i) {
    const bool positive = heat[i] == 1.0;
    pos[i] = positive ? 1.0 : 0.0;
    neg_w[i] = positive ? 0.0 : std::pow(1.0 - heat[i], 4);
    n_pos += pos[i];
  }
  if (n_pos == 0.0) throw Error("focal_loss: target has no positive cell");
  const DType dt = score_map.dtype();
  const Tensor pos_t = Tensor::from_vector(score_map.shape(), pos, dt);
  const Tensor neg_t = Tensor::from_vector(score_map.shape(), neg_w, dt);
  const Tensor p = clamp(score_map, 1e-6, 1.0 - 1e-6);
  const Tensor q = add_scalar(neg(p), 1.0);  // 1 - p
  const Tensor pos_term = mul(pos_t, mul(mul(q, q), log(p)));
  const Tensor neg_term = mul(neg_t, mul(mul(p, p), log(q)));
  return scale(add(sum(pos_term), sum(neg_term)), -1.0 / n_pos);
}

Tensor giou_loss(const Tensor& pred, const Tensor& gt) {
  require_positive_sizes(pred, "giou_loss");
  require_positive_sizes(gt, "giou_loss");
  if (pred.shape() != gt.shape()) {
    throw ShapeError("giou_loss: " + shape_str(pred.shape()) + " vs " + shape_str(gt.shape()));
  }
  auto corners = [](const Tensor& b) {
    Tensor hw = scale(col(b, 2), 0.5), hh = scale(col(b, 3), 0.5);
    return std::array<Tensor, 4>{sub(col(b, 0), hw), sub(col(b, 1), hh), add(col(b, 0), hw),
                                 add(col(b, 1), hh)};
  };
  auto [ax1, ay1, ax2, ay2] = corners(pred);
  auto [bx1, by1, bx2, by2] = corners(gt);
  Tensor iw = relu(sub(minimum(ax2, bx2), maximum(ax1, bx1)));
  Tensor ih = relu(sub(minimum(ay2, by2), maximum(ay1, by1)));
  Tensor inter = mul(iw, ih);
  Tensor uni = sub(add(mul(col(pred, 2), col(pred, 3)), mul(col(gt, 2), col(gt, 3))), inter);
  Tensor enclose = mul(sub(maximum(ax2, bx2), minimum(ax1, bx1)),
                       sub(maximum(ay2, by2), minimum(ay1, by1)));
  Tensor giou = sub(div(inter, uni), div(sub(enclose, uni), enclose));
  return mean(add_scalar(neg(giou), 1.0));
}

Tensor l1_loss(const Tensor& pred, const Tensor& gt) {
  if (pred.shape() != gt.shape()) {
    throw ShapeError("l1_loss: " + shape_str(pred.shape()) + " vs " + shape_str(gt.shape()));
  }
  return mean(abs(sub(pred, gt)));
}

Tensor boxes_at_cells(const HeadMaps& maps, const GtBatch& gt) {
  const int64_t B = maps.offset.dim(0);
  auto at_cell = [&](const Tensor& m) {
    return reshape(sum(sum(mul(m, gt.onehot), 3), 2), {B, 2});
  };
  const Tensor inv_grid = Tensor::from_vector(
      {1, 2}, {1.0 / static_cast<double>(gt.grid_w), 1.0 / static_cast<double>(gt.grid_h)},
      maps.offset.dtype());
  Tensor centers = add(gt.cell, mul(at_cell(maps.offset), inv_grid));
  return concat({centers, at_cell(maps.size)}, 1);
}

PredLoss pred_loss(const HeadMaps& maps, const GtBatch& gt, const LossWeights& w) {
  PredLoss l;
  l.cls = focal_loss(maps.score, gt.heat);
  Tensor pred = boxes_at_cells(maps, gt);
  l.iou = giou_loss(pred, gt.boxes);
  l.l1 = l1_loss(pred, gt.boxes);
  require_finite(l.cls, "cls");
  require_finite(l.iou, "iou");
  require_finite(l.l1, "l1");
  l.total = pred_total(l.cls, l.iou, l.l1, w);
  return l;
}

Tensor pred_total(const Tensor& cls, const Tensor& iou, const Tensor& l1, const LossWeights& w) {
  return add(cls, add(scale(iou, w.lambda_iou), scale(l1, w.lambda_l1)));
}

Tensor overall_loss(const Tensor& pred, const Tensor& spar, const Tensor& vir,
                    const LossWeights& w) {
  require_finite(pred, "pred");
  require_finite(spar, "spar");
  require_finite(vir, "vir");
  Tensor total = pred;
  if (spar.defined()) total = add(total, scale(spar, w.gamma));
  if (vir.defined()) total = add(total, scale(vir, w.kappa));
  return total;
}

}  // namespace avtrack
