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

// Differentiable primitives. Every function computes its forward value
// eagerly and, when a tape is current and an input requires a gradient,
// records a vector-Jacobian product on that tape.
//
// Scalars are tensors of shape [1]. Elementwise binary primitives broadcast
// with numpy rules.

#ifndef AVTRACK_OPS_H_
#define AVTRACK_OPS_H_

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "avtrack/tensor.h"

namespace avtrack {

inline constexpr double kLayerNormEps = 1e-5;
inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

// Elementwise, broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor minimum(const Tensor& a, const Tensor& b);
Tensor maximum(const Tensor& a, const Tensor& b);
// Picks a where cond != 0, else b. cond is a constant broadcastable to a.
Tensor where(const Tensor& cond, const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
inline Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sigmoid(const Tensor& a);
// max(z, 0) + log1p(exp(-|z|)); safe for unbounded inputs.
Tensor softplus(const Tensor& a);
// tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
Tensor gelu(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor clamp(const Tensor& a, double lo, double hi);

Tensor reshape(const Tensor& a, Shape shape);
// General axis permutation; out.shape[i] = a.shape[perm[i]].
Tensor transpose(const Tensor& a, std::vector<int> perm);
// Swaps the two trailing axes.
Tensor transpose(const Tensor& a);
Tensor slice(const Tensor& a, int axis, int64_t start, int64_t stop);
Tensor concat(const std::vector<Tensor>& parts, int axis);

// Full reductions return shape [1].
Tensor sum(const Tensor& a);
Tensor sum(const Tensor& a, int axis, bool keepdim = false);
Tensor mean(const Tensor& a);
Tensor mean(const Tensor& a, int axis, bool keepdim = false);

// a: [..., m, k]. b: [k, n] (shared across the leading axes of a) or
// [..., k, n] with leading axes equal to those of a.
Tensor matmul(const Tensor& a, const Tensor& b);

// softmax(a / temperature) along axis.
Tensor softmax(const Tensor& a, int axis, double temperature = 1.0);

// Normalizes along one axis. gamma/beta are either both undefined
// (affine off) or both shaped [a.dim(axis)].
Tensor layer_norm(const Tensor& a, int axis, const Tensor& gamma, const Tensor& beta,
                  double eps = kLayerNormEps);

// x: [B, Cin, H, W]; weight: [Cout, Cin, kh, kw]; bias: [Cout] or undefined.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride,
              int padding);

// x: [B, C, H, W]. In train mode normalizes with batch statistics and
// updates running_mean / running_var in place (unbiased variance); in eval
// mode normalizes with the running statistics.
Tensor batch_norm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                    Tensor running_mean, Tensor running_var, bool train,
                    double eps = kBatchNormEps, double momentum = kBatchNormMomentum);

// field: [B, H, W, C] (channels last). grid: [B, Ho, Wo, 2] holding (x, y)
// in normalized [0, 1] field coordinates, align-corners-false: source index
// u = x * W - 0.5, clamped to the border. Differentiable in field only.
Tensor bilinear_resample(const Tensor& field, const Tensor& grid);

using AttrValue = std::variant<int64_t, double, bool, std::vector<int64_t>>;
using Attrs = std::map<std::string, AttrValue, std::less<>>;

// Name-dispatched entry point over every primitive above. Kinds use
// kebab-case: "add", "scalar-mul", "bilinear-resample", ...
Tensor apply_primitive(std::string_view kind, const std::vector<Tensor>& inputs,
                       const Attrs& attrs = {});
std::vector<std::string> primitive_kinds();

}  // namespace avtrack

#endif  // AVTRACK_OPS_H_
