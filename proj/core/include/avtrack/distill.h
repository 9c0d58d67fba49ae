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

// Feature distillation from an ensemble of frozen teachers.

#ifndef AVTRACK_DISTILL_H_
#define AVTRACK_DISTILL_H_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "avtrack/backbone.h"
#include "avtrack/mi.h"
#include "avtrack/tensor.h"

namespace avtrack {

inline constexpr double kDefaultTau = 2.0;

// Elementwise mean of identically shaped features.
Tensor aggregate_features(const std::vector<Tensor>& features);

// Temperature softmax over the last (embedding) axis.
Tensor soften(const Tensor& features, double tau);

enum class MdMode { kJsd, kMse };
MdMode parse_md_mode(const std::string& name);
const char* md_mode_name(MdMode mode);

// Softened [B, K, d] features. kJsd: -jsd bound between token-pooled teacher
// and student features with deranged negatives. kMse: mean squared gap.
Tensor md_loss(const Tensor& teacher_soft, const Tensor& student_soft, const Critic& critic,
               uint64_t seed, MdMode mode);

// Teacher config with N halved (or replaced by `blocks_override`) and n_f
// rescaled proportionally, kept in [1, N - 1].
BackboneConfig build_student(const BackboneConfig& teacher,
                             std::optional<int64_t> blocks_override = std::nullopt);

}  // namespace avtrack

#endif  // AVTRACK_DISTILL_H_
