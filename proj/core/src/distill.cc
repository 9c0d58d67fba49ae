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

#include "avtrack/distill.h"

#include <algorithm>

#include "avtrack/ops.h"

namespace avtrack {

Tensor aggregate_features(const std::vector<Tensor>& features) {
  if (features.empty()) throw Error("aggregate_features: no teacher features");
  for (const Tensor& f : features) {
    if (f.shape() != features[0].shape()) {
      throw ShapeError("aggregate_features: teacher features " + shape_str(features[0].shape()) +
                       " and " + shape_str(f.shape()) + " differ");
    }
  }
  // Running mean: m_k = m_{k-1} + (F_k - m_{k-1}) / k, exact for equal inputs.
  Tensor m = features[0];
  for (size_t i = 1; i < features.size(); ++i)
    m = add(m, scale(sub(features[i], m), 1.0 / static_cast<double>(i + 1)));
  return m;
}

Tensor soften(const Tensor& features, double tau) {
  if (!(tau > 0.0)) throw Error("soften: temperature must be positive");
  return softmax(features, -1, tau);
}

MdMode parse_md_mode(const std::string& name) {
  if (name == "jsd") return MdMode::kJsd;
  if (name == "mse") return MdMode::kMse;
  throw Error("unknown md mode '" + name + "' (expected jsd or mse)");
}

const char* md_mode_name(MdMode mode) { return mode == MdMode::kJsd ? "jsd" : "mse"; }

Tensor md_loss(const Tensor& teacher_soft, const Tensor& student_soft, const Critic& critic,
               uint64_t seed, MdMode mode) {
  if (teacher_soft.shape() != student_soft.shape()) {
    throw ShapeError("md_loss: teacher " + shape_str(teacher_soft.shape()) + " vs student " +
                     shape_str(student_soft.shape()));
  }
  if (mode == MdMode::kMse) {
    Tensor gap = sub(student_soft, teacher_soft);
    return mean(mul(gap, gap));
  }
  PairBatch joint{mean(teacher_soft, 1), mean(student_soft, 1)};
  return neg(jsd_mi_lower_bound(joint, shuffle_negatives(joint, seed), critic));
}

BackboneConfig build_student(const BackboneConfig& teacher, std::optional<int64_t> blocks_override) {
  teacher.validate();
  BackboneConfig s = teacher;
  if (blocks_override) {
    if (*blocks_override < 2 || *blocks_override > teacher.N) {
      throw Error("build_student: block count " + std::to_string(*blocks_override) +
                  " outside [2, " + std::to_string(teacher.N) + "]");
    }
    s.N = *blocks_override;
  } else {
    s.N = std::max<int64_t>(2, teacher.N / 2);
  }
  s.n_f = std::clamp<int64_t>(teacher.n_f * s.N / teacher.N, 1, s.N - 1);
  s.validate();
  return s;
}

}  // namespace avtrack
