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

#ifndef AVTRACK_GRADCHECK_H_
#define AVTRACK_GRADCHECK_H_

#include <cstdint>
#include <functional>

#include "avtrack/tensor.h"

namespace avtrack {

struct GradCheckReport {
  double max_rel_error = 0.0;
  int64_t worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Compares the tape gradient of a scalar map against central differences.
// Per component: |analytic - numeric| / max(|analytic|, |numeric|, 1e-12).
// x must be f64. Throws when f yields a non-finite value.
GradCheckReport finite_diff_report(const std::function<Tensor(const Tensor&)>& f,
                                   const Tensor& x, double step);
double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                         double step);

// Same check for a tensor captured by `loss` (typically a model parameter):
// the tensor's storage is perturbed in place and restored afterwards.
GradCheckReport finite_diff_report_inplace(const std::function<Tensor()>& loss, Tensor param,
                                           double step);

}  // namespace avtrack

#endif  // AVTRACK_GRADCHECK_H_
