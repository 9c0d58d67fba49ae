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

#ifndef AVTRACK_OPTIM_H_
#define AVTRACK_OPTIM_H_

#include <cstdint>
#include <vector>

#include "avtrack/tensor.h"

namespace avtrack {

struct AdamWOptions {
  double lr = 4e-5;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Total step budget; the learning rate drops by `decay_factor` once
  // `decay_at` of it has elapsed. Zero disables the schedule.
  int64_t total_steps = 0;
  double decay_at = 0.8;
  double decay_factor = 0.1;
};

// Decoupled weight decay Adam. Parameters without a gradient are skipped.
class AdamW {
 public:
  AdamW(std::vector<Tensor> params, AdamWOptions options);

  void step();
  void zero_grad();
  double current_lr() const;
  int64_t steps_taken() const { return t_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  AdamWOptions opt_;
  int64_t t_ = 0;
};

}  // namespace avtrack

#endif  // AVTRACK_OPTIM_H_
