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

#include "avtrack/optim.h"

#include <cmath>

namespace avtrack {

AdamW::AdamW(std::vector<Tensor> params, AdamWOptions options)
    : params_(std::move(params)), opt_(options) {
  for (const Tensor& p : params_) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

double AdamW::current_lr() const {
  if (opt_.total_steps > 0 &&
      static_cast<double>(t_) >= opt_.decay_at * static_cast<double>(opt_.total_steps)) {
    return opt_.lr * opt_.decay_factor;
  }
  return opt_.lr;
}

void AdamW::step() {
  const double lr = current_lr();
  ++t_;
  const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    if (!p.has_grad()) continue;
    std::vector<double>& m = m_[i];
    std::vector<double>& v = v_[i];
    dispatch(p.dtype(), [&]<typename T>() {
      auto w = p.mutable_data<T>();
      auto g = p.grad_data<T>();
      for (size_t k = 0; k < w.size(); ++k) {
        const double gk = static_cast<double>(g[k]);
        m[k] = opt_.beta1 * m[k] + (1.0 - opt_.beta1) * gk;
        v[k] = opt_.beta2 * v[k] + (1.0 - opt_.beta2) * gk * gk;
        const double update = (m[k] / c1) / (std::sqrt(v[k] / c2) + opt_.eps);
        const double wk = static_cast<double>(w[k]);
        w[k] = static_cast<T>(wk - lr * (update + opt_.weight_decay * wk));
      }
    });
  }
}

void AdamW::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

}  // namespace avtrack
