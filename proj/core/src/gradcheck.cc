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

#include "avtrack/gradcheck.h"

#include <algorithm>
#include <cmath>

#include "avtrack/tape.h"

namespace avtrack {
namespace {

double eval_scalar(const std::function<Tensor()>& loss) {
  NoGradGuard no_grad;
  const Tensor v = loss();
  if (v.numel() != 1) throw ShapeError("gradient check needs a scalar map, got " + shape_str(v.shape()));
  const double value = v.item();
  if (!std::isfinite(value)) throw Error("gradient check: map produced a non-finite value");
  return value;
}

void accumulate(GradCheckReport& report, int64_t i, double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-12});
  const double rel = std::abs(analytic - numeric) / denom;
  if (rel > report.max_rel_error || report.worst_index < 0) {
    report.max_rel_error = rel;
    report.worst_index = i;
    report.analytic = analytic;
    report.numeric = numeric;
  }
}

}  // namespace

GradCheckReport finite_diff_report_inplace(const std::function<Tensor()>& loss, Tensor param,
                                           double step) {
  if (param.dtype() != DType::kF64) throw Error("gradient check requires an f64 tensor");
  if (!(step > 0.0)) throw Error("gradient check step must be positive");
  const bool had_flag = param.requires_grad();
  param.set_requires_grad(true);
  param.zero_grad();
  const double value = value_and_grad(loss);
  if (!std::isfinite(value)) throw Error("gradient check: map produced a non-finite value");
  const std::vector<double> analytic = param.grad().to_vector();
  param.zero_grad();

  GradCheckReport report;
  auto data = param.mutable_data<double>();
  for (int64_t i = 0; i < param.numel(); ++i) {
    const double saved = data[i];
    data[i] = saved + step;
    const double plus = eval_scalar(loss);
    data[i] = saved - step;
    const double minus = eval_scalar(loss);
    data[i] = saved;
    accumulate(report, i, analytic[i], (plus - minus) / (2.0 * step));
  }
  param.set_requires_grad(had_flag);
  return report;
}

GradCheckReport finite_diff_report(const std::function<Tensor(const Tensor&)>& f,
                                   const Tensor& x, double step) {
  Tensor work = x.detach();
  return finite_diff_report_inplace([&]() { return f(work); }, work, step);
}

double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                         double step) {
  return finite_diff_report(f, x, step).max_rel_error;
}

}  // namespace avtrack
