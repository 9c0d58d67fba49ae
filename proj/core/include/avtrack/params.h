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

// Named parameter storage and the small affine/normalization layers the
// models are built from.

#ifndef AVTRACK_PARAMS_H_
#define AVTRACK_PARAMS_H_

#include <cstdint>
#include <string>
#include <vector>

#include "avtrack/rng.h"
#include "avtrack/tensor.h"

namespace avtrack {

// Ordered name -> tensor table. Trainable entries require gradients;
// buffers (batch-norm running statistics) do not.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor tensor;
    bool trainable;
  };

  Tensor add(const std::string& name, Tensor tensor, bool trainable = true);
  Tensor get(const std::string& name) const;
  bool contains(const std::string& name) const;

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Tensor> trainable() const;
  // Number of scalar values in trainable entries whose name starts with
  // `prefix` (all trainable entries for an empty prefix).
  int64_t count(const std::string& prefix = "") const;

  void zero_grad();
  // Turns every trainable entry's requires_grad flag on or off.
  void set_frozen(bool frozen);

 private:
  std::vector<Entry> entries_;
};

struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]

  Tensor operator()(const Tensor& x) const;
  static Linear create(ParamStore& store, const std::string& name, int64_t in, int64_t out,
                       Rng& rng, DType dtype);
  // All-zero weight and bias.
  static Linear zeros(ParamStore& store, const std::string& name, int64_t in, int64_t out,
                      DType dtype);
};

struct LayerNormParams {
  Tensor gamma;
  Tensor beta;

  Tensor operator()(const Tensor& x) const;
  static LayerNormParams create(ParamStore& store, const std::string& name, int64_t width,
                                DType dtype);
};

// Xavier-uniform values for a [fan_in, fan_out] matrix.
Tensor xavier_uniform(Shape shape, int64_t fan_in, int64_t fan_out, Rng& rng, DType dtype);
Tensor normal_tensor(Shape shape, double stddev, Rng& rng, DType dtype);

}  // namespace avtrack

#endif  // AVTRACK_PARAMS_H_
