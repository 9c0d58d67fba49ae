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

#include "avtrack/params.h"

#include <cmath>

#include "avtrack/ops.h"

namespace avtrack {

Tensor ParamStore::add(const std::string& name, Tensor tensor, bool trainable) {
  if (contains(name)) throw Error("duplicate parameter name '" + name + "'");
  tensor.set_requires_grad(trainable);
  entries_.push_back(Entry{name, tensor, trainable});
  return tensor;
}

Tensor ParamStore::get(const std::string& name) const {
  for (const Entry& e : entries_) {
    if (e.name == name) return e.tensor;
  }
  throw Error("no parameter named '" + name + "'");
}

bool ParamStore::contains(const std::string& name) const {
  for (const Entry& e : entries_) {
    if (e.name == name) return true;
  }
  return false;
}

std::vector<Tensor> ParamStore::trainable() const {
  std::vector<Tensor> out;
  for (const Entry& e : entries_) {
    if (e.trainable) out.push_back(e.tensor);
  }
  return out;
}

int64_t ParamStore::count(const std::string& prefix) const {
  int64_t n = 0;
  for (const Entry& e : entries_) {
    if (e.trainable && e.name.compare(0, prefix.size(), prefix) == 0) n += e.tensor.numel();
  }
  return n;
}

void ParamStore::zero_grad() {
  for (Entry& e : entries_) e.tensor.zero_grad();
}

void ParamStore::set_frozen(bool frozen) {
  for (Entry& e : entries_) {
    if (e.trainable) e.tensor.set_requires_grad(!frozen);
  }
}

Tensor Linear::operator()(const Tensor& x) const { return add(matmul(x, weight), bias); }

Linear Linear::create(ParamStore& store, const std::string& name, int64_t in, int64_t out,
                      Rng& rng, DType dtype) {
  Linear l;
  l.weight = store.add(name + ".weight", xavier_uniform({in, out}, in, out, rng, dtype));
  l.bias = store.add(name + ".bias", Tensor::zeros({out}, dtype));
  return l;
}

Linear Linear::zeros(ParamStore& store, const std::string& name, int64_t in, int64_t out,
                     DType dtype) {
  Linear l;
  l.weight = store.add(name + ".weight", Tensor::zeros({in, out}, dtype));
  l.bias = store.add(name + ".bias", Tensor::zeros({out}, dtype));
  return l;
}

Tensor LayerNormParams::operator()(const Tensor& x) const {
  return layer_norm(x, -1, gamma, beta);
}

LayerNormParams LayerNormParams::create(ParamStore& store, const std::string& name, int64_t width,
                                        DType dtype) {
  LayerNormParams p;
  p.gamma = store.add(name + ".gamma", Tensor::full({width}, 1.0, dtype));
  p.beta = store.add(name + ".beta", Tensor::zeros({width}, dtype));
  return p;
}

Tensor xavier_uniform(Shape shape, int64_t fan_in, int64_t fan_out, Rng& rng, DType dtype) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> v(numel(shape));
  for (double& x : v) x = rng.uniform(-bound, bound);
  return Tensor::from_vector(std::move(shape), v, dtype);
}

Tensor normal_tensor(Shape shape, double stddev, Rng& rng, DType dtype) {
  std::vector<double> v(numel(shape));
  for (double& x : v) x = rng.normal(0.0, stddev);
  return Tensor::from_vector(std::move(shape), v, dtype);
}

}  // namespace avtrack
