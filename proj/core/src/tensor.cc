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

#include "avtrack/tensor.h"

#include <atomic>
#include <sstream>

#include "avtrack/tape.h"

namespace avtrack {

const char* dtype_name(DType dtype) { return dtype == DType::kF32 ? "f32" : "f64"; }

DType parse_dtype(const std::string& name) {
  if (name == "f32") return DType::kF32;
  if (name == "f64") return DType::kF64;
  throw Error("unknown dtype '" + name + "'");
}

int64_t numel(const Shape& shape) {
  int64_t n = 1;
  for (int64_t e : shape) {
    if (e <= 0) throw ShapeError("non-positive extent in shape " + shape_str(shape));
    n *= e;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor make_tensor(Shape shape, DType dtype) {
  auto impl = std::make_shared<TensorImpl>();
  const int64_t n = numel(shape);
  impl->shape = std::move(shape);
  impl->dtype = dtype;
  if (dtype == DType::kF32) {
    impl->data = Buffer(std::vector<float>(n, 0.0f));
  } else {
    impl->data = Buffer(std::vector<double>(n, 0.0));
  }
  return Tensor(std::move(impl));
}

Tensor Tensor::zeros(Shape shape, DType dtype) { return make_tensor(std::move(shape), dtype); }

Tensor Tensor::full(Shape shape, double value, DType dtype) {
  Tensor t = make_tensor(std::move(shape), dtype);
  dispatch(dtype, [&]<typename T>() {
    for (T& v : t.mutable_data<T>()) v = static_cast<T>(value);
  });
  return t;
}

Tensor Tensor::from_vector(Shape shape, const std::vector<double>& values, DType dtype) {
  if (static_cast<int64_t>(values.size()) != avtrack::numel(shape)) {
    throw ShapeError(std::to_string(values.size()) + " values do not fill shape " +
                     shape_str(shape));
  }
  Tensor t = make_tensor(std::move(shape), dtype);
  dispatch(dtype, [&]<typename T>() {
    auto out = t.mutable_data<T>();
    for (size_t i = 0; i < values.size(); ++i) out[i] = static_cast<T>(values[i]);
  });
  return t;
}

Tensor Tensor::scalar(double value, DType dtype) { return full({1}, value, dtype); }

int64_t Tensor::dim(int axis) const {
  const int r = rank();
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " +
                     shape_str(shape()));
  }
  return impl_->shape[a];
}

std::vector<double> Tensor::to_vector() const {
  return dispatch(dtype(), [&]<typename T>() {
    auto d = data<T>();
    return std::vector<double>(d.begin(), d.end());
  });
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return at(0);
}

double Tensor::at(int64_t flat_index) const {
  return dispatch(dtype(), [&]<typename T>() {
    return static_cast<double>(data<T>()[flat_index]);
  });
}

Tensor& Tensor::set_requires_grad(bool value) {
  impl_->requires_grad = value;
  if (!value) impl_->grad.reset();
  return *this;
}

Tensor Tensor::grad() const {
  Tensor out = make_tensor(shape(), dtype());
  if (impl_->grad) out.impl_->data = *impl_->grad;
  return out;
}

void Tensor::zero_grad() { impl_->grad.reset(); }

Tensor Tensor::detach() const {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = impl_->shape;
  impl->dtype = impl_->dtype;
  impl->data = impl_->data;
  return Tensor(std::move(impl));
}

Tensor Tensor::to(DType target) const {
  if (target == dtype()) return detach();
  Tensor out = make_tensor(shape(), target);
  dispatch(dtype(), [&]<typename S>() {
    auto src = data<S>();
    dispatch(target, [&]<typename D>() {
      auto dst = out.mutable_data<D>();
      for (size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<D>(src[i]);
    });
  });
  return out;
}

}  // namespace avtrack
