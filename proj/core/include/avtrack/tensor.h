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

#ifndef AVTRACK_TENSOR_H_
#define AVTRACK_TENSOR_H_

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace avtrack {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

enum class DType { kF32, kF64 };

const char* dtype_name(DType dtype);
DType parse_dtype(const std::string& name);

using Shape = std::vector<int64_t>;

int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

using Buffer = std::variant<std::vector<float>, std::vector<double>>;

class Tape;

struct TensorImpl {
  Shape shape;
  DType dtype = DType::kF64;
  Buffer data;
  bool requires_grad = false;
  std::optional<Buffer> grad;
  // Set when the tensor is the output of a recorded primitive.
  const Tape* tape = nullptr;
  int64_t node = -1;
};

// Calls `fn.template operator()<T>()` with T = float or double.
template <class Fn>
decltype(auto) dispatch(DType dtype, Fn&& fn) {
  if (dtype == DType::kF32) return fn.template operator()<float>();
  return fn.template operator()<double>();
}

template <class T>
constexpr DType dtype_of() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return std::is_same_v<T, float> ? DType::kF32 : DType::kF64;
}

// Reference-counted handle to a dense row-major array. Copies share storage.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, DType dtype = DType::kF64);
  static Tensor full(Shape shape, double value, DType dtype = DType::kF64);
  static Tensor from_vector(Shape shape, const std::vector<double>& values,
                            DType dtype = DType::kF64);
  static Tensor scalar(double value, DType dtype = DType::kF64);
  template <class T>
  static Tensor from_buffer(Shape shape, std::vector<T> values);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int rank() const { return static_cast<int>(impl_->shape.size()); }
  // Negative axes count from the back.
  int64_t dim(int axis) const;
  int64_t numel() const { return avtrack::numel(impl_->shape); }
  DType dtype() const { return impl_->dtype; }

  template <class T>
  std::span<const T> data() const;
  // Only for parameter updates and freshly created outputs.
  template <class T>
  std::span<T> mutable_data();

  std::vector<double> to_vector() const;
  double item() const;
  double at(int64_t flat_index) const;

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool value);

  bool has_grad() const { return impl_->grad.has_value(); }
  // Gradient as a detached tensor; zeros when no gradient has accumulated.
  Tensor grad() const;
  void zero_grad();
  template <class T>
  std::span<T> grad_data();

  // New storage, no gradient, no tape link.
  Tensor detach() const;
  Tensor to(DType dtype) const;

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }
  TensorImpl* impl() const { return impl_.get(); }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<TensorImpl> impl_;

  friend Tensor make_tensor(Shape shape, DType dtype);
};

// Uninitialized-to-zero output tensor.
Tensor make_tensor(Shape shape, DType dtype);

template <class T>
std::span<T> buffer_span(Buffer& buffer) {
  return std::span<T>(std::get<std::vector<T>>(buffer));
}

template <class T>
std::span<const T> Tensor::data() const {
  if (dtype_of<T>() != impl_->dtype) {
    throw Error(std::string("dtype mismatch: tensor is ") + dtype_name(impl_->dtype));
  }
  return std::span<const T>(std::get<std::vector<T>>(impl_->data));
}

template <class T>
std::span<T> Tensor::mutable_data() {
  if (dtype_of<T>() != impl_->dtype) {
    throw Error(std::string("dtype mismatch: tensor is ") + dtype_name(impl_->dtype));
  }
  return buffer_span<T>(impl_->data);
}

template <class T>
std::span<T> Tensor::grad_data() {
  if (!impl_->grad) impl_->grad = Buffer(std::vector<T>(numel(), T(0)));
  return buffer_span<T>(*impl_->grad);
}

template <class T>
Tensor Tensor::from_buffer(Shape shape, std::vector<T> values) {
  if (static_cast<int64_t>(values.size()) != avtrack::numel(shape)) {
    throw ShapeError("buffer of " + std::to_string(values.size()) +
                     " values does not fill shape " + shape_str(shape));
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->dtype = dtype_of<T>();
  impl->data = Buffer(std::move(values));
  return Tensor(std::move(impl));
}

}  // namespace avtrack

#endif  // AVTRACK_TENSOR_H_
