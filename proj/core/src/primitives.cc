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

#include <functional>
#include <string>
#include <unordered_map>

#include "avtrack/ops.h"

namespace avtrack {
namespace {

const AttrValue* find_attr(const Attrs& attrs, std::string_view name) {
  auto it = attrs.find(name);
  return it == attrs.end() ? nullptr : &it->second;
}

int64_t attr_int(const Attrs& attrs, std::string_view name, std::optional<int64_t> fallback = {}) {
  if (const AttrValue* v = find_attr(attrs, name)) {
    if (auto* i = std::get_if<int64_t>(v)) return *i;
    throw Error("attribute '" + std::string(name) + "' must be an integer");
  }
  if (!fallback) throw Error("missing attribute '" + std::string(name) + "'");
  return *fallback;
}

double attr_double(const Attrs& attrs, std::string_view name, std::optional<double> fallback = {}) {
  if (const AttrValue* v = find_attr(attrs, name)) {
    if (auto* d = std::get_if<double>(v)) return *d;
    if (auto* i = std::get_if<int64_t>(v)) return static_cast<double>(*i);
    throw Error("attribute '" + std::string(name) + "' must be a number");
  }
  if (!fallback) throw Error("missing attribute '" + std::string(name) + "'");
  return *fallback;
}

bool attr_bool(const Attrs& attrs, std::string_view name, bool fallback) {
  if (const AttrValue* v = find_attr(attrs, name)) {
    if (auto* b = std::get_if<bool>(v)) return *b;
    throw Error("attribute '" + std::string(name) + "' must be a boolean");
  }
  return fallback;
}

std::optional<std::vector<int64_t>> attr_ints(const Attrs& attrs, std::string_view name) {
  if (const AttrValue* v = find_attr(attrs, name)) {
    if (auto* l = std::get_if<std::vector<int64_t>>(v)) return *l;
    throw Error("attribute '" + std::string(name) + "' must be an integer list");
  }
  return std::nullopt;
}

using Impl = std::function<Tensor(const std::vector<Tensor>&, const Attrs&)>;

struct Entry {
  size_t min_inputs;
  size_t max_inputs;
  Impl fn;
};

const std::unordered_map<std::string, Entry>& registry() {
  using V = std::vector<Tensor>;
  static const std::unordered_map<std::string, Entry> table = {
      {"add", {2, 2, [](const V& in, const Attrs&) { return add(in[0], in[1]); }}},
      {"sub", {2, 2, [](const V& in, const Attrs&) { return sub(in[0], in[1]); }}},
      {"mul", {2, 2, [](const V& in, const Attrs&) { return mul(in[0], in[1]); }}},
      {"div", {2, 2, [](const V& in, const Attrs&) { return div(in[0], in[1]); }}},
      {"minimum", {2, 2, [](const V& in, const Attrs&) { return minimum(in[0], in[1]); }}},
      {"maximum", {2, 2, [](const V& in, const Attrs&) { return maximum(in[0], in[1]); }}},
      {"where", {3, 3, [](const V& in, const Attrs&) { return where(in[0], in[1], in[2]); }}},
      {"scalar-mul",
       {1, 1, [](const V& in, const Attrs& a) { return scale(in[0], attr_double(a, "scalar")); }}},
      {"add-scalar",
       {1, 1,
        [](const V& in, const Attrs& a) { return add_scalar(in[0], attr_double(a, "scalar")); }}},
      {"exp", {1, 1, [](const V& in, const Attrs&) { return exp(in[0]); }}},
      {"log", {1, 1, [](const V& in, const Attrs&) { return log(in[0]); }}},
      {"sigmoid", {1, 1, [](const V& in, const Attrs&) { return sigmoid(in[0]); }}},
      {"softplus", {1, 1, [](const V& in, const Attrs&) { return softplus(in[0]); }}},
      {"gelu", {1, 1, [](const V& in, const Attrs&) { return gelu(in[0]); }}},
      {"relu", {1, 1, [](const V& in, const Attrs&) { return relu(in[0]); }}},
      {"abs", {1, 1, [](const V& in, const Attrs&) { return abs(in[0]); }}},
      {"clamp",
       {1, 1,
        [](const V& in, const Attrs& a) {
          return clamp(in[0], attr_double(a, "lo"), attr_double(a, "hi"));
        }}},
      {"reshape",
       {1, 1,
        [](const V& in, const Attrs& a) {
          auto shape = attr_ints(a, "shape");
          if (!shape) throw Error("missing attribute 'shape'");
          return reshape(in[0], *shape);
        }}},
      {"transpose",
       {1, 1,
        [](const V& in, const Attrs& a) {
          auto perm = attr_ints(a, "perm");
          if (!perm) return transpose(in[0]);
          return transpose(in[0], std::vector<int>(perm->begin(), perm->end()));
        }}},
      {"slice",
       {1, 1,
        [](const V& in, const Attrs& a) {
          return slice(in[0], static_cast<int>(attr_int(a, "axis")), attr_int(a, "start"),
                       attr_int(a, "stop"));
        }}},
      {"concat",
       {1, SIZE_MAX,
        [](const V& in, const Attrs& a) {
          return concat(in, static_cast<int>(attr_int(a, "axis", 0)));
        }}},
      {"sum",
       {1, 1,
        [](const V& in, const Attrs& a) {
          if (find_attr(a, "axis") == nullptr) return sum(in[0]);
          return sum(in[0], static_cast<int>(attr_int(a, "axis")), attr_bool(a, "keepdim", false));
        }}},
      {"mean",
       {1, 1,
        [](const V& in, const Attrs& a) {
          if (find_attr(a, "axis") == nullptr) return mean(in[0]);
          return mean(in[0], static_cast<int>(attr_int(a, "axis")),
                      attr_bool(a, "keepdim", false));
        }}},
      {"matmul", {2, 2, [](const V& in, const Attrs&) { return matmul(in[0], in[1]); }}},
      {"softmax",
       {1, 1,
        [](const V& in, const Attrs& a) {
          return softmax(in[0], static_cast<int>(attr_int(a, "axis", -1)),
                         attr_double(a, "temperature", 1.0));
        }}},
      {"layernorm",
       {1, 3,
        [](const V& in, const Attrs& a) {
          const bool affine = attr_bool(a, "affine", in.size() == 3);
          if (affine && in.size() != 3) throw Error("layernorm: affine requires gamma and beta");
          return layer_norm(in[0], static_cast<int>(attr_int(a, "axis", -1)),
                            affine ? in[1] : Tensor(), affine ? in[2] : Tensor(),
                            attr_double(a, "eps", kLayerNormEps));
        }}},
      {"conv2d",
       {2, 3,
        [](const V& in, const Attrs& a) {
          return conv2d(in[0], in[1], in.size() == 3 ? in[2] : Tensor(),
                        static_cast<int>(attr_int(a, "stride", 1)),
                        static_cast<int>(attr_int(a, "padding", 0)));
        }}},
      {"batchnorm2d",
       {5, 5,
        [](const V& in, const Attrs& a) {
          return batch_norm2d(in[0], in[1], in[2], in[3], in[4], attr_bool(a, "train", true),
                              attr_double(a, "eps", kBatchNormEps),
                              attr_double(a, "momentum", kBatchNormMomentum));
        }}},
      {"bilinear-resample",
       {2, 2, [](const V& in, const Attrs&) { return bilinear_resample(in[0], in[1]); }}},
  };
  return table;
}

}  // namespace

Tensor apply_primitive(std::string_view kind, const std::vector<Tensor>& inputs,
                       const Attrs& attrs) {
  const auto& table = registry();
  auto it = table.find(std::string(kind));
  if (it == table.end()) throw Error("unknown primitive '" + std::string(kind) + "'");
  const Entry& e = it->second;
  if (inputs.size() < e.min_inputs || inputs.size() > e.max_inputs) {
    throw Error("primitive '" + std::string(kind) + "' got " + std::to_string(inputs.size()) +
                " inputs");
  }
  for (const Tensor& t : inputs) {
    if (!t.defined()) throw Error("primitive '" + std::string(kind) + "' got a null input");
    if (t.dtype() != inputs.front().dtype()) {
      throw Error("primitive '" + std::string(kind) + "': mixed dtypes across inputs");
    }
  }
  return e.fn(inputs, attrs);
}

std::vector<std::string> primitive_kinds() {
  std::vector<std::string> names;
  for (const auto& [name, entry] : registry()) names.push_back(name);
  std::sort(names.begin(), names.end());
  return names;
}

}  // namespace avtrack
