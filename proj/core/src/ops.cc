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

#include "avtrack/ops.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "avtrack/tape.h"
#include "kernels.h"

namespace avtrack {
namespace {

template <class T>
std::span<T> grad_of(const Tensor& t) {
  TensorImpl* impl = t.impl();
  if (!impl->grad) impl->grad = Buffer(std::vector<T>(t.numel(), T(0)));
  return buffer_span<T>(*impl->grad);
}

template <class T>
std::span<const T> out_grad(const Tensor& t) {
  return std::span<const T>(std::get<std::vector<T>>(*t.impl()->grad));
}

bool wants_grad(const Tensor& t) { return t.defined() && t.requires_grad(); }

bool should_record(std::initializer_list<Tensor> inputs) {
  if (Tape::current() == nullptr) return false;
  for (const Tensor& t : inputs) {
    if (wants_grad(t)) return true;
  }
  return false;
}

void record(std::string kind, std::vector<Tensor> inputs, const Tensor& out,
            std::function<void()> vjp) {
  Tape::current()->record(std::move(kind), std::move(inputs), out, std::move(vjp));
}

void check_dtypes(const char* kind, std::initializer_list<Tensor> inputs) {
  std::optional<DType> dt;
  for (const Tensor& t : inputs) {
    if (!t.defined()) continue;
    if (dt && *dt != t.dtype()) {
      throw Error(std::string(kind) + ": mixed dtypes across inputs");
    }
    dt = t.dtype();
  }
}

int norm_axis(int axis, int rank, const char* kind) {
  const int a = axis < 0 ? axis + rank : axis;
  if (a < 0 || a >= rank) {
    throw ShapeError(std::string(kind) + ": axis " + std::to_string(axis) +
                     " out of range for rank " + std::to_string(rank));
  }
  return a;
}

// [outer, n, inner] framing of a tensor around one axis.
struct AxisFrame {
  int64_t outer = 1, n = 1, inner = 1;
};

AxisFrame frame_axis(const Shape& s, int axis) {
  AxisFrame f;
  for (int i = 0; i < axis; ++i) f.outer *= s[i];
  f.n = s[axis];
  for (size_t i = axis + 1; i < s.size(); ++i) f.inner *= s[i];
  return f;
}

// ---------------------------------------------------------------------------
// Broadcasting.

struct Broadcast {
  Shape out;
  std::vector<int64_t> sa, sb;
  bool same = false;
};

Broadcast plan_broadcast(const Shape& a, const Shape& b, const char* kind) {
  Broadcast p;
  if (a == b) {
    p.out = a;
    p.same = true;
    return p;
  }
  const size_t r = std::max(a.size(), b.size());
  Shape pa(r, 1), pb(r, 1);
  std::copy(a.begin(), a.end(), pa.begin() + (r - a.size()));
  std::copy(b.begin(), b.end(), pb.begin() + (r - b.size()));
  p.out.resize(r);
  for (size_t i = 0; i < r; ++i) {
    if (pa[i] == pb[i] || pb[i] == 1) {
      p.out[i] = pa[i];
    } else if (pa[i] == 1) {
      p.out[i] = pb[i];
    } else {
      throw ShapeError(std::string(kind) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
                       " do not broadcast");
    }
  }
  auto strides = [&](const Shape& ps) {
    std::vector<int64_t> st(r, 0);
    int64_t acc = 1;
    for (size_t k = r; k-- > 0;) {
      st[k] = ps[k] == 1 ? 0 : acc;
      acc *= ps[k];
    }
    return st;
  };
  p.sa = strides(pa);
  p.sb = strides(pb);
  return p;
}

template <class Fn>
void broadcast_loop(const Broadcast& p, Fn&& fn) {
  const int64_t total = numel(p.out);
  if (p.same) {
    for (int64_t i = 0; i < total; ++i) fn(i, i, i);
    return;
  }
  const int r = static_cast<int>(p.out.size());
  const int64_t inner = p.out[r - 1];
  const int64_t sa_in = p.sa[r - 1], sb_in = p.sb[r - 1];
  const int64_t outer = total / inner;
  std::vector<int64_t> idx(r, 0);
  int64_t ia = 0, ib = 0;
  for (int64_t o = 0; o < outer; ++o) {
    const int64_t base = o * inner;
    for (int64_t j = 0; j < inner; ++j) fn(base + j, ia + j * sa_in, ib + j * sb_in);
    for (int d = r - 2; d >= 0; --d) {
      ++idx[d];
      ia += p.sa[d];
      ib += p.sb[d];
      if (idx[d] < p.out[d]) break;
      ia -= p.sa[d] * p.out[d];
      ib -= p.sb[d] * p.out[d];
      idx[d] = 0;
    }
  }
}

// f(x, y) forward; da(x, y, z) and db(x, y, z) partial derivatives.
template <class F, class DA, class DB>
Tensor binary_op(const char* kind, const Tensor& a, const Tensor& b, F f, DA da, DB db) {
  check_dtypes(kind, {a, b});
  const Broadcast plan = plan_broadcast(a.shape(), b.shape(), kind);
  Tensor out = make_tensor(plan.out, a.dtype());
  dispatch(a.dtype(), [&]<typename T>() {
    auto x = a.data<T>();
    auto y = b.data<T>();
    auto z = out.mutable_data<T>();
    broadcast_loop(plan, [&](int64_t io, int64_t ia, int64_t ib) { z[io] = f(x[ia], y[ib]); });
  });
  if (should_record({a, b})) {
    record(kind, {a, b}, out, [a, b, out, plan, da, db]() {
      dispatch(a.dtype(), [&]<typename T>() {
        auto x = a.data<T>();
        auto y = b.data<T>();
        auto z = out.data<T>();
        auto g = out_grad<T>(out);
        if (wants_grad(a)) {
          auto ga = grad_of<T>(a);
          broadcast_loop(plan, [&](int64_t io, int64_t ia, int64_t ib) {
            ga[ia] += g[io] * da(x[ia], y[ib], z[io]);
          });
        }
        if (wants_grad(b)) {
          auto gb = grad_of<T>(b);
          broadcast_loop(plan, [&](int64_t io, int64_t ia, int64_t ib) {
            gb[ib] += g[io] * db(x[ia], y[ib], z[io]);
          });
        }
      });
    });
  }
  return out;
}

// f(x) forward; df(x, y) derivative given input and output.
template <class F, class DF>
Tensor unary_op(const char* kind, const Tensor& a, F f, DF df) {
  Tensor out = make_tensor(a.shape(), a.dtype());
  dispatch(a.dtype(), [&]<typename T>() {
    auto x = a.data<T>();
    auto y = out.mutable_data<T>();
    for (size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  });
  if (should_record({a})) {
    record(kind, {a}, out, [a, out, df]() {
      dispatch(a.dtype(), [&]<typename T>() {
        auto x = a.data<T>();
        auto y = out.data<T>();
        auto g = out_grad<T>(out);
        auto ga = grad_of<T>(a);
        for (size_t i = 0; i < x.size(); ++i) ga[i] += g[i] * df(x[i], y[i]);
      });
    });
  }
  return out;
}

template <class T>
T stable_sigmoid(T z) {
  if (z >= T(0)) return T(1) / (T(1) + std::exp(-z));
  const T e = std::exp(z);
  return e / (T(1) + e);
}

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise.

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      "add", a, b, [](auto x, auto y) { return x + y; },
      [](auto, auto, auto) { return 1; }, [](auto, auto, auto) { return 1; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      "sub", a, b, [](auto x, auto y) { return x - y; }, [](auto, auto, auto) { return 1; },
      [](auto, auto, auto) { return -1; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      "mul", a, b, [](auto x, auto y) { return x * y; }, [](auto, auto y, auto) { return y; },
      [](auto x, auto, auto) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_op(
      "div", a, b, [](auto x, auto y) { return x / y; },
      [](auto, auto y, auto) { return decltype(y)(1) / y; },
      [](auto, auto y, auto z) { return -z / y; });
}

Tensor minimum(const Tensor& a, const Tensor& b) {
  return binary_op(
      "minimum", a, b, [](auto x, auto y) { return x <= y ? x : y; },
      [](auto x, auto y, auto) { return x <= y ? 1 : 0; },
      [](auto x, auto y, auto) { return x <= y ? 0 : 1; });
}

Tensor maximum(const Tensor& a, const Tensor& b) {
  return binary_op(
      "maximum", a, b, [](auto x, auto y) { return x >= y ? x : y; },
      [](auto x, auto y, auto) { return x >= y ? 1 : 0; },
      [](auto x, auto y, auto) { return x >= y ? 0 : 1; });
}

Tensor where(const Tensor& cond, const Tensor& a, const Tensor& b) {
  check_dtypes("where", {cond, a, b});
  if (a.shape() != b.shape()) {
    throw ShapeError("where: branch shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()) + " differ");
  }
  const Broadcast plan = plan_broadcast(a.shape(), cond.shape(), "where");
  if (plan.out != a.shape()) {
    throw ShapeError("where: condition " + shape_str(cond.shape()) + " does not broadcast to " +
                     shape_str(a.shape()));
  }
  Tensor out = make_tensor(a.shape(), a.dtype());
  dispatch(a.dtype(), [&]<typename T>() {
    auto x = a.data<T>();
    auto y = b.data<T>();
    auto c = cond.data<T>();
    auto z = out.mutable_data<T>();
    broadcast_loop(plan, [&](int64_t io, int64_t, int64_t ic) {
      z[io] = c[ic] != T(0) ? x[io] : y[io];
    });
  });
  if (should_record({a, b})) {
    record("where", {cond, a, b}, out, [cond, a, b, out, plan]() {
      dispatch(a.dtype(), [&]<typename T>() {
        auto c = cond.data<T>();
        auto g = out_grad<T>(out);
        if (wants_grad(a)) {
          auto ga = grad_of<T>(a);
          broadcast_loop(plan, [&](int64_t io, int64_t, int64_t ic) {
            if (c[ic] != T(0)) ga[io] += g[io];
          });
        }
        if (wants_grad(b)) {
          auto gb = grad_of<T>(b);
          broadcast_loop(plan, [&](int64_t io, int64_t, int64_t ic) {
            if (c[ic] == T(0)) gb[io] += g[io];
          });
        }
      });
    });
  }
  return out;
}

Tensor scale(const Tensor& a, double s) {
  return unary_op(
      "scalar-mul", a, [s](auto x) { return x * static_cast<decltype(x)>(s); },
      [s](auto x, auto) { return static_cast<decltype(x)>(s); });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary_op(
      "add-scalar", a, [s](auto x) { return x + static_cast<decltype(x)>(s); },
      [](auto x, auto) { return decltype(x)(1); });
}

Tensor exp(const Tensor& a) {
  return unary_op(
      "exp", a, [](auto x) { return std::exp(x); }, [](auto, auto y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary_op(
      "log", a, [](auto x) { return std::log(x); },
      [](auto x, auto) { return decltype(x)(1) / x; });
}

Tensor sigmoid(const Tensor& a) {
  return unary_op(
      "sigmoid", a, [](auto x) { return stable_sigmoid(x); },
      [](auto, auto y) { return y * (decltype(y)(1) - y); });
}

Tensor softplus(const Tensor& a) {
  return unary_op(
      "softplus", a,
      [](auto x) {
        using T = decltype(x);
        return std::max(x, T(0)) + std::log1p(std::exp(-std::abs(x)));
      },
      [](auto x, auto) { return stable_sigmoid(x); });
}

Tensor gelu(const Tensor& a) {
  constexpr double kC = 0.7978845608028654;  // sqrt(2 / pi)
  constexpr double kA = 0.044715;
  return unary_op(
      "gelu", a,
      [](auto x) {
        using T = decltype(x);
        const T u = T(kC) * (x + T(kA) * x * x * x);
        return T(0.5) * x * (T(1) + std::tanh(u));
      },
      [](auto x, auto) {
        using T = decltype(x);
        const T u = T(kC) * (x + T(kA) * x * x * x);
        const T t = std::tanh(u);
        return T(0.5) * (T(1) + t) + T(0.5) * x * (T(1) - t * t) * T(kC) * (T(1) + T(3 * kA) * x * x);
      });
}

Tensor relu(const Tensor& a) {
  return unary_op(
      "relu", a, [](auto x) { return x > 0 ? x : decltype(x)(0); },
      [](auto x, auto) { return x > 0 ? decltype(x)(1) : decltype(x)(0); });
}

Tensor abs(const Tensor& a) {
  return unary_op(
      "abs", a, [](auto x) { return std::abs(x); },
      [](auto x, auto) {
        using T = decltype(x);
        return x > 0 ? T(1) : (x < 0 ? T(-1) : T(0));
      });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  if (!(lo <= hi)) throw Error("clamp: lo exceeds hi");
  return unary_op(
      "clamp", a,
      [lo, hi](auto x) {
        using T = decltype(x);
        return std::min(std::max(x, T(lo)), T(hi));
      },
      [lo, hi](auto x, auto) {
        using T = decltype(x);
        return (x >= T(lo) && x <= T(hi)) ? T(1) : T(0);
      });
}

// ---------------------------------------------------------------------------
// Shape manipulation.

Tensor reshape(const Tensor& a, Shape shape) {
  int64_t known = 1;
  int infer = -1;
  for (size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == -1) {
      if (infer >= 0) throw ShapeError("reshape: more than one inferred extent");
      infer = static_cast<int>(i);
    } else {
      known *= shape[i];
    }
  }
  if (infer >= 0 && known > 0 && a.numel() % known == 0) shape[infer] = a.numel() / known;
  if (infer >= 0 && shape[infer] == -1) {
    throw ShapeError("reshape: cannot infer extent for " + shape_str(a.shape()));
  }
  if (numel(shape) != a.numel()) {
    throw ShapeError("reshape: " + shape_str(a.shape()) + " to " + shape_str(shape));
  }
  Tensor out = make_tensor(shape, a.dtype());
  out.impl()->data = a.impl()->data;
  if (should_record({a})) {
    record("reshape", {a}, out, [a, out]() {
      dispatch(a.dtype(), [&]<typename T>() {
        auto g = out_grad<T>(out);
        auto ga = grad_of<T>(a);
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      });
    });
  }
  return out;
}

namespace {

// Visits (out_index, in_index) pairs of a permutation.
template <class Fn>
void permute_loop(const Shape& in_shape, const std::vector<int>& perm, Fn&& fn) {
  const int r = static_cast<int>(in_shape.size());
  std::vector<int64_t> in_strides(r);
  int64_t acc = 1;
  for (int k = r - 1; k >= 0; --k) {
    in_strides[k] = acc;
    acc *= in_shape[k];
  }
  Shape out_shape(r);
  std::vector<int64_t> step(r);
  for (int i = 0; i < r; ++i) {
    out_shape[i] = in_shape[perm[i]];
    step[i] = in_strides[perm[i]];
  }
  const int64_t total = acc;
  const int64_t inner = out_shape[r - 1];
  const int64_t inner_step = step[r - 1];
  std::vector<int64_t> idx(r, 0);
  int64_t in_pos = 0;
  for (int64_t o = 0; o < total; o += inner) {
    for (int64_t j = 0; j < inner; ++j) fn(o + j, in_pos + j * inner_step);
    for (int d = r - 2; d >= 0; --d) {
      ++idx[d];
      in_pos += step[d];
      if (idx[d] < out_shape[d]) break;
      in_pos -= step[d] * out_shape[d];
      idx[d] = 0;
    }
  }
}

}  // namespace

Tensor transpose(const Tensor& a, std::vector<int> perm) {
  const int r = a.rank();
  if (static_cast<int>(perm.size()) != r) {
    throw ShapeError("transpose: permutation of length " + std::to_string(perm.size()) +
                     " for shape " + shape_str(a.shape()));
  }
  std::vector<bool> seen(r, false);
  for (int& p : perm) {
    p = norm_axis(p, r, "transpose");
    if (seen[p]) throw ShapeError("transpose: repeated axis in permutation");
    seen[p] = true;
  }
  Shape out_shape(r);
  for (int i = 0; i < r; ++i) out_shape[i] = a.shape()[perm[i]];
  Tensor out = make_tensor(out_shape, a.dtype());
  dispatch(a.dtype(), [&]<typename T>() {
    auto x = a.data<T>();
    auto y = out.mutable_data<T>();
    permute_loop(a.shape(), perm, [&](int64_t io, int64_t ii) { y[io] = x[ii]; });
  });
  if (should_record({a})) {
    record("transpose", {a}, out, [a, out, perm]() {
      dispatch(a.dtype(), [&]<typename T>() {
        auto g = out_grad<T>(out);
        auto ga = grad_of<T>(a);
        permute_loop(a.shape(), perm, [&](int64_t io, int64_t ii) { ga[ii] += g[io]; });
      });
    });
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  if (a.rank() < 2) throw ShapeError("transpose: rank < 2 for shape " + shape_str(a.shape()));
  std::vector<int> perm(a.rank());
  std::iota(perm.begin(), perm.end(), 0);
  std::swap(perm[a.rank() - 1], perm[a.rank() - 2]);
  return transpose(a, std::move(perm));
}

Tensor slice(const Tensor& a, int axis, int64_t start, int64_t stop) {
  const int ax = norm_axis(axis, a.rank(), "slice");
  const int64_t n = a.shape()[ax];
  if (start < 0 || stop > n || start >= stop) {
    throw ShapeError("slice: range [" + std::to_string(start) + ", " + std::to_string(stop) +
                     ") invalid for axis of extent " + std::to_string(n));
  }
  const AxisFrame f = frame_axis(a.shape(), ax);
  Shape out_shape = a.shape();
  out_shape[ax] = stop - start;
  Tensor out = make_tensor(out_shape, a.dtype());
  const int64_t len = (stop - start) * f.inner;
  dispatch(a.dtype(), [&]<typename T>() {
    auto x = a.data<T>();
    auto y = out.mutable_data<T>();
    for (int64_t o = 0; o < f.outer; ++o) {
      std::copy_n(x.begin() + (o * n + start) * f.inner, len, y.begin() + o * len);
    }
  });
  if (should_record({a})) {
    record("slice", {a}, out, [a, out, f, start, len, n]() {
      dispatch(a.dtype(), [&]<typename T>() {
        auto g = out_grad<T>(out);
        auto ga = grad_of<T>(a);
        for (int64_t o = 0; o < f.outer; ++o) {
          T* dst = ga.data() + (o * n + start) * f.inner;
          const T* src = g.data() + o * len;
          for (int64_t i = 0; i < len; ++i) dst[i] += src[i];
        }
      });
    });
  }
  return out;
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Tensor& first = parts.front();
  const int ax = norm_axis(axis, first.rank(), "concat");
  Shape out_shape = first.shape();
  out_shape[ax] = 0;
  for (const Tensor& p : parts) {
    if (p.dtype() != first.dtype()) throw Error("concat: mixed dtypes across inputs");
    if (p.rank() != first.rank()) throw ShapeError("concat: rank mismatch");
    for (int i = 0; i < first.rank(); ++i) {
      if (i != ax && p.shape()[i] != first.shape()[i]) {
        throw ShapeError("concat: shapes " + shape_str(first.shape()) + " and " +
                         shape_str(p.shape()) + " differ off the concat axis");
      }
    }
    out_shape[ax] += p.shape()[ax];
  }
  Tensor out = make_tensor(out_shape, first.dtype());
  const AxisFrame fo = frame_axis(out_shape, ax);
  dispatch(first.dtype(), [&]<typename T>() {
    auto y = out.mutable_data<T>();
    int64_t offset = 0;
    for (const Tensor& p : parts) {
      auto x = p.data<T>();
      const int64_t len = p.shape()[ax] * fo.inner;
      for (int64_t o = 0; o < fo.outer; ++o) {
        std::copy_n(x.begin() + o * len, len, y.begin() + o * fo.n * fo.inner + offset);
      }
      offset += len;
    }
  });
  bool any = false;
  for (const Tensor& p : parts) any = any || wants_grad(p);
  if (any && Tape::current() != nullptr) {
    record("concat", parts, out, [parts, out, fo, ax]() {
      dispatch(out.dtype(), [&]<typename T>() {
        auto g = out_grad<T>(out);
        int64_t offset = 0;
        for (const Tensor& p : parts) {
          const int64_t len = p.shape()[ax] * fo.inner;
          if (wants_grad(p)) {
            auto gp = grad_of<T>(p);
            for (int64_t o = 0; o < fo.outer; ++o) {
              const T* src = g.data() + o * fo.n * fo.inner + offset;
              T* dst = gp.data() + o * len;
              for (int64_t i = 0; i < len; ++i) dst[i] += src[i];
            }
          }
          offset += len;
        }
      });
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reductions.

Tensor sum(const Tensor& a) {
  Tensor out = make_tensor({1}, a.dtype());
  dispatch(a.dtype(), [&]<typename T>() {
    auto x = a.data<T>();
    // Accumulate in double for both dtypes.
    double acc = 0.0;
    for (T v : x) acc += v;
    out.mutable_data<T>()[0] = static_cast<T>(acc);
  });
  if (should_record({a})) {
    record("sum", {a}, out, [a, out]() {
      dispatch(a.dtype(), [&]<typename T>() {
        const T g = out_grad<T>(out)[0];
        for (T& v : grad_of<T>(a)) v += g;
      });
    });
  }
  return out;
}

Tensor sum(const Tensor& a, int axis, bool keepdim) {
  const int ax = norm_axis(axis, a.rank(), "sum");
  const AxisFrame f = frame_axis(a.shape(), ax);
  Shape out_shape = a.shape();
  if (keepdim || a.rank() == 1) {
    out_shape[ax] = 1;
  } else {
    out_shape.erase(out_shape.begin() + ax);
  }
  Tensor out = make_tensor(out_shape, a.dtype());
  dispatch(a.dtype(), [&]<typename T>() {
    auto x = a.data<T>();
    auto y = out.mutable_data<T>();
    for (int64_t o = 0; o < f.outer; ++o) {
      T* dst = y.data() + o * f.inner;
      for (int64_t k = 0; k < f.n; ++k) {
        const T* src = x.data() + (o * f.n + k) * f.inner;
        for (int64_t i = 0; i < f.inner; ++i) dst[i] += src[i];
      }
    }
  });
  if (should_record({a})) {
    record("sum", {a}, out, [a, out, f]() {
      dispatch(a.dtype(), [&]<typename T>() {
        auto g = out_grad<T>(out);
        auto ga = grad_of<T>(a);
        for (int64_t o = 0; o < f.outer; ++o) {
          const T* src = g.data() + o * f.inner;
          for (int64_t k = 0; k < f.n; ++k) {
            T* dst = ga.data() + (o * f.n + k) * f.inner;
            for (int64_t i = 0; i < f.inner; ++i) dst[i] += src[i];
          }
        }
      });
    });
  }
  return out;
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor mean(const Tensor& a, int axis, bool keepdim) {
  return scale(sum(a, axis, keepdim), 1.0 / static_cast<double>(a.dim(axis)));
}

// ---------------------------------------------------------------------------
// Matrix product.

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_dtypes("matmul", {a, b});
  if (a.rank() < 2 || b.rank() < 2) {
    throw ShapeError("matmul: operands " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()) + " must have rank >= 2");
  }
  const int64_t m = a.dim(-2), k = a.dim(-1), n = b.dim(-1);
  if (b.dim(-2) != k) {
    throw ShapeError("matmul: inner extents differ in " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  const bool shared_rhs = b.rank() == 2;
  int64_t batch = 1;
  Shape out_shape(a.shape().begin(), a.shape().end() - 2);
  if (!shared_rhs) {
    if (a.rank() != b.rank() ||
        !std::equal(a.shape().begin(), a.shape().end() - 2, b.shape().begin())) {
      throw ShapeError("matmul: batch extents differ in " + shape_str(a.shape()) + " x " +
                       shape_str(b.shape()));
    }
  }
  for (int64_t e : out_shape) batch *= e;
  out_shape.push_back(m);
  out_shape.push_back(n);
  Tensor out = make_tensor(out_shape, a.dtype());
  dispatch(a.dtype(), [&]<typename T>() {
    const T* x = a.data<T>().data();
    const T* y = b.data<T>().data();
    T* z = out.mutable_data<T>().data();
    if (shared_rhs) {
      kernels::gemm(batch * m, n, k, x, y, z);
    } else {
      for (int64_t p = 0; p < batch; ++p) {
        kernels::gemm(m, n, k, x + p * m * k, y + p * k * n, z + p * m * n);
      }
    }
  });
  if (should_record({a, b})) {
    record("matmul", {a, b}, out, [a, b, out, m, n, k, batch, shared_rhs]() {
      dispatch(a.dtype(), [&]<typename T>() {
        const T* x = a.data<T>().data();
        const T* y = b.data<T>().data();
        const T* g = out_grad<T>(out).data();
        if (wants_grad(a)) {
          T* ga = grad_of<T>(a).data();
          if (shared_rhs) {
            kernels::gemm_nt_acc(batch * m, k, n, g, y, ga);
          } else {
            for (int64_t p = 0; p < batch; ++p) {
              kernels::gemm_nt_acc(m, k, n, g + p * m * n, y + p * k * n, ga + p * m * k);
            }
          }
        }
        if (wants_grad(b)) {
          T* gb = grad_of<T>(b).data();
          if (shared_rhs) {
            kernels::gemm_tn_acc(k, n, batch * m, x, g, gb);
          } else {
            for (int64_t p = 0; p < batch; ++p) {
              kernels::gemm_tn_acc(k, n, m, x + p * m * k, g + p * m * n, gb + p * k * n);
            }
          }
        }
      });
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Softmax and normalization.

Tensor softmax(const Tensor& a, int axis, double temperature) {
  if (!(temperature > 0.0)) throw Error("softmax: temperature must be positive");
  const int ax = norm_axis(axis, a.rank(), "softmax");
  const AxisFrame f = frame_axis(a.shape(), ax);
  Tensor out = make_tensor(a.shape(), a.dtype());
  dispatch(a.dtype(), [&]<typename T>() {
    auto x = a.data<T>();
    auto y = out.mutable_data<T>();
    const T inv_t = T(1.0 / temperature);
    for (int64_t o = 0; o < f.outer; ++o) {
      for (int64_t i = 0; i < f.inner; ++i) {
        const int64_t base = o * f.n * f.inner + i;
        T mx = x[base];
        for (int64_t k = 1; k < f.n; ++k) mx = std::max(mx, x[base + k * f.inner]);
        T total = 0;
        for (int64_t k = 0; k < f.n; ++k) {
          const T e = std::exp((x[base + k * f.inner] - mx) * inv_t);
          y[base + k * f.inner] = e;
          total += e;
        }
        for (int64_t k = 0; k < f.n; ++k) y[base + k * f.inner] /= total;
      }
    }
  });
  if (should_record({a})) {
    record("softmax", {a}, out, [a, out, f, temperature]() {
      dispatch(a.dtype(), [&]<typename T>() {
        auto y = out.data<T>();
        auto g = out_grad<T>(out);
        auto ga = grad_of<T>(a);
        const T inv_t = T(1.0 / temperature);
        for (int64_t o = 0; o < f.outer; ++o) {
          for (int64_t i = 0; i < f.inner; ++i) {
            const int64_t base = o * f.n * f.inner + i;
            T dot = 0;
            for (int64_t k = 0; k < f.n; ++k) {
              const int64_t j = base + k * f.inner;
              dot += g[j] * y[j];
            }
            for (int64_t k = 0; k < f.n; ++k) {
              const int64_t j = base + k * f.inner;
              ga[j] += y[j] * (g[j] - dot) * inv_t;
            }
          }
        }
      });
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& a, int axis, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  check_dtypes("layernorm", {a, gamma, beta});
  const int ax = norm_axis(axis, a.rank(), "layernorm");
  const AxisFrame f = frame_axis(a.shape(), ax);
  const bool affine = gamma.defined();
  if (affine != beta.defined()) throw Error("layernorm: gamma and beta must both be given");
  if (affine && (gamma.numel() != f.n || beta.numel() != f.n)) {
    throw ShapeError("layernorm: affine parameters " + shape_str(gamma.shape()) +
                     " do not match axis extent " + std::to_string(f.n));
  }
  Tensor out = make_tensor(a.shape(), a.dtype());
  // Normalized values and inverse std, kept for the backward pass.
  Tensor xhat = make_tensor(a.shape(), a.dtype());
  Tensor inv_std = make_tensor({f.outer * f.inner}, a.dtype());
  dispatch(a.dtype(), [&]<typename T>() {
    auto x = a.data<T>();
    auto y = out.mutable_data<T>();
    auto xh = xhat.mutable_data<T>();
    auto is = inv_std.mutable_data<T>();
    const T* gm = affine ? gamma.data<T>().data() : nullptr;
    const T* bt = affine ? beta.data<T>().data() : nullptr;
    for (int64_t o = 0; o < f.outer; ++o) {
      for (int64_t i = 0; i < f.inner; ++i) {
        const int64_t base = o * f.n * f.inner + i;
        T mu = 0;
        for (int64_t k = 0; k < f.n; ++k) mu += x[base + k * f.inner];
        mu /= T(f.n);
        T var = 0;
        for (int64_t k = 0; k < f.n; ++k) {
          const T dlt = x[base + k * f.inner] - mu;
          var += dlt * dlt;
        }
        var /= T(f.n);
        const T inv = T(1) / std::sqrt(var + T(eps));
        is[o * f.inner + i] = inv;
        for (int64_t k = 0; k < f.n; ++k) {
          const int64_t j = base + k * f.inner;
          xh[j] = (x[j] - mu) * inv;
          y[j] = affine ? xh[j] * gm[k] + bt[k] : xh[j];
        }
      }
    }
  });
  if (should_record({a, gamma, beta})) {
    std::vector<Tensor> inputs{a};
    if (affine) {
      inputs.push_back(gamma);
      inputs.push_back(beta);
    }
    record("layernorm", std::move(inputs), out, [a, gamma, beta, out, xhat, inv_std, f, affine]() {
      dispatch(a.dtype(), [&]<typename T>() {
        auto g = out_grad<T>(out);
        auto xh = xhat.data<T>();
        auto is = inv_std.data<T>();
        const T* gm = affine ? gamma.data<T>().data() : nullptr;
        T* ggm = affine && wants_grad(gamma) ? grad_of<T>(gamma).data() : nullptr;
        T* gbt = affine && wants_grad(beta) ? grad_of<T>(beta).data() : nullptr;
        T* ga = wants_grad(a) ? grad_of<T>(a).data() : nullptr;
        for (int64_t o = 0; o < f.outer; ++o) {
          for (int64_t i = 0; i < f.inner; ++i) {
            const int64_t base = o * f.n * f.inner + i;
            T mean_g = 0, mean_gx = 0;
            for (int64_t k = 0; k < f.n; ++k) {
              const int64_t j = base + k * f.inner;
              const T gx = affine ? g[j] * gm[k] : g[j];
              mean_g += gx;
              mean_gx += gx * xh[j];
              if (ggm) ggm[k] += g[j] * xh[j];
              if (gbt) gbt[k] += g[j];
            }
            mean_g /= T(f.n);
            mean_gx /= T(f.n);
            if (ga) {
              const T inv = is[o * f.inner + i];
              for (int64_t k = 0; k < f.n; ++k) {
                const int64_t j = base + k * f.inner;
                const T gx = affine ? g[j] * gm[k] : g[j];
                ga[j] += inv * (gx - mean_g - xh[j] * mean_gx);
              }
            }
          }
        }
      });
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Convolution.

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride,
              int padding) {
  check_dtypes("conv2d", {x, weight, bias});
  if (x.rank() != 4 || weight.rank() != 4) {
    throw ShapeError("conv2d: expected 4-D input and weight, got " + shape_str(x.shape()) +
                     " and " + shape_str(weight.shape()));
  }
  if (stride < 1 || padding < 0) throw Error("conv2d: invalid stride or padding");
  const int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int64_t O = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  if (weight.dim(1) != C) {
    throw ShapeError("conv2d: weight " + shape_str(weight.shape()) + " incompatible with input " +
                     shape_str(x.shape()));
  }
  if (bias.defined() && bias.numel() != O) {
    throw ShapeError("conv2d: bias " + shape_str(bias.shape()) + " for " + std::to_string(O) +
                     " output channels");
  }
  const int64_t Ho = (H + 2 * padding - kh) / stride + 1;
  const int64_t Wo = (W + 2 * padding - kw) / stride + 1;
  if (Ho <= 0 || Wo <= 0) throw ShapeError("conv2d: kernel larger than padded input");
  const kernels::ConvGeom geom{C, H, W, kh, kw, Ho, Wo, stride, padding};
  Tensor out = make_tensor({B, O, Ho, Wo}, x.dtype());
  dispatch(x.dtype(), [&]<typename T>() {
    const T* xs = x.data<T>().data();
    const T* ws = weight.data<T>().data();
    T* ys = out.mutable_data<T>().data();
    std::vector<T> col(C * kh * kw * Ho * Wo);
    for (int64_t b = 0; b < B; ++b) {
      kernels::im2col(geom, xs + b * C * H * W, col.data());
      kernels::gemm(O, Ho * Wo, C * kh * kw, ws, col.data(), ys + b * O * Ho * Wo);
      if (bias.defined()) {
        const T* bs = bias.data<T>().data();
        for (int64_t o = 0; o < O; ++o) {
          T* row = ys + (b * O + o) * Ho * Wo;
          for (int64_t i = 0; i < Ho * Wo; ++i) row[i] += bs[o];
        }
      }
    }
  });
  if (should_record({x, weight, bias})) {
    std::vector<Tensor> inputs{x, weight};
    if (bias.defined()) inputs.push_back(bias);
    record("conv2d", std::move(inputs), out, [x, weight, bias, out, geom, B, O]() {
      dispatch(x.dtype(), [&]<typename T>() {
        const int64_t C = geom.channels, H = geom.height, W = geom.width;
        const int64_t ckk = C * geom.kh * geom.kw, hw = geom.out_h * geom.out_w;
        const T* xs = x.data<T>().data();
        const T* ws = weight.data<T>().data();
        const T* g = out_grad<T>(out).data();
        std::vector<T> col(ckk * hw);
        T* gw = wants_grad(weight) ? grad_of<T>(weight).data() : nullptr;
        T* gx = wants_grad(x) ? grad_of<T>(x).data() : nullptr;
        T* gb = wants_grad(bias) ? grad_of<T>(bias).data() : nullptr;
        for (int64_t b = 0; b < B; ++b) {
          const T* gout = g + b * O * hw;
          if (gw) {
            kernels::im2col(geom, xs + b * C * H * W, col.data());
            kernels::gemm_nt_acc(O, ckk, hw, gout, col.data(), gw);
          }
          if (gx) {
            std::fill(col.begin(), col.end(), T(0));
            kernels::gemm_tn_acc(ckk, hw, O, ws, gout, col.data());
            kernels::col2im_acc(geom, col.data(), gx + b * C * H * W);
          }
          if (gb) {
            for (int64_t o = 0; o < O; ++o) {
              T acc = 0;
              for (int64_t i = 0; i < hw; ++i) acc += gout[o * hw + i];
              gb[o] += acc;
            }
          }
        }
      });
    });
  }
  return out;
}

Tensor batch_norm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                    Tensor running_mean, Tensor running_var, bool train, double eps,
                    double momentum) {
  check_dtypes("batchnorm2d", {x, gamma, beta, running_mean, running_var});
  if (x.rank() != 4) throw ShapeError("batchnorm2d: expected 4-D input, got " + shape_str(x.shape()));
  const int64_t B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  for (const Tensor* t : std::initializer_list<const Tensor*>{&gamma, &beta, &running_mean, &running_var}) {
    if (!t->defined() || t->numel() != C) {
      throw ShapeError("batchnorm2d: per-channel tensor does not match " + std::to_string(C) +
                       " channels");
    }
  }
  const int64_t count = B * HW;
  Tensor out = make_tensor(x.shape(), x.dtype());
  Tensor xhat = make_tensor(x.shape(), x.dtype());
  Tensor inv_std = make_tensor({C}, x.dtype());
  dispatch(x.dtype(), [&]<typename T>() {
    auto xs = x.data<T>();
    auto ys = out.mutable_data<T>();
    auto xh = xhat.mutable_data<T>();
    auto is = inv_std.mutable_data<T>();
    auto gm = gamma.data<T>();
    auto bt = beta.data<T>();
    auto rm = running_mean.mutable_data<T>();
    auto rv = running_var.mutable_data<T>();
    for (int64_t c = 0; c < C; ++c) {
      T mu, var;
      if (train) {
        double acc = 0.0;
        for (int64_t b = 0; b < B; ++b) {
          const T* p = xs.data() + (b * C + c) * HW;
          for (int64_t i = 0; i < HW; ++i) acc += p[i];
        }
        mu = static_cast<T>(acc / static_cast<double>(count));
        double sq = 0.0;
        for (int64_t b = 0; b < B; ++b) {
          const T* p = xs.data() + (b * C + c) * HW;
          for (int64_t i = 0; i < HW; ++i) sq += static_cast<double>((p[i] - mu) * (p[i] - mu));
        }
        var = static_cast<T>(sq / static_cast<double>(count));
        const T unbiased = count > 1 ? var * T(count) / T(count - 1) : var;
        rm[c] = T(1 - momentum) * rm[c] + T(momentum) * mu;
        rv[c] = T(1 - momentum) * rv[c] + T(momentum) * unbiased;
      } else {
        mu = rm[c];
        var = rv[c];
      }
      const T inv = T(1) / std::sqrt(var + T(eps));
      is[c] = inv;
      for (int64_t b = 0; b < B; ++b) {
        const int64_t base = (b * C + c) * HW;
        for (int64_t i = 0; i < HW; ++i) {
          xh[base + i] = (xs[base + i] - mu) * inv;
          ys[base + i] = xh[base + i] * gm[c] + bt[c];
        }
      }
    }
  });
  if (should_record({x, gamma, beta})) {
    record("batchnorm2d", {x, gamma, beta}, out, [x, gamma, beta, out, xhat, inv_std, train, B, C, HW]() {
      dispatch(x.dtype(), [&]<typename T>() {
        auto g = out_grad<T>(out);
        auto xh = xhat.data<T>();
        auto is = inv_std.data<T>();
        auto gm = gamma.data<T>();
        T* gx = wants_grad(x) ? grad_of<T>(x).data() : nullptr;
        T* ggm = wants_grad(gamma) ? grad_of<T>(gamma).data() : nullptr;
        T* gbt = wants_grad(beta) ? grad_of<T>(beta).data() : nullptr;
        const T count = T(B * HW);
        for (int64_t c = 0; c < C; ++c) {
          T sum_g = 0, sum_gx = 0;
          for (int64_t b = 0; b < B; ++b) {
            const int64_t base = (b * C + c) * HW;
            for (int64_t i = 0; i < HW; ++i) {
              sum_g += g[base + i];
              sum_gx += g[base + i] * xh[base + i];
            }
          }
          if (ggm) ggm[c] += sum_gx;
          if (gbt) gbt[c] += sum_g;
          if (!gx) continue;
          const T k = gm[c] * is[c];
          const T mg = sum_g / count, mgx = sum_gx / count;
          for (int64_t b = 0; b < B; ++b) {
            const int64_t base = (b * C + c) * HW;
            for (int64_t i = 0; i < HW; ++i) {
              gx[base + i] += train ? k * (g[base + i] - mg - xh[base + i] * mgx)
                                    : k * g[base + i];
            }
          }
        }
      });
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Resampling.

Tensor bilinear_resample(const Tensor& field, const Tensor& grid) {
  check_dtypes("bilinear-resample", {field, grid});
  if (field.rank() != 4 || grid.rank() != 4 || grid.dim(3) != 2 || grid.dim(0) != field.dim(0)) {
    throw ShapeError("bilinear-resample: field " + shape_str(field.shape()) + " and grid " +
                     shape_str(grid.shape()) + " are incompatible");
  }
  const int64_t B = field.dim(0), H = field.dim(1), W = field.dim(2), C = field.dim(3);
  const int64_t Ho = grid.dim(1), Wo = grid.dim(2);
  Tensor out = make_tensor({B, Ho, Wo, C}, field.dtype());
  // For each output cell: four source offsets and weights.
  struct Tap {
    int64_t idx[4];
    double w[4];
  };
  std::vector<Tap> taps(B * Ho * Wo);
  {
    const std::vector<double> gv = grid.to_vector();
    for (int64_t b = 0; b < B; ++b) {
      for (int64_t i = 0; i < Ho * Wo; ++i) {
        const int64_t cell = b * Ho * Wo + i;
        double u = gv[cell * 2] * static_cast<double>(W) - 0.5;
        double v = gv[cell * 2 + 1] * static_cast<double>(H) - 0.5;
        u = std::clamp(u, 0.0, static_cast<double>(W - 1));
        v = std::clamp(v, 0.0, static_cast<double>(H - 1));
        const int64_t x0 = static_cast<int64_t>(std::floor(u));
        const int64_t y0 = static_cast<int64_t>(std::floor(v));
        const int64_t x1 = std::min(x0 + 1, W - 1), y1 = std::min(y0 + 1, H - 1);
        const double wx = u - static_cast<double>(x0), wy = v - static_cast<double>(y0);
        const int64_t base = b * H * W;
        taps[cell] = Tap{{(base + y0 * W + x0) * C, (base + y0 * W + x1) * C,
                          (base + y1 * W + x0) * C, (base + y1 * W + x1) * C},
                         {(1 - wx) * (1 - wy), wx * (1 - wy), (1 - wx) * wy, wx * wy}};
      }
    }
  }
  dispatch(field.dtype(), [&]<typename T>() {
    auto f = field.data<T>();
    auto y = out.mutable_data<T>();
    for (size_t cell = 0; cell < taps.size(); ++cell) {
      const Tap& t = taps[cell];
      T* dst = y.data() + cell * C;
      for (int q = 0; q < 4; ++q) {
        const T w = static_cast<T>(t.w[q]);
        const T* src = f.data() + t.idx[q];
        for (int64_t c = 0; c < C; ++c) dst[c] += w * src[c];
      }
    }
  });
  if (should_record({field})) {
    record("bilinear-resample", {field, grid}, out, [field, out, taps = std::move(taps), C]() {
      dispatch(field.dtype(), [&]<typename T>() {
        auto g = out_grad<T>(out);
        auto gf = grad_of<T>(field);
        for (size_t cell = 0; cell < taps.size(); ++cell) {
          const Tap& t = taps[cell];
          const T* src = g.data() + cell * C;
          for (int q = 0; q < 4; ++q) {
            const T w = static_cast<T>(t.w[q]);
            T* dst = gf.data() + t.idx[q];
            for (int64_t c = 0; c < C; ++c) dst[c] += w * src[c];
          }
        }
      });
    });
  }
  return out;
}

}  // namespace avtrack
