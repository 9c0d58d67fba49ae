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

// Dense loops behind the primitives. Row-major throughout.

#ifndef AVTRACK_SRC_KERNELS_H_
#define AVTRACK_SRC_KERNELS_H_

#include <algorithm>
#include <cstdint>
#include <vector>

namespace avtrack::kernels {

// c[m x n] = a[m x k] * b[k x n]
template <class T>
void gemm(int64_t m, int64_t n, int64_t k, const T* __restrict a, const T* __restrict b,
          T* __restrict c) {
  std::fill(c, c + m * n, T(0));
  for (int64_t i = 0; i < m; ++i) {
    T* __restrict crow = c + i * n;
    const T* arow = a + i * k;
    for (int64_t l = 0; l < k; ++l) {
      const T av = arow[l];
      const T* __restrict brow = b + l * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[m x k] += g[m x n] * b[k x n]^T
template <class T>
void gemm_nt_acc(int64_t m, int64_t k, int64_t n, const T* __restrict g, const T* __restrict b,
                 T* __restrict c) {
  std::vector<T> bt(n * k);
  for (int64_t r = 0; r < k; ++r) {
    for (int64_t j = 0; j < n; ++j) bt[j * k + r] = b[r * n + j];
  }
  for (int64_t i = 0; i < m; ++i) {
    T* __restrict crow = c + i * k;
    const T* grow = g + i * n;
    for (int64_t j = 0; j < n; ++j) {
      const T gv = grow[j];
      const T* __restrict brow = bt.data() + j * k;
      for (int64_t r = 0; r < k; ++r) crow[r] += gv * brow[r];
    }
  }
}

// c[k x n] += a[m x k]^T * g[m x n]
template <class T>
void gemm_tn_acc(int64_t k, int64_t n, int64_t m, const T* __restrict a, const T* __restrict g,
                 T* __restrict c) {
  for (int64_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    const T* __restrict grow = g + i * n;
    for (int64_t r = 0; r < k; ++r) {
      const T av = arow[r];
      T* __restrict crow = c + r * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * grow[j];
    }
  }
}

struct ConvGeom {
  int64_t channels, height, width, kh, kw, out_h, out_w;
  int64_t stride, padding;
};

// col[(c*kh + i)*kw + j][oy*out_w + ox]
template <class T>
void im2col(const ConvGeom& g, const T* __restrict x, T* __restrict col) {
  const int64_t hw = g.out_h * g.out_w;
  for (int64_t c = 0; c < g.channels; ++c) {
    for (int64_t i = 0; i < g.kh; ++i) {
      for (int64_t j = 0; j < g.kw; ++j) {
        T* dst = col + ((c * g.kh + i) * g.kw + j) * hw;
        for (int64_t oy = 0; oy < g.out_h; ++oy) {
          const int64_t y = oy * g.stride - g.padding + i;
          for (int64_t ox = 0; ox < g.out_w; ++ox) {
            const int64_t xx = ox * g.stride - g.padding + j;
            dst[oy * g.out_w + ox] = (y >= 0 && y < g.height && xx >= 0 && xx < g.width)
                                         ? x[(c * g.height + y) * g.width + xx]
                                         : T(0);
          }
        }
      }
    }
  }
}

template <class T>
void col2im_acc(const ConvGeom& g, const T* __restrict col, T* __restrict x) {
  const int64_t hw = g.out_h * g.out_w;
  for (int64_t c = 0; c < g.channels; ++c) {
    for (int64_t i = 0; i < g.kh; ++i) {
      for (int64_t j = 0; j < g.kw; ++j) {
        const T* src = col + ((c * g.kh + i) * g.kw + j) * hw;
        for (int64_t oy = 0; oy < g.out_h; ++oy) {
          const int64_t y = oy * g.stride - g.padding + i;
          if (y < 0 || y >= g.height) continue;
          for (int64_t ox = 0; ox < g.out_w; ++ox) {
            const int64_t xx = ox * g.stride - g.padding + j;
            if (xx < 0 || xx >= g.width) continue;
            x[(c * g.height + y) * g.width + xx] += src[oy * g.out_w + ox];
          }
        }
      }
    }
  }
}

}  // namespace avtrack::kernels

#endif  // AVTRACK_SRC_KERNELS_H_
