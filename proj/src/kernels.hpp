// Copyright 2026 The DSTT Authors
// SPDX-License-Identifier: Apache-2.0

// Raw dense kernels shared by the differentiable ops. Not part of the public
// API. Every kernel has a fixed reduction order, so results are bit-identical
// across runs for identical inputs.

#pragma once

#include <algorithm>
#include <cstddef>

namespace dstt::kernels {

/// c[m x n] += a[m x k] * b[k x n], all row-major and contiguous.
/// Each c element accumulates over p in ascending order.
template <typename T>
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const T* __restrict a,
             const T* __restrict b, T* __restrict c) {
  constexpr std::size_t kBlockN = 512;
  constexpr std::size_t kBlockK = 128;
  for (std::size_t j0 = 0; j0 < n; j0 += kBlockN) {
    const std::size_t j1 = std::min(n, j0 + kBlockN);
    for (std::size_t p0 = 0; p0 < k; p0 += kBlockK) {
      const std::size_t p1 = std::min(k, p0 + kBlockK);
      std::size_t i = 0;
      for (; i + 4 <= m; i += 4) {
        T* __restrict c0 = c + i * n;
        T* __restrict c1 = c0 + n;
        T* __restrict c2 = c1 + n;
        T* __restrict c3 = c2 + n;
        for (std::size_t p = p0; p < p1; ++p) {
          const T a0 = a[i * k + p];
          const T a1 = a[(i + 1) * k + p];
          const T a2 = a[(i + 2) * k + p];
          const T a3 = a[(i + 3) * k + p];
          const T* __restrict bp = b + p * n;
          for (std::size_t j = j0; j < j1; ++j) {
            const T bv = bp[j];
            c0[j] += a0 * bv;
            c1[j] += a1 * bv;
            c2[j] += a2 * bv;
            c3[j] += a3 * bv;
          }
        }
      }
      for (; i < m; ++i) {
        T* __restrict ci = c + i * n;
        for (std::size_t p = p0; p < p1; ++p) {
          const T ai = a[i * k + p];
          const T* __restrict bp = b + p * n;
          for (std::size_t j = j0; j < j1; ++j) ci[j] += ai * bp[j];
        }
      }
    }
  }
}

/// out[cols x rows] = in[rows x cols]^T.
template <typename T>
void transpose(std::size_t rows, std::size_t cols, const T* __restrict in, T* __restrict out) {
  constexpr std::size_t kTile = 32;
  for (std::size_t r0 = 0; r0 < rows; r0 += kTile) {
    const std::size_t r1 = std::min(rows, r0 + kTile);
    for (std::size_t c0 = 0; c0 < cols; c0 += kTile) {
      const std::size_t c1 = std::min(cols, c0 + kTile);
      for (std::size_t r = r0; r < r1; ++r) {
        for (std::size_t c = c0; c < c1; ++c) out[c * rows + r] = in[r * cols + c];
      }
    }
  }
}

}  // namespace dstt::kernels
