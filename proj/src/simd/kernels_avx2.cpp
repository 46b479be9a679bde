/* Copyright (c) 2026 The wsiseg Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License. */

// Compiled with -mavx2 -mfma. Nothing here may be reached unless the host
// supports both; the dispatcher guarantees that. The file deliberately avoids
// standard-library templates so no AVX2-compiled inline function can be
// picked by the linker for callers in baseline translation units.

#include <immintrin.h>

#include <cmath>

#include "wsiseg/simd/kernels.hpp"

namespace wsiseg::simd {
namespace {

constexpr int kMr = 6;
constexpr int kNr = 16;
constexpr int kKc = 256;
constexpr int kMc = 96;
constexpr int kNc = 2048;

alignas(64) thread_local float g_pack_a[kMc * kKc];
alignas(64) thread_local float g_pack_b[kKc * kNc];

inline int min_int(int a, int b) { return a < b ? a : b; }

void pack_b(bool trans_b, const float* b, int ldb, int row0, int col0, int kc,
            int nc, float* out) {
  for (int jp = 0; jp < nc; jp += kNr) {
    const int cols = min_int(kNr, nc - jp);
    float* panel = out + static_cast<std::ptrdiff_t>(jp) * kc;
    for (int p = 0; p < kc; ++p) {
      float* dst = panel + p * kNr;
      const int row = row0 + p;
      if (!trans_b) {
        const float* src = b + static_cast<std::ptrdiff_t>(row) * ldb + col0 + jp;
        if (cols == kNr) {
          _mm256_store_ps(dst, _mm256_loadu_ps(src));
          _mm256_store_ps(dst + 8, _mm256_loadu_ps(src + 8));
          continue;
        }
        for (int j = 0; j < cols; ++j) dst[j] = src[j];
      } else {
        for (int j = 0; j < cols; ++j)
          dst[j] = b[static_cast<std::ptrdiff_t>(col0 + jp + j) * ldb + row];
      }
      for (int j = cols; j < kNr; ++j) dst[j] = 0.0f;
    }
  }
}

void pack_a(bool trans_a, const float* a, int lda, int row0, int col0, int mc,
            int kc, float alpha, float* out) {
  for (int ip = 0; ip < mc; ip += kMr) {
    const int rows = min_int(kMr, mc - ip);
    float* panel = out + static_cast<std::ptrdiff_t>(ip) * kc;
    for (int p = 0; p < kc; ++p) {
      float* dst = panel + p * kMr;
      for (int i = 0; i < rows; ++i) {
        const int r = row0 + ip + i;
        const int c = col0 + p;
        const float v = trans_a ? a[static_cast<std::ptrdiff_t>(c) * lda + r]
                                : a[static_cast<std::ptrdiff_t>(r) * lda + c];
        dst[i] = alpha * v;
      }
      for (int i = rows; i < kMr; ++i) dst[i] = 0.0f;
    }
  }
}

// C[rows x cols] += packed A panel (6 x kc) * packed B panel (kc x 16).
void micro_kernel(int kc, const float* pa, const float* pb, float* c, int ldc,
                  int rows, int cols) {
  __m256 c00 = _mm256_setzero_ps(), c01 = _mm256_setzero_ps();
  __m256 c10 = _mm256_setzero_ps(), c11 = _mm256_setzero_ps();
  __m256 c20 = _mm256_setzero_ps(), c21 = _mm256_setzero_ps();
  __m256 c30 = _mm256_setzero_ps(), c31 = _mm256_setzero_ps();
  __m256 c40 = _mm256_setzero_ps(), c41 = _mm256_setzero_ps();
  __m256 c50 = _mm256_setzero_ps(), c51 = _mm256_setzero_ps();
  for (int p = 0; p < kc; ++p) {
    const __m256 b0 = _mm256_load_ps(pb);
    const __m256 b1 = _mm256_load_ps(pb + 8);
    __m256 a = _mm256_broadcast_ss(pa + 0);
    c00 = _mm256_fmadd_ps(a, b0, c00);
    c01 = _mm256_fmadd_ps(a, b1, c01);
    a = _mm256_broadcast_ss(pa + 1);
    c10 = _mm256_fmadd_ps(a, b0, c10);
    c11 = _mm256_fmadd_ps(a, b1, c11);
    a = _mm256_broadcast_ss(pa + 2);
    c20 = _mm256_fmadd_ps(a, b0, c20);
    c21 = _mm256_fmadd_ps(a, b1, c21);
    a = _mm256_broadcast_ss(pa + 3);
    c30 = _mm256_fmadd_ps(a, b0, c30);
    c31 = _mm256_fmadd_ps(a, b1, c31);
    a = _mm256_broadcast_ss(pa + 4);
    c40 = _mm256_fmadd_ps(a, b0, c40);
    c41 = _mm256_fmadd_ps(a, b1, c41);
    a = _mm256_broadcast_ss(pa + 5);
    c50 = _mm256_fmadd_ps(a, b0, c50);
    c51 = _mm256_fmadd_ps(a, b1, c51);
    pa += kMr;
    pb += kNr;
  }
  alignas(32) float tile[kMr * kNr];
  _mm256_store_ps(tile + 0 * kNr, c00);
  _mm256_store_ps(tile + 0 * kNr + 8, c01);
  _mm256_store_ps(tile + 1 * kNr, c10);
  _mm256_store_ps(tile + 1 * kNr + 8, c11);
  _mm256_store_ps(tile + 2 * kNr, c20);
  _mm256_store_ps(tile + 2 * kNr + 8, c21);
  _mm256_store_ps(tile + 3 * kNr, c30);
  _mm256_store_ps(tile + 3 * kNr + 8, c31);
  _mm256_store_ps(tile + 4 * kNr, c40);
  _mm256_store_ps(tile + 4 * kNr + 8, c41);
  _mm256_store_ps(tile + 5 * kNr, c50);
  _mm256_store_ps(tile + 5 * kNr + 8, c51);
  if (cols == kNr) {
    for (int i = 0; i < rows; ++i) {
      float* dst = c + static_cast<std::ptrdiff_t>(i) * ldc;
      _mm256_storeu_ps(dst, _mm256_add_ps(_mm256_loadu_ps(dst),
                                          _mm256_load_ps(tile + i * kNr)));
      _mm256_storeu_ps(dst + 8,
                       _mm256_add_ps(_mm256_loadu_ps(dst + 8),
                                     _mm256_load_ps(tile + i * kNr + 8)));
    }
    return;
  }
  for (int i = 0; i < rows; ++i) {
    float* dst = c + static_cast<std::ptrdiff_t>(i) * ldc;
    for (int j = 0; j < cols; ++j) dst[j] += tile[i * kNr + j];
  }
}

void sgemm_avx2(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
                const float* a, int lda, const float* b, int ldb, float beta,
                float* c, int ldc) {
  for (int i = 0; i < m; ++i) {
    float* row = c + static_cast<std::ptrdiff_t>(i) * ldc;
    if (beta == 0.0f) {
      for (int j = 0; j < n; ++j) row[j] = 0.0f;
    } else if (beta != 1.0f) {
      for (int j = 0; j < n; ++j) row[j] *= beta;
    }
  }
  if (alpha == 0.0f || k == 0) return;

  for (int jc = 0; jc < n; jc += kNc) {
    const int nc = min_int(kNc, n - jc);
    for (int pc = 0; pc < k; pc += kKc) {
      const int kc = min_int(kKc, k - pc);
      pack_b(trans_b, b, ldb, pc, jc, kc, nc, g_pack_b);
      for (int ic = 0; ic < m; ic += kMc) {
        const int mc = min_int(kMc, m - ic);
        pack_a(trans_a, a, lda, ic, pc, mc, kc, alpha, g_pack_a);
        for (int jr = 0; jr < nc; jr += kNr) {
          const int cols = min_int(kNr, nc - jr);
          const float* pb = g_pack_b + static_cast<std::ptrdiff_t>(jr) * kc;
          for (int ir = 0; ir < mc; ir += kMr) {
            const int rows = min_int(kMr, mc - ir);
            const float* pa = g_pack_a + static_cast<std::ptrdiff_t>(ir) * kc;
            float* c_tile =
                c + static_cast<std::ptrdiff_t>(ic + ir) * ldc + jc + jr;
            micro_kernel(kc, pa, pb, c_tile, ldc, rows, cols);
          }
        }
      }
    }
  }
}

void relu_avx2(const float* x, float* y, std::size_t n) {
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_max_ps(_mm256_loadu_ps(x + i), zero));
  for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_backward_avx2(const float* y, const float* dy, float* dx,
                        std::size_t n) {
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(y + i), zero, _CMP_GT_OQ);
    _mm256_storeu_ps(dx + i, _mm256_and_ps(mask, _mm256_loadu_ps(dy + i)));
  }
  for (; i < n; ++i) dx[i] = y[i] > 0.0f ? dy[i] : 0.0f;
}

void affine_avx2(const float* x, float scale, float shift, float* y,
                 std::size_t n) {
  const __m256 vs = _mm256_set1_ps(scale);
  const __m256 vb = _mm256_set1_ps(shift);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 prod = _mm256_mul_ps(_mm256_loadu_ps(x + i), vs);
    _mm256_storeu_ps(y + i, _mm256_add_ps(prod, vb));
  }
  for (; i < n; ++i) y[i] = x[i] * scale + shift;
}

void accumulate_avx2(const float* src, float* dst, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(dst + i, _mm256_add_ps(_mm256_loadu_ps(dst + i),
                                            _mm256_loadu_ps(src + i)));
  for (; i < n; ++i) dst[i] += src[i];
}

double hsum(__m256d v) {
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, v);
  return (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
}

Moments moments_avx2(const float* x, std::size_t n) {
  __m256d sum = _mm256_setzero_pd();
  __m256d sum_sq = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_cvtps_pd(_mm_loadu_ps(x + i));
    sum = _mm256_add_pd(sum, v);
    sum_sq = _mm256_add_pd(sum_sq, _mm256_mul_pd(v, v));
  }
  Moments out{hsum(sum), hsum(sum_sq)};
  for (; i < n; ++i) {
    const double v = x[i];
    out.sum += v;
    out.sum_sq += v * v;
  }
  return out;
}

double dot_avx2(const float* a, const float* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d va = _mm256_cvtps_pd(_mm_loadu_ps(a + i));
    const __m256d vb = _mm256_cvtps_pd(_mm_loadu_ps(b + i));
    acc = _mm256_add_pd(acc, _mm256_mul_pd(va, vb));
  }
  double out = hsum(acc);
  for (; i < n; ++i)
    out += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return out;
}

void adam_update_avx2(float* param, const float* grad, float* m, float* v,
                      std::size_t n, const AdamStep& s) {
  const float one_minus_b1 = 1.0f - s.beta1;
  const float one_minus_b2 = 1.0f - s.beta2;
  const float step_size = s.lr / s.bias_correction1;
  const float bc2_sqrt = std::sqrt(s.bias_correction2);
  const __m256 vb1 = _mm256_set1_ps(s.beta1);
  const __m256 vb2 = _mm256_set1_ps(s.beta2);
  const __m256 v1mb1 = _mm256_set1_ps(one_minus_b1);
  const __m256 v1mb2 = _mm256_set1_ps(one_minus_b2);
  const __m256 vstep = _mm256_set1_ps(step_size);
  const __m256 vbc2 = _mm256_set1_ps(bc2_sqrt);
  const __m256 veps = _mm256_set1_ps(s.eps);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 g = _mm256_loadu_ps(grad + i);
    __m256 mi = _mm256_add_ps(_mm256_mul_ps(vb1, _mm256_loadu_ps(m + i)),
                              _mm256_mul_ps(v1mb1, g));
    __m256 vi = _mm256_add_ps(_mm256_mul_ps(vb2, _mm256_loadu_ps(v + i)),
                              _mm256_mul_ps(v1mb2, _mm256_mul_ps(g, g)));
    _mm256_storeu_ps(m + i, mi);
    _mm256_storeu_ps(v + i, vi);
    const __m256 denom =
        _mm256_add_ps(_mm256_div_ps(_mm256_sqrt_ps(vi), vbc2), veps);
    const __m256 delta = _mm256_mul_ps(vstep, _mm256_div_ps(mi, denom));
    _mm256_storeu_ps(param + i, _mm256_sub_ps(_mm256_loadu_ps(param + i), delta));
  }
  for (; i < n; ++i) {
    const float g = grad[i];
    m[i] = s.beta1 * m[i] + one_minus_b1 * g;
    v[i] = s.beta2 * v[i] + one_minus_b2 * (g * g);
    const float denom = std::sqrt(v[i]) / bc2_sqrt + s.eps;
    param[i] -= step_size * (m[i] / denom);
  }
}

}  // namespace

const KernelTable& avx2_kernels() {
  static const KernelTable table{
      Isa::kAvx2,     sgemm_avx2,      relu_avx2,
      relu_backward_avx2, affine_avx2, accumulate_avx2,
      moments_avx2,   dot_avx2,        adam_update_avx2,
  };
  return table;
}

}  // namespace wsiseg::simd
