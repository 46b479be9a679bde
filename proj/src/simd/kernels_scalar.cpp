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

#include <cmath>

#include "wsiseg/simd/kernels.hpp"

namespace wsiseg::simd {
namespace {

void sgemm_scalar(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
                  const float* a, int lda, const float* b, int ldb, float beta,
                  float* c, int ldc) {
  for (int i = 0; i < m; ++i) {
    float* c_row = c + static_cast<std::ptrdiff_t>(i) * ldc;
    if (beta == 0.0f) {
      for (int j = 0; j < n; ++j) c_row[j] = 0.0f;
    } else if (beta != 1.0f) {
      for (int j = 0; j < n; ++j) c_row[j] *= beta;
    }
    for (int p = 0; p < k; ++p) {
      const float a_ip =
          alpha * (trans_a ? a[static_cast<std::ptrdiff_t>(p) * lda + i]
                           : a[static_cast<std::ptrdiff_t>(i) * lda + p]);
      if (trans_b) {
        for (int j = 0; j < n; ++j)
          c_row[j] += a_ip * b[static_cast<std::ptrdiff_t>(j) * ldb + p];
      } else {
        const float* b_row = b + static_cast<std::ptrdiff_t>(p) * ldb;
        for (int j = 0; j < n; ++j) c_row[j] += a_ip * b_row[j];
      }
    }
  }
}

void relu_scalar(const float* x, float* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_backward_scalar(const float* y, const float* dy, float* dx,
                          std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dx[i] = y[i] > 0.0f ? dy[i] : 0.0f;
}

void affine_scalar(const float* x, float scale, float shift, float* y,
                   std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] * scale + shift;
}

void accumulate_scalar(const float* src, float* dst, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] += src[i];
}

Moments moments_scalar(const float* x, std::size_t n) {
  Moments out;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = x[i];
    out.sum += v;
    out.sum_sq += v * v;
  }
  return out;
}

double dot_scalar(const float* a, const float* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return acc;
}

void adam_update_scalar(float* param, const float* grad, float* m, float* v,
                        std::size_t n, const AdamStep& s) {
  const float one_minus_b1 = 1.0f - s.beta1;
  const float one_minus_b2 = 1.0f - s.beta2;
  const float step_size = s.lr / s.bias_correction1;
  const float bc2_sqrt = std::sqrt(s.bias_correction2);
  for (std::size_t i = 0; i < n; ++i) {
    const float g = grad[i];
    m[i] = s.beta1 * m[i] + one_minus_b1 * g;
    v[i] = s.beta2 * v[i] + one_minus_b2 * (g * g);
    const float denom = std::sqrt(v[i]) / bc2_sqrt + s.eps;
    param[i] -= step_size * (m[i] / denom);
  }
}

}  // namespace

const KernelTable& scalar_kernels() {
  static const KernelTable table{
      Isa::kScalar,     sgemm_scalar,      relu_scalar,
      relu_backward_scalar, affine_scalar, accumulate_scalar,
      moments_scalar,   dot_scalar,        adam_update_scalar,
  };
  return table;
}

}  // namespace wsiseg::simd
