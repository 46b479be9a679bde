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

#pragma once

#include <cstddef>
#include <string_view>

namespace wsiseg::simd {

enum class Isa { kScalar, kAvx2 };

std::string_view isa_name(Isa isa);

/// Per-channel moments used by batch normalization.
struct Moments {
  double sum = 0.0;
  double sum_sq = 0.0;
};

/// Adam hyper-parameters for one update; bias corrections are precomputed by
/// the caller as 1 - beta^t.
struct AdamStep {
  float lr;
  float beta1;
  float beta2;
  float eps;
  float bias_correction1;
  float bias_correction2;
};

// Function table for one instruction set. Every entry has a scalar reference
// in kernels_scalar.cpp. Elementwise entries are bitwise identical across
// ISAs; sgemm and moments differ only by summation order.
struct KernelTable {
  Isa isa;

  // Row-major C[m x n] = alpha * op(A) * op(B) + beta * C.
  // op(A) is m x k, op(B) is k x n. beta == 0 ignores the prior content of C.
  void (*sgemm)(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
                const float* a, int lda, const float* b, int ldb, float beta,
                float* c, int ldc);

  void (*relu)(const float* x, float* y, std::size_t n);
  // dx = dy where y > 0, else 0.
  void (*relu_backward)(const float* y, const float* dy, float* dx,
                        std::size_t n);
  // y = x * scale + shift (no fused multiply-add).
  void (*affine)(const float* x, float scale, float shift, float* y,
                 std::size_t n);
  // dst += src
  void (*accumulate)(const float* src, float* dst, std::size_t n);
  Moments (*moments)(const float* x, std::size_t n);
  // sum(a * b) accumulated in double.
  double (*dot)(const float* a, const float* b, std::size_t n);
  void (*adam_update)(float* param, const float* grad, float* m, float* v,
                      std::size_t n, const AdamStep& step);
};

const KernelTable& scalar_kernels();
// Only valid to call through when cpu_supports(Isa::kAvx2) is true.
const KernelTable& avx2_kernels();

bool cpu_supports(Isa isa);

/// Best ISA the host supports, unless the WSISEG_ISA environment variable
/// ("scalar" or "avx2") pins one.
Isa detect_isa();

/// Table selected at first use by detect_isa(); select_isa overrides it.
const KernelTable& kernels();
void select_isa(Isa isa);
Isa active_isa();

}  // namespace wsiseg::simd
