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

#include "wsiseg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "wsiseg/error.hpp"
#include "wsiseg/simd/kernels.hpp"

namespace wsiseg {
namespace {

thread_local std::vector<float> g_col;
thread_local std::vector<float> g_dcol;
thread_local std::vector<float> g_out;

// Columns of sample j start at col + j * plane within rows of length ld.
void im2col(const float* x, int channels, int height, int width, int kernel, int stride,
            int pad, int out_h, int out_w, float* col, std::size_t ld) {
  for (int c = 0; c < channels; ++c) {
    const float* src = x + static_cast<std::size_t>(c) * height * width;
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        float* dst = col + (static_cast<std::size_t>(c) * kernel * kernel + ky * kernel + kx) * ld;
        const int lo = stride == 1 ? std::clamp(pad - kx, 0, out_w) : 0;
        const int hi = stride == 1 ? std::clamp(width + pad - kx, lo, out_w) : out_w;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride + ky - pad;
          float* row = dst + static_cast<std::size_t>(oy) * out_w;
          if (iy < 0 || iy >= height) {
            std::fill(row, row + out_w, 0.0f);
            continue;
          }
          const float* src_row = src + static_cast<std::size_t>(iy) * width;
          if (stride == 1) {
            std::fill(row, row + lo, 0.0f);
            if (hi > lo)
              std::memcpy(row + lo, src_row + lo + kx - pad, static_cast<std::size_t>(hi - lo) * sizeof(float));
            std::fill(row + hi, row + out_w, 0.0f);
          } else {
            for (int ox = 0; ox < out_w; ++ox) {
              const int ix = ox * stride + kx - pad;
              row[ox] = (ix >= 0 && ix < width) ? src_row[ix] : 0.0f;
            }
          }
        }
      }
    }
  }
}

void col2im_add(const float* col, std::size_t ld, int channels, int height, int width,
                int kernel, int stride, int pad, int out_h, int out_w, float* x) {
  for (int c = 0; c < channels; ++c) {
    float* dst = x + static_cast<std::size_t>(c) * height * width;
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        const float* src = col + (static_cast<std::size_t>(c) * kernel * kernel + ky * kernel + kx) * ld;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= height) continue;
          const float* row = src + static_cast<std::size_t>(oy) * out_w;
          float* dst_row = dst + static_cast<std::size_t>(iy) * width;
          if (stride == 1) {
            const int lo = std::clamp(pad - kx, 0, out_w);
            const int hi = std::clamp(width + pad - kx, lo, out_w);
            const int shift = kx - pad;
            for (int ox = lo; ox < hi; ++ox) dst_row[ox + shift] += row[ox];
          } else {
            for (int ox = 0; ox < out_w; ++ox) {
              const int ix = ox * stride + kx - pad;
              if (ix >= 0 && ix < width) dst_row[ix] += row[ox];
            }
          }
        }
      }
    }
  }
}

// Samples per GEMM so the column buffer stays near 8M floats.
int chunk_samples(int k_dim, std::size_t plane, int batch) {
  const std::size_t per = static_cast<std::size_t>(k_dim) * plane;
  const std::size_t n = std::max<std::size_t>(1, (std::size_t{8} << 20) / std::max<std::size_t>(per, 1));
  return static_cast<int>(std::min<std::size_t>(n, static_cast<std::size_t>(batch)));
}

}  // namespace

std::size_t ParameterStore::add(std::string name, std::vector<int> shape) {
  std::size_t size = 1;
  for (int d : shape) size *= static_cast<std::size_t>(d);
  entries_.push_back({std::move(name), std::move(shape), values_.size(), size});
  values_.resize(values_.size() + size, 0.0f);
  grads_.resize(values_.size(), 0.0f);
  return entries_.size() - 1;
}

std::span<float> ParameterStore::value(std::size_t index) {
  const Entry& e = entries_.at(index);
  return std::span<float>(values_).subspan(e.offset, e.size);
}
std::span<const float> ParameterStore::value(std::size_t index) const {
  const Entry& e = entries_.at(index);
  return std::span<const float>(values_).subspan(e.offset, e.size);
}
std::span<float> ParameterStore::grad(std::size_t index) {
  const Entry& e = entries_.at(index);
  return std::span<float>(grads_).subspan(e.offset, e.size);
}
std::span<const float> ParameterStore::grad(std::size_t index) const {
  const Entry& e = entries_.at(index);
  return std::span<const float>(grads_).subspan(e.offset, e.size);
}

Shape4 Conv2d::output_shape(const Shape4& in) const {
  return {in.n, out_channels, (in.h + 2 * pad - kernel) / stride + 1,
          (in.w + 2 * pad - kernel) / stride + 1};
}

void Conv2d::forward(const ParameterStore& params, const Tensor& x, Tensor& y) const {
  const Shape4 in = x.shape();
  if (in.c != in_channels)
    throw Error(ErrorCode::kShapeMismatch, "conv expected " + std::to_string(in_channels) +
                                               " channels, got " + std::to_string(in.c));
  const Shape4 out = output_shape(in);
  y.reshape(out);
  const int k_dim = in_channels * kernel * kernel;
  const std::size_t plane = out.plane();
  const int chunk = chunk_samples(k_dim, plane, in.n);
  const float* w = params.value(weight).data();
  const auto& k = simd::kernels();
  for (int n0 = 0; n0 < in.n; n0 += chunk) {
    const int nb = std::min(chunk, in.n - n0);
    const std::size_t ld = plane * static_cast<std::size_t>(nb);
    g_col.resize(static_cast<std::size_t>(k_dim) * ld);
    g_out.resize(static_cast<std::size_t>(out_channels) * ld);
    for (int j = 0; j < nb; ++j)
      im2col(x.sample(n0 + j), in.c, in.h, in.w, kernel, stride, pad, out.h, out.w,
             g_col.data() + static_cast<std::size_t>(j) * plane, ld);
    k.sgemm(false, false, out_channels, static_cast<int>(ld), k_dim, 1.0f, w, k_dim, g_col.data(),
            static_cast<int>(ld), 0.0f, g_out.data(), static_cast<int>(ld));
    for (int j = 0; j < nb; ++j)
      for (int c = 0; c < out_channels; ++c) {
        const float* src = g_out.data() + static_cast<std::size_t>(c) * ld + static_cast<std::size_t>(j) * plane;
        const float shift = bias == kNoParam ? 0.0f : params.value(bias)[static_cast<std::size_t>(c)];
        if (bias == kNoParam) {
          std::memcpy(y.plane(n0 + j, c), src, plane * sizeof(float));
        } else {
          k.affine(src, 1.0f, shift, y.plane(n0 + j, c), plane);
        }
      }
  }
}

void Conv2d::backward(ParameterStore& params, const Tensor& x, const Tensor& dy, Tensor* dx) const {
  const Shape4 in = x.shape();
  const Shape4 out = dy.shape();
  const int k_dim = in_channels * kernel * kernel;
  const std::size_t plane = out.plane();
  const int chunk = chunk_samples(k_dim, plane, in.n);
  const float* w = params.value(weight).data();
  float* dw = params.grad(weight).data();
  const auto& k = simd::kernels();
  if (dx) {
    dx->reshape(in);
    dx->fill(0.0f);
  }
  if (bias != kNoParam) {
    auto db = params.grad(bias);
    for (int c = 0; c < out_channels; ++c) {
      double s = 0.0;
      for (int n = 0; n < in.n; ++n) s += k.moments(dy.plane(n, c), plane).sum;
      db[static_cast<std::size_t>(c)] += static_cast<float>(s);
    }
  }
  for (int n0 = 0; n0 < in.n; n0 += chunk) {
    const int nb = std::min(chunk, in.n - n0);
    const std::size_t ld = plane * static_cast<std::size_t>(nb);
    g_col.resize(static_cast<std::size_t>(k_dim) * ld);
    g_out.resize(static_cast<std::size_t>(out_channels) * ld);
    for (int j = 0; j < nb; ++j) {
      im2col(x.sample(n0 + j), in.c, in.h, in.w, kernel, stride, pad, out.h, out.w,
             g_col.data() + static_cast<std::size_t>(j) * plane, ld);
      for (int c = 0; c < out_channels; ++c)
        std::memcpy(g_out.data() + static_cast<std::size_t>(c) * ld + static_cast<std::size_t>(j) * plane,
                    dy.plane(n0 + j, c), plane * sizeof(float));
    }
    k.sgemm(false, true, out_channels, k_dim, static_cast<int>(ld), 1.0f, g_out.data(),
            static_cast<int>(ld), g_col.data(), static_cast<int>(ld), 1.0f, dw, k_dim);
    if (!dx) continue;
    g_dcol.resize(static_cast<std::size_t>(k_dim) * ld);
    k.sgemm(true, false, k_dim, static_cast<int>(ld), out_channels, 1.0f, w, k_dim, g_out.data(),
            static_cast<int>(ld), 0.0f, g_dcol.data(), static_cast<int>(ld));
    for (int j = 0; j < nb; ++j)
      col2im_add(g_dcol.data() + static_cast<std::size_t>(j) * plane, ld, in.c, in.h, in.w, kernel,
                 stride, pad, out.h, out.w, dx->sample(n0 + j));
  }
}

void BatchNorm2d::forward_train(const ParameterStore& params, ParameterStore& buffers,
                                const Tensor& x, Tensor& y, BatchNormTrace& trace) const {
  const Shape4 s = x.shape();
  y.reshape(s);
  trace.normalized.reshape(s);
  trace.inv_std.assign(static_cast<std::size_t>(channels), 0.0f);
  const auto& k = simd::kernels();
  const auto gamma_v = params.value(gamma);
  const auto beta_v = params.value(beta);
  auto rm = buffers.value(running_mean);
  auto rv = buffers.value(running_var);
  const double m = static_cast<double>(s.n) * s.plane();
  for (int c = 0; c < channels; ++c) {
    double sum = 0.0, sum_sq = 0.0;
    for (int n = 0; n < s.n; ++n) {
      const simd::Moments mo = k.moments(x.plane(n, c), s.plane());
      sum += mo.sum;
      sum_sq += mo.sum_sq;
    }
    const double mean = sum / m;
    const double var = std::max(0.0, sum_sq / m - mean * mean);
    const float inv_std = static_cast<float>(1.0 / std::sqrt(var + eps));
    trace.inv_std[static_cast<std::size_t>(c)] = inv_std;
    const float shift = static_cast<float>(-mean) * inv_std;
    const auto cc = static_cast<std::size_t>(c);
    for (int n = 0; n < s.n; ++n) {
      k.affine(x.plane(n, c), inv_std, shift, trace.normalized.plane(n, c), s.plane());
      k.affine(trace.normalized.plane(n, c), gamma_v[cc], beta_v[cc], y.plane(n, c), s.plane());
    }
    const double unbiased = m > 1.0 ? var * m / (m - 1.0) : var;
    rm[cc] = static_cast<float>((1.0 - momentum) * rm[cc] + momentum * mean);
    rv[cc] = static_cast<float>((1.0 - momentum) * rv[cc] + momentum * unbiased);
  }
}

void BatchNorm2d::forward_eval(const ParameterStore& params, const ParameterStore& buffers,
                               const Tensor& x, Tensor& y) const {
  const Shape4 s = x.shape();
  y.reshape(s);
  const auto& k = simd::kernels();
  const auto gamma_v = params.value(gamma);
  const auto beta_v = params.value(beta);
  const auto rm = buffers.value(running_mean);
  const auto rv = buffers.value(running_var);
  for (int c = 0; c < channels; ++c) {
    const auto cc = static_cast<std::size_t>(c);
    const float scale = gamma_v[cc] / std::sqrt(rv[cc] + eps);
    const float shift = beta_v[cc] - rm[cc] * scale;
    for (int n = 0; n < s.n; ++n) k.affine(x.plane(n, c), scale, shift, y.plane(n, c), s.plane());
  }
}

void BatchNorm2d::backward(ParameterStore& params, const BatchNormTrace& trace, const Tensor& dy,
                           Tensor& dx) const {
  const Shape4 s = dy.shape();
  dx.reshape(s);
  const auto& k = simd::kernels();
  const auto gamma_v = params.value(gamma);
  auto dgamma = params.grad(gamma);
  auto dbeta = params.grad(beta);
  const double m = static_cast<double>(s.n) * s.plane();
  for (int c = 0; c < channels; ++c) {
    const auto cc = static_cast<std::size_t>(c);
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int n = 0; n < s.n; ++n) {
      sum_dy += k.moments(dy.plane(n, c), s.plane()).sum;
      sum_dy_xhat += k.dot(dy.plane(n, c), trace.normalized.plane(n, c), s.plane());
    }
    dgamma[cc] += static_cast<float>(sum_dy_xhat);
    dbeta[cc] += static_cast<float>(sum_dy);
    const float scale = gamma_v[cc] * trace.inv_std[cc];
    const float offset = static_cast<float>(-scale * sum_dy / m);
    const float slope = static_cast<float>(-scale * sum_dy_xhat / m);
    for (int n = 0; n < s.n; ++n) {
      const float* g = dy.plane(n, c);
      const float* xh = trace.normalized.plane(n, c);
      float* out = dx.plane(n, c);
      for (std::size_t i = 0; i < s.plane(); ++i) out[i] = scale * g[i] + offset + slope * xh[i];
    }
  }
}

void relu_inplace(Tensor& t) {
  simd::kernels().relu(t.data(), t.data(), t.shape().count());
}

void relu_backward_inplace(const Tensor& activation, Tensor& grad) {
  simd::kernels().relu_backward(activation.data(), grad.data(), grad.data(), grad.shape().count());
}

void upsample_nearest2x(const Tensor& x, Tensor& y) {
  const Shape4 s = x.shape();
  y.reshape({s.n, s.c, s.h * 2, s.w * 2});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const float* src = x.plane(n, c);
      float* dst = y.plane(n, c);
      for (int yy = 0; yy < 2 * s.h; ++yy) {
        const float* row = src + static_cast<std::size_t>(yy / 2) * s.w;
        float* out = dst + static_cast<std::size_t>(yy) * 2 * s.w;
        for (int xx = 0; xx < s.w; ++xx) out[2 * xx] = out[2 * xx + 1] = row[xx];
      }
    }
}

void upsample_nearest2x_backward(const Tensor& dy, Tensor& dx) {
  const Shape4 s = dy.shape();
  dx.reshape({s.n, s.c, s.h / 2, s.w / 2});
  const int w = s.w / 2;
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const float* src = dy.plane(n, c);
      float* dst = dx.plane(n, c);
      for (int yy = 0; yy < s.h / 2; ++yy) {
        const float* r0 = src + static_cast<std::size_t>(2 * yy) * s.w;
        const float* r1 = r0 + s.w;
        for (int xx = 0; xx < w; ++xx)
          dst[static_cast<std::size_t>(yy) * w + xx] =
              (r0[2 * xx] + r0[2 * xx + 1]) + (r1[2 * xx] + r1[2 * xx + 1]);
      }
    }
}

void concat_channels(const Tensor& a, const Tensor& b, Tensor& out) {
  const Shape4 sa = a.shape();
  const int cb = b.shape().count() == 0 ? 0 : b.shape().c;
  if (cb > 0 && (b.shape().n != sa.n || b.shape().h != sa.h || b.shape().w != sa.w))
    throw Error(ErrorCode::kShapeMismatch, "concat operands differ in batch or spatial size");
  out.reshape({sa.n, sa.c + cb, sa.h, sa.w});
  const std::size_t pa = static_cast<std::size_t>(sa.c) * sa.plane();
  const std::size_t pb = static_cast<std::size_t>(cb) * sa.plane();
  for (int n = 0; n < sa.n; ++n) {
    std::memcpy(out.sample(n), a.sample(n), pa * sizeof(float));
    if (cb > 0) std::memcpy(out.sample(n) + pa, b.sample(n), pb * sizeof(float));
  }
}

void split_channels(const Tensor& d, int ca, Tensor& da, Tensor& db) {
  const Shape4 s = d.shape();
  const int cb = s.c - ca;
  da.reshape({s.n, ca, s.h, s.w});
  db.reshape({s.n, cb, s.h, s.w});
  const std::size_t pa = static_cast<std::size_t>(ca) * s.plane();
  const std::size_t pb = static_cast<std::size_t>(cb) * s.plane();
  for (int n = 0; n < s.n; ++n) {
    std::memcpy(da.sample(n), d.sample(n), pa * sizeof(float));
    if (cb > 0) std::memcpy(db.sample(n), d.sample(n) + pa, pb * sizeof(float));
  }
}

}  // namespace wsiseg
