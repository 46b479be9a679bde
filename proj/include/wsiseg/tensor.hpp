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

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace wsiseg {

struct Shape4 {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t count() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  bool operator==(const Shape4&) const = default;
};

/// Dense NCHW float tensor.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape4 shape, float fill = 0.0f)
      : shape_(shape), data_(shape.count(), fill) {}

  const Shape4& shape() const { return shape_; }
  void reshape(Shape4 shape) {
    shape_ = shape;
    data_.resize(shape.count());
  }
  void fill(float v) { std::fill(data_.begin(), data_.end(), v); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::span<float> values() { return data_; }
  std::span<const float> values() const { return data_; }

  float* sample(int n) {
    return data_.data() + static_cast<std::size_t>(n) * shape_.c * shape_.plane();
  }
  const float* sample(int n) const {
    return data_.data() + static_cast<std::size_t>(n) * shape_.c * shape_.plane();
  }
  float* plane(int n, int c) { return sample(n) + static_cast<std::size_t>(c) * shape_.plane(); }
  const float* plane(int n, int c) const {
    return sample(n) + static_cast<std::size_t>(c) * shape_.plane();
  }

 private:
  Shape4 shape_;
  std::vector<float> data_;
};

/// Flat named parameter collection with a matching gradient buffer.
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    std::vector<int> shape;
    std::size_t offset = 0;
    std::size_t size = 0;
  };

  std::size_t add(std::string name, std::vector<int> shape);

  std::span<float> value(std::size_t index);
  std::span<const float> value(std::size_t index) const;
  std::span<float> grad(std::size_t index);
  std::span<const float> grad(std::size_t index) const;

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<float>& values() { return values_; }
  const std::vector<float>& values() const { return values_; }
  std::vector<float>& grads() { return grads_; }
  const std::vector<float>& grads() const { return grads_; }

  void zero_grad() { std::fill(grads_.begin(), grads_.end(), 0.0f); }
  std::size_t total() const { return values_.size(); }

 private:
  std::vector<Entry> entries_;
  std::vector<float> values_;
  std::vector<float> grads_;
};

inline constexpr std::size_t kNoParam = static_cast<std::size_t>(-1);

/// Convolution with square kernel: im2col over a chunk of samples, then one
/// GEMM per chunk.
struct Conv2d {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  int stride = 1;
  int pad = 1;
  std::size_t weight = kNoParam;  // [out, in * k * k]
  std::size_t bias = kNoParam;    // [out] or none

  Shape4 output_shape(const Shape4& in) const;
  void forward(const ParameterStore& params, const Tensor& x, Tensor& y) const;
  /// Accumulates weight/bias gradients; writes dx when non-null.
  void backward(ParameterStore& params, const Tensor& x, const Tensor& dy, Tensor* dx) const;
};

struct BatchNormTrace {
  Tensor normalized;
  std::vector<float> inv_std;
};

/// Per-channel batch normalization; running statistics live in `buffers`.
struct BatchNorm2d {
  int channels = 0;
  float momentum = 0.1f;
  float eps = 1e-5f;
  std::size_t gamma = kNoParam;
  std::size_t beta = kNoParam;
  std::size_t running_mean = kNoParam;  // buffer index
  std::size_t running_var = kNoParam;   // buffer index

  void forward_train(const ParameterStore& params, ParameterStore& buffers, const Tensor& x,
                     Tensor& y, BatchNormTrace& trace) const;
  void forward_eval(const ParameterStore& params, const ParameterStore& buffers,
                    const Tensor& x, Tensor& y) const;
  void backward(ParameterStore& params, const BatchNormTrace& trace, const Tensor& dy,
                Tensor& dx) const;
};

void relu_inplace(Tensor& t);
/// Masks `grad` in place where `activation` is not positive.
void relu_backward_inplace(const Tensor& activation, Tensor& grad);

void upsample_nearest2x(const Tensor& x, Tensor& y);
/// Adjoint of upsample_nearest2x: sums each 2x2 block.
void upsample_nearest2x_backward(const Tensor& dy, Tensor& dx);

/// Channel concatenation [a, b]; b may be empty (c == 0).
void concat_channels(const Tensor& a, const Tensor& b, Tensor& out);
/// Inverse of concat_channels: the first `channels_a` channels go to da.
void split_channels(const Tensor& d, int channels_a, Tensor& da, Tensor& db);

}  // namespace wsiseg
