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

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "wsiseg/tensor.hpp"

namespace wsiseg {

struct ArchitectureSpec {
  int input_px = 256;
  int input_channels = 3;
  std::vector<int> stage_widths{16, 24, 40, 80, 112};
  std::vector<int> decoder_widths{64, 32, 16, 8, 8};
  int head_kernel = 3;  // odd
  bool classifier = false;

  /// Throws kInvalidSpec.
  void validate() const;
  /// Canonical text form, used for hashing and checkpoint sidecars.
  std::string canonical() const;
  bool operator==(const ArchitectureSpec&) const = default;
};

inline constexpr int kStages = 5;

/// U-Net style encoder/decoder with a sigmoid mask head and an optional
/// scalar classifier on the pooled deepest feature map.
///
/// forward() caches what backward() needs; call backward() only after a
/// training-mode forward on the same batch.
class SegNet {
 public:
  explicit SegNet(const ArchitectureSpec& spec);

  const ArchitectureSpec& spec() const { return spec_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }
  ParameterStore& buffers() { return buffers_; }
  const ParameterStore& buffers() const { return buffers_; }

  /// Draws every parameter from U(-1/sqrt(fan_in), 1/sqrt(fan_in)); BN
  /// scales start at 1, shifts at 0, running stats at (0, 1).
  void initialize(std::uint64_t seed);

  /// x: B x C x H x W with H, W divisible by 32.
  void forward(const Tensor& x, bool training);
  /// Gradients of the loss w.r.t. the sigmoid outputs. d_cls is ignored
  /// (may be empty) when the classifier is disabled. Accumulates into
  /// params().grads().
  void backward(const Tensor& d_seg, const std::vector<float>& d_cls);

  const Tensor& seg() const { return seg_; }
  const std::vector<float>& cls() const { return cls_; }
  /// Deepest encoder feature map from the last forward.
  const Tensor& latent() const { return enc_[kStages - 1].b.a; }

 private:
  struct Unit {
    Conv2d conv;
    BatchNorm2d bn;
    Tensor z;
    Tensor a;
    BatchNormTrace trace;
  };
  struct Stage {
    Unit a;  // stride 2
    Unit b;
  };

  Unit make_unit(const std::string& name, int in, int out, int stride);
  void unit_forward(Unit& u, const Tensor& x, bool training);
  void unit_backward(Unit& u, const Tensor& x, Tensor& da, Tensor* dx);

  ArchitectureSpec spec_;
  ParameterStore params_;
  ParameterStore buffers_;
  std::array<Stage, kStages> enc_;
  std::array<Unit, kStages> dec_;
  Conv2d head_;
  std::size_t cls_weight_ = kNoParam;
  std::size_t cls_bias_ = kNoParam;

  Tensor input_;
  std::array<Tensor, kStages> up_;
  std::array<Tensor, kStages> cat_;
  Tensor logits_;
  Tensor seg_;
  std::vector<float> pooled_;
  std::vector<float> cls_;
};

struct ModelBundle {
  ArchitectureSpec spec;
  SegNet net;
  std::string fingerprint;

  explicit ModelBundle(const ArchitectureSpec& s) : spec(s), net(s) {}
};

ModelBundle build_model(const ArchitectureSpec& spec, std::uint64_t init_seed);

/// Hash of parameter values and running statistics.
std::uint64_t parameter_checksum(const SegNet& net);

}  // namespace wsiseg
