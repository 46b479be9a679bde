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

#include "wsiseg/segnet.hpp"

#include <cmath>
#include <sstream>

#include "wsiseg/error.hpp"
#include "wsiseg/hash.hpp"
#include "wsiseg/rng.hpp"
#include "wsiseg/simd/kernels.hpp"

namespace wsiseg {
namespace {

float sigmoid(float x) {
  if (x >= 0.0f) return 1.0f / (1.0f + std::exp(-x));
  const float e = std::exp(x);
  return e / (1.0f + e);
}

void add_into(const Tensor& src, Tensor& dst) {
  if (dst.shape().count() == 0) {
    dst = src;
    return;
  }
  if (!(dst.shape() == src.shape()))
    throw Error(ErrorCode::kShapeMismatch, "gradient shapes disagree");
  simd::kernels().accumulate(src.data(), dst.data(), src.shape().count());
}

}  // namespace

void ArchitectureSpec::validate() const {
  if (input_px <= 0 || input_px % 32 != 0)
    throw Error(ErrorCode::kInvalidSpec, "input not divisible by 32");
  if (input_channels < 1) throw Error(ErrorCode::kInvalidSpec, "input_channels must be >= 1");
  if (stage_widths.size() != kStages || decoder_widths.size() != kStages)
    throw Error(ErrorCode::kInvalidSpec, "expected 5 encoder and 5 decoder widths");
  for (int w : stage_widths)
    if (w < 1) throw Error(ErrorCode::kInvalidSpec, "encoder widths must be positive");
  for (int w : decoder_widths)
    if (w < 1) throw Error(ErrorCode::kInvalidSpec, "decoder widths must be positive");
  if (head_kernel < 1 || head_kernel % 2 == 0)
    throw Error(ErrorCode::kInvalidSpec, "head_kernel must be odd and positive");
}

std::string ArchitectureSpec::canonical() const {
  std::ostringstream out;
  out << "input_px=" << input_px << ";input_channels=" << input_channels << ";stage_widths=";
  for (int w : stage_widths) out << w << ',';
  out << ";decoder_widths=";
  for (int w : decoder_widths) out << w << ',';
  out << ";head_kernel=" << head_kernel << ";classifier=" << (classifier ? 1 : 0);
  return out.str();
}

SegNet::Unit SegNet::make_unit(const std::string& name, int in, int out, int stride) {
  Unit u;
  u.conv.in_channels = in;
  u.conv.out_channels = out;
  u.conv.kernel = 3;
  u.conv.stride = stride;
  u.conv.pad = 1;
  u.conv.weight = params_.add(name + ".conv.weight", {out, in, 3, 3});
  u.bn.channels = out;
  u.bn.gamma = params_.add(name + ".bn.gamma", {out});
  u.bn.beta = params_.add(name + ".bn.beta", {out});
  u.bn.running_mean = buffers_.add(name + ".bn.running_mean", {out});
  u.bn.running_var = buffers_.add(name + ".bn.running_var", {out});
  return u;
}

SegNet::SegNet(const ArchitectureSpec& spec) : spec_(spec) {
  spec_.validate();
  int in = spec_.input_channels;
  for (int i = 0; i < kStages; ++i) {
    const int w = spec_.stage_widths[static_cast<std::size_t>(i)];
    const std::string name = "enc" + std::to_string(i);
    enc_[static_cast<std::size_t>(i)].a = make_unit(name + ".a", in, w, 2);
    enc_[static_cast<std::size_t>(i)].b = make_unit(name + ".b", w, w, 1);
    in = w;
  }
  for (int k = 0; k < kStages; ++k) {
    const int skip = k < kStages - 1 ? spec_.stage_widths[static_cast<std::size_t>(kStages - 2 - k)] : 0;
    const int out = spec_.decoder_widths[static_cast<std::size_t>(k)];
    dec_[static_cast<std::size_t>(k)] = make_unit("dec" + std::to_string(k), in + skip, out, 1);
    in = out;
  }
  head_.in_channels = in;
  head_.out_channels = 1;
  head_.kernel = spec_.head_kernel;
  head_.stride = 1;
  head_.pad = spec_.head_kernel / 2;
  head_.weight = params_.add("head.weight", {1, in, spec_.head_kernel, spec_.head_kernel});
  head_.bias = params_.add("head.bias", {1});
  if (spec_.classifier) {
    const int latent = spec_.stage_widths.back();
    cls_weight_ = params_.add("classifier.weight", {1, latent});
    cls_bias_ = params_.add("classifier.bias", {1});
  }
}

void SegNet::initialize(std::uint64_t seed) {
  Rng rng(seed);
  for (std::size_t i = 0; i < params_.entries().size(); ++i) {
    const auto& e = params_.entries()[i];
    auto v = params_.value(i);
    const bool is_gamma = e.name.ends_with(".gamma");
    const bool is_beta = e.name.ends_with(".beta");
    if (is_gamma || is_beta) {
      std::fill(v.begin(), v.end(), is_gamma ? 1.0f : 0.0f);
      continue;
    }
    // Biases share the fan-in of the weight registered just before them.
    const auto& w = e.name.ends_with(".bias") ? params_.entries()[i - 1] : e;
    std::size_t fan_in = 1;
    for (std::size_t d = 1; d < w.shape.size(); ++d) fan_in *= static_cast<std::size_t>(w.shape[d]);
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (float& x : v) x = static_cast<float>(rng.uniform(-bound, bound));
  }
  for (std::size_t i = 0; i < buffers_.entries().size(); ++i) {
    auto v = buffers_.value(i);
    const float fill = buffers_.entries()[i].name.ends_with("running_var") ? 1.0f : 0.0f;
    std::fill(v.begin(), v.end(), fill);
  }
  params_.zero_grad();
}

void SegNet::unit_forward(Unit& u, const Tensor& x, bool training) {
  u.conv.forward(params_, x, u.z);
  if (training) {
    u.bn.forward_train(params_, buffers_, u.z, u.a, u.trace);
  } else {
    u.bn.forward_eval(params_, buffers_, u.z, u.a);
  }
  relu_inplace(u.a);
}

void SegNet::unit_backward(Unit& u, const Tensor& x, Tensor& da, Tensor* dx) {
  relu_backward_inplace(u.a, da);
  Tensor dz;
  u.bn.backward(params_, u.trace, da, dz);
  u.conv.backward(params_, x, dz, dx);
}

void SegNet::forward(const Tensor& x, bool training) {
  const Shape4 s = x.shape();
  if (s.n < 1 || s.c != spec_.input_channels || s.h % 32 != 0 || s.w % 32 != 0 || s.h == 0 ||
      s.w == 0) {
    throw Error(ErrorCode::kShapeMismatch,
                "expected B x " + std::to_string(spec_.input_channels) +
                    " x H x W with H, W divisible by 32");
  }
  input_ = x;
  const Tensor* cur = &input_;
  for (auto& stage : enc_) {
    unit_forward(stage.a, *cur, training);
    unit_forward(stage.b, stage.a.a, training);
    cur = &stage.b.a;
  }
  static const Tensor kEmpty;
  for (int k = 0; k < kStages; ++k) {
    const auto kk = static_cast<std::size_t>(k);
    upsample_nearest2x(*cur, up_[kk]);
    const Tensor& skip = k < kStages - 1 ? enc_[static_cast<std::size_t>(kStages - 2 - k)].b.a : kEmpty;
    concat_channels(up_[kk], skip, cat_[kk]);
    unit_forward(dec_[kk], cat_[kk], training);
    cur = &dec_[kk].a;
  }
  head_.forward(params_, *cur, logits_);
  seg_.reshape(logits_.shape());
  {
    const float* l = logits_.data();
    float* p = seg_.data();
    for (std::size_t i = 0; i < seg_.shape().count(); ++i) p[i] = sigmoid(l[i]);
  }

  cls_.clear();
  pooled_.clear();
  if (!spec_.classifier) return;
  const Tensor& lat = latent();
  const Shape4 ls = lat.shape();
  const auto& k = simd::kernels();
  const auto w = params_.value(cls_weight_);
  const float b = params_.value(cls_bias_)[0];
  pooled_.resize(static_cast<std::size_t>(ls.n) * ls.c);
  cls_.resize(static_cast<std::size_t>(ls.n));
  for (int n = 0; n < ls.n; ++n) {
    double logit = b;
    for (int c = 0; c < ls.c; ++c) {
      const float m = static_cast<float>(k.moments(lat.plane(n, c), ls.plane()).sum /
                                         static_cast<double>(ls.plane()));
      pooled_[static_cast<std::size_t>(n) * ls.c + c] = m;
      logit += static_cast<double>(w[static_cast<std::size_t>(c)]) * m;
    }
    cls_[static_cast<std::size_t>(n)] = sigmoid(static_cast<float>(logit));
  }
}

void SegNet::backward(const Tensor& d_seg, const std::vector<float>& d_cls) {
  if (!(d_seg.shape() == seg_.shape()))
    throw Error(ErrorCode::kShapeMismatch, "segmentation gradient shape differs from output");
  std::array<Tensor, kStages> d_enc;

  Tensor d_logits(seg_.shape());
  {
    const float* p = seg_.data();
    const float* g = d_seg.data();
    float* out = d_logits.data();
    for (std::size_t i = 0; i < seg_.shape().count(); ++i) out[i] = g[i] * p[i] * (1.0f - p[i]);
  }
  Tensor d_cur;
  head_.backward(params_, dec_[kStages - 1].a, d_logits, &d_cur);

  for (int k = kStages - 1; k >= 0; --k) {
    const auto kk = static_cast<std::size_t>(k);
    Tensor d_cat, d_up, d_skip, d_prev;
    unit_backward(dec_[kk], cat_[kk], d_cur, &d_cat);
    split_channels(d_cat, up_[kk].shape().c, d_up, d_skip);
    upsample_nearest2x_backward(d_up, d_prev);
    if (k < kStages - 1) add_into(d_skip, d_enc[static_cast<std::size_t>(kStages - 2 - k)]);
    if (k == 0) {
      add_into(d_prev, d_enc[kStages - 1]);
    } else {
      d_cur = std::move(d_prev);
    }
  }

  if (spec_.classifier) {
    if (d_cls.size() != cls_.size())
      throw Error(ErrorCode::kShapeMismatch, "classifier gradient size differs from output");
    const Tensor& lat = latent();
    const Shape4 ls = lat.shape();
    const auto w = params_.value(cls_weight_);
    auto dw = params_.grad(cls_weight_);
    auto db = params_.grad(cls_bias_);
    Tensor& d_lat = d_enc[kStages - 1];
    const float inv_plane = 1.0f / static_cast<float>(ls.plane());
    for (int n = 0; n < ls.n; ++n) {
      const float c_out = cls_[static_cast<std::size_t>(n)];
      const float dl = d_cls[static_cast<std::size_t>(n)] * c_out * (1.0f - c_out);
      db[0] += dl;
      for (int c = 0; c < ls.c; ++c) {
        const auto cc = static_cast<std::size_t>(c);
        dw[cc] += dl * pooled_[static_cast<std::size_t>(n) * ls.c + cc];
        const float g = dl * w[cc] * inv_plane;
        float* dst = d_lat.plane(n, c);
        for (std::size_t i = 0; i < ls.plane(); ++i) dst[i] += g;
      }
    }
  }

  for (int i = kStages - 1; i >= 0; --i) {
    auto& stage = enc_[static_cast<std::size_t>(i)];
    Tensor d_mid, d_prev;
    unit_backward(stage.b, stage.a.a, d_enc[static_cast<std::size_t>(i)], &d_mid);
    const Tensor& x = i == 0 ? input_ : enc_[static_cast<std::size_t>(i - 1)].b.a;
    unit_backward(stage.a, x, d_mid, i > 0 ? &d_prev : nullptr);
    if (i > 0) add_into(d_prev, d_enc[static_cast<std::size_t>(i - 1)]);
  }
}

ModelBundle build_model(const ArchitectureSpec& spec, std::uint64_t init_seed) {
  ModelBundle bundle(spec);
  bundle.net.initialize(init_seed);
  Fnv1a h;
  h.update(spec.canonical()).update(std::string_view("init_seed")).update(init_seed);
  bundle.fingerprint = h.hex();
  return bundle;
}

std::uint64_t parameter_checksum(const SegNet& net) {
  Fnv1a h;
  h.update(hash_floats(net.params().values()));
  h.update(hash_floats(net.buffers().values()));
  return h.digest();
}

}  // namespace wsiseg
