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

#include "wsiseg/adam.hpp"

#include <cmath>

#include "wsiseg/error.hpp"
#include "wsiseg/simd/kernels.hpp"

namespace wsiseg {

Adam::Adam(AdamConfig config, std::size_t size) : config_(config), m_(size, 0.0f), v_(size, 0.0f) {
  if (!(config_.learning_rate > 0.0) || !(config_.beta1 >= 0.0 && config_.beta1 < 1.0) ||
      !(config_.beta2 >= 0.0 && config_.beta2 < 1.0) || !(config_.eps > 0.0))
    throw Error(ErrorCode::kConfig, "invalid Adam hyper-parameters");
}

void Adam::step(ParameterStore& params) {
  if (params.total() != m_.size())
    throw Error(ErrorCode::kShapeMismatch, "optimizer state does not match parameter count");
  ++t_;
  simd::AdamStep s{};
  s.lr = static_cast<float>(config_.learning_rate);
  s.beta1 = static_cast<float>(config_.beta1);
  s.beta2 = static_cast<float>(config_.beta2);
  s.eps = static_cast<float>(config_.eps);
  s.bias_correction1 = static_cast<float>(1.0 - std::pow(config_.beta1, static_cast<double>(t_)));
  s.bias_correction2 = static_cast<float>(1.0 - std::pow(config_.beta2, static_cast<double>(t_)));
  simd::kernels().adam_update(params.values().data(), params.grads().data(), m_.data(),
                              v_.data(), m_.size(), s);
}

}  // namespace wsiseg
