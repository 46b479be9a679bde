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
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "wsiseg/error.hpp"
#include "wsiseg/tensor.hpp"

namespace wsiseg {

inline constexpr double kDiceSmoothing = 1.0;
inline constexpr double kBceClamp = 1e-7;

struct LossReport {
  double dice_loss = 0.0;
  double bce_loss = 0.0;
  double total = 0.0;
  int batch_size = 0;
};

/// Soft Dice loss summed over the whole batch:
/// 1 - (2 sum(p t) + eps) / (sum p + sum t + eps).
/// Writes dL/dp into grad when it is non-empty.
template <typename T>
T dice_loss(std::span<const T> pred, std::span<const T> target, std::span<T> grad,
            T eps = static_cast<T>(kDiceSmoothing)) {
  if (pred.size() != target.size() || (!grad.empty() && grad.size() != pred.size()))
    throw Error(ErrorCode::kShapeMismatch, "dice_loss: prediction and target sizes differ");
  double inter = 0.0, sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    inter += static_cast<double>(pred[i]) * static_cast<double>(target[i]);
    sum += static_cast<double>(pred[i]) + static_cast<double>(target[i]);
  }
  const double num = 2.0 * inter + static_cast<double>(eps);
  const double den = sum + static_cast<double>(eps);
  if (!grad.empty()) {
    const double inv_den2 = 1.0 / (den * den);
    for (std::size_t i = 0; i < pred.size(); ++i)
      grad[i] = static_cast<T>(-(2.0 * static_cast<double>(target[i]) * den - num) * inv_den2);
  }
  return static_cast<T>(1.0 - num / den);
}

/// Mean binary cross-entropy with predictions clamped to [1e-7, 1 - 1e-7].
/// The gradient is zero where the clamp is active.
template <typename T>
T bce_loss(std::span<const T> pred, std::span<const T> label, std::span<T> grad) {
  if (pred.size() != label.size() || pred.empty() ||
      (!grad.empty() && grad.size() != pred.size()))
    throw Error(ErrorCode::kShapeMismatch, "bce_loss: prediction and label sizes differ");
  const double lo = kBceClamp, hi = 1.0 - kBceClamp;
  const double inv_n = 1.0 / static_cast<double>(pred.size());
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = static_cast<double>(pred[i]);
    const double y = static_cast<double>(label[i]);
    const double pc = std::clamp(p, lo, hi);
    total -= y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc);
    if (!grad.empty()) {
      const bool active = p > lo && p < hi;
      grad[i] = active ? static_cast<T>((-y / pc + (1.0 - y) / (1.0 - pc)) * inv_n) : T(0);
    }
  }
  return static_cast<T>(total * inv_n);
}

struct LossGradients {
  Tensor d_seg;
  std::vector<float> d_cls;
};

/// Dice on the masks plus, in multitask mode, cls_weight * BCE on the
/// labels. Fills grads when non-null.
LossReport total_loss(const Tensor& seg_pred, const Tensor& seg_target,
                      std::span<const float> cls_pred, std::span<const float> cls_label,
                      bool multitask, LossGradients* grads = nullptr, double cls_weight = 1.0);

}  // namespace wsiseg
