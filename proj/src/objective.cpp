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

#include "wsiseg/objective.hpp"

namespace wsiseg {

LossReport total_loss(const Tensor& seg_pred, const Tensor& seg_target,
                      std::span<const float> cls_pred, std::span<const float> cls_label,
                      bool multitask, LossGradients* grads, double cls_weight) {
  if (!(seg_pred.shape() == seg_target.shape()))
    throw Error(ErrorCode::kShapeMismatch, "segmentation prediction and target shapes differ");
  LossReport report;
  report.batch_size = seg_pred.shape().n;
  std::span<float> d_seg;
  if (grads) {
    grads->d_seg.reshape(seg_pred.shape());
    d_seg = grads->d_seg.values();
  }
  report.dice_loss = dice_loss<float>(seg_pred.values(), seg_target.values(), d_seg);
  if (multitask) {
    if (cls_pred.empty() || cls_label.empty())
      throw Error(ErrorCode::kInvalidArgument, "multitask loss needs classifier outputs and labels");
    if (cls_pred.size() != static_cast<std::size_t>(report.batch_size))
      throw Error(ErrorCode::kShapeMismatch, "classifier output size differs from batch size");
    std::span<float> d_cls;
    if (grads) {
      grads->d_cls.assign(cls_pred.size(), 0.0f);
      d_cls = grads->d_cls;
    }
    report.bce_loss = bce_loss<float>(cls_pred, cls_label, d_cls);
    if (grads && cls_weight != 1.0)
      for (float& g : grads->d_cls) g = static_cast<float>(g * cls_weight);
  } else if (grads) {
    grads->d_cls.clear();
  }
  report.total = report.dice_loss + cls_weight * report.bce_loss;
  return report;
}

}  // namespace wsiseg
