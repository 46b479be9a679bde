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

#include "wsiseg/image.hpp"

#include <algorithm>

namespace wsiseg {

RgbImage::RgbImage(int width, int height, std::uint8_t fill)
    : width_(width),
      height_(height),
      pixels_(static_cast<std::size_t>(width) * height * 3, fill) {}

std::string_view mask_role_name(MaskRole role) {
  switch (role) {
    case MaskRole::kTissue: return "tissue";
    case MaskRole::kAnnotation: return "annotation";
    case MaskRole::kPrediction: return "prediction";
  }
  return "unknown";
}

BinaryMask::BinaryMask(int width, int height, int level_index, MaskRole role,
                       std::uint8_t fill)
    : width_(width),
      height_(height),
      level_index_(level_index),
      role_(role),
      values_(static_cast<std::size_t>(width) * height, fill ? 1 : 0) {}

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(
      std::count(values_.begin(), values_.end(), std::uint8_t{1}));
}

RgbImage downsample_rgb(const RgbImage& image) {
  const int w = (image.width() + 1) / 2;
  const int h = (image.height() + 1) / 2;
  RgbImage out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      unsigned sum[3] = {0, 0, 0};
      unsigned n = 0;
      for (int dy = 0; dy < 2; ++dy) {
        for (int dx = 0; dx < 2; ++dx) {
          const int sx = 2 * x + dx;
          const int sy = 2 * y + dy;
          if (sx >= image.width() || sy >= image.height()) continue;
          const std::uint8_t* p = image.pixel(sx, sy);
          for (int c = 0; c < 3; ++c) sum[c] += p[c];
          ++n;
        }
      }
      std::uint8_t* q = out.pixel(x, y);
      for (int c = 0; c < 3; ++c)
        q[c] = static_cast<std::uint8_t>((2 * sum[c] + n) / (2 * n));
    }
  }
  return out;
}

BinaryMask downsample_mask(const BinaryMask& mask) {
  const int w = (mask.width() + 1) / 2;
  const int h = (mask.height() + 1) / 2;
  BinaryMask out(w, h, mask.level_index() + 1, mask.role());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      unsigned on = 0;
      unsigned n = 0;
      for (int dy = 0; dy < 2; ++dy) {
        for (int dx = 0; dx < 2; ++dx) {
          const int sx = 2 * x + dx;
          const int sy = 2 * y + dy;
          if (sx >= mask.width() || sy >= mask.height()) continue;
          on += mask.at(sx, sy);
          ++n;
        }
      }
      out.set(x, y, 2 * on >= n ? 1 : 0);
    }
  }
  return out;
}

}  // namespace wsiseg
