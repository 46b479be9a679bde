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
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace wsiseg {

/// Interleaved 8-bit RGB raster, row-major.
class RgbImage {
 public:
  RgbImage() = default;
  RgbImage(int width, int height, std::uint8_t fill = 255);

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return pixels_.empty(); }

  std::uint8_t* pixel(int x, int y) {
    return pixels_.data() + (static_cast<std::size_t>(y) * width_ + x) * 3;
  }
  const std::uint8_t* pixel(int x, int y) const {
    return pixels_.data() + (static_cast<std::size_t>(y) * width_ + x) * 3;
  }

  std::span<std::uint8_t> bytes() { return pixels_; }
  std::span<const std::uint8_t> bytes() const { return pixels_; }

  bool operator==(const RgbImage&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> pixels_;
};

enum class MaskRole { kTissue, kAnnotation, kPrediction };

std::string_view mask_role_name(MaskRole role);

/// Single-channel raster with values in {0, 1}, aligned to one pyramid level.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int width, int height, int level_index, MaskRole role,
             std::uint8_t fill = 0);

  int width() const { return width_; }
  int height() const { return height_; }
  int level_index() const { return level_index_; }
  MaskRole role() const { return role_; }
  void set_role(MaskRole role) { role_ = role; }

  std::uint8_t at(int x, int y) const {
    return values_[static_cast<std::size_t>(y) * width_ + x];
  }
  void set(int x, int y, std::uint8_t v) {
    values_[static_cast<std::size_t>(y) * width_ + x] = v ? 1 : 0;
  }

  std::span<std::uint8_t> values() { return values_; }
  std::span<const std::uint8_t> values() const { return values_; }

  std::size_t count() const;
  bool any() const { return count() > 0; }

  bool same_geometry(const BinaryMask& other) const {
    return width_ == other.width_ && height_ == other.height_ &&
           level_index_ == other.level_index_;
  }

  bool operator==(const BinaryMask&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  int level_index_ = 0;
  MaskRole role_ = MaskRole::kTissue;
  std::vector<std::uint8_t> values_;
};

/// Dense float raster (probability maps).
struct FloatMap {
  int width = 0;
  int height = 0;
  std::vector<float> values;

  FloatMap() = default;
  FloatMap(int w, int h, float fill = 0.0f)
      : width(w), height(h), values(static_cast<std::size_t>(w) * h, fill) {}

  float& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
  float at(int x, int y) const {
    return values[static_cast<std::size_t>(y) * width + x];
  }
};

/// 2x area-mean reduction; output is ceil(w/2) x ceil(h/2). Edge blocks
/// average only the pixels that exist. Means are rounded half up.
RgbImage downsample_rgb(const RgbImage& image);

/// 2x area-mean reduction followed by a >= 0.5 threshold.
BinaryMask downsample_mask(const BinaryMask& mask);

}  // namespace wsiseg
