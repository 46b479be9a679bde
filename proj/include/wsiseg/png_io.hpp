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

#include <filesystem>

#include "wsiseg/image.hpp"

namespace wsiseg {

RgbImage read_png_rgb(const std::filesystem::path& path);
void write_png_rgb(const std::filesystem::path& path, const RgbImage& image);

/// Masks are 8-bit grayscale PNGs with 0/255 encoding; any nonzero value
/// reads back as 1.
BinaryMask read_png_mask(const std::filesystem::path& path, int level_index,
                         MaskRole role);
void write_png_mask(const std::filesystem::path& path, const BinaryMask& mask);

}  // namespace wsiseg
