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

#include "wsiseg/png_io.hpp"

#include <png.h>

#include <cstring>
#include <string>
#include <vector>

#include "wsiseg/error.hpp"

namespace wsiseg {
namespace {

struct PngImage {
  png_image image;
  PngImage() {
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
  }
  ~PngImage() { png_image_free(&image); }
  PngImage(const PngImage&) = delete;
  PngImage& operator=(const PngImage&) = delete;
};

std::vector<std::uint8_t> read_png(const std::filesystem::path& path,
                                   png_uint_32 format, int& width,
                                   int& height) {
  if (!std::filesystem::exists(path))
    throw Error(ErrorCode::kMissingFile, "missing file: " + path.string());
  PngImage png;
  if (!png_image_begin_read_from_file(&png.image, path.c_str()))
    throw Error(ErrorCode::kIo, "cannot decode " + path.string() + ": " +
                                    png.image.message);
  png.image.format = format;
  width = static_cast<int>(png.image.width);
  height = static_cast<int>(png.image.height);
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(png.image));
  if (!png_image_finish_read(&png.image, nullptr, buffer.data(), 0, nullptr))
    throw Error(ErrorCode::kIo, "cannot decode " + path.string() + ": " +
                                    png.image.message);
  return buffer;
}

void write_png(const std::filesystem::path& path, png_uint_32 format, int width,
               int height, const std::uint8_t* data) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  PngImage png;
  png.image.width = static_cast<png_uint_32>(width);
  png.image.height = static_cast<png_uint_32>(height);
  png.image.format = format;
  if (!png_image_write_to_file(&png.image, tmp.c_str(), 0, data, 0, nullptr))
    throw Error(ErrorCode::kIo, "cannot write " + path.string() + ": " +
                                    png.image.message);
  std::filesystem::rename(tmp, path);
}

}  // namespace

RgbImage read_png_rgb(const std::filesystem::path& path) {
  int w = 0, h = 0;
  auto buffer = read_png(path, PNG_FORMAT_RGB, w, h);
  RgbImage image(w, h);
  std::memcpy(image.bytes().data(), buffer.data(), buffer.size());
  return image;
}

void write_png_rgb(const std::filesystem::path& path, const RgbImage& image) {
  write_png(path, PNG_FORMAT_RGB, image.width(), image.height(),
            image.bytes().data());
}

BinaryMask read_png_mask(const std::filesystem::path& path, int level_index,
                         MaskRole role) {
  int w = 0, h = 0;
  auto buffer = read_png(path, PNG_FORMAT_GRAY, w, h);
  BinaryMask mask(w, h, level_index, role);
  auto values = mask.values();
  for (std::size_t i = 0; i < buffer.size(); ++i) values[i] = buffer[i] ? 1 : 0;
  return mask;
}

void write_png_mask(const std::filesystem::path& path, const BinaryMask& mask) {
  auto values = mask.values();
  std::vector<std::uint8_t> buffer(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) buffer[i] = values[i] ? 255 : 0;
  write_png(path, PNG_FORMAT_GRAY, mask.width(), mask.height(), buffer.data());
}

}  // namespace wsiseg
