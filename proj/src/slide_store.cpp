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

#include "wsiseg/slide_store.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <json.hpp>

#include "wsiseg/error.hpp"
#include "wsiseg/fileio.hpp"
#include "wsiseg/png_io.hpp"

namespace wsiseg {
namespace {

using nlohmann::json;

constexpr double kResolutionTolerance = 1e-6;

[[noreturn]] void schema_error(const std::filesystem::path& path,
                               const std::string& what) {
  throw Error(ErrorCode::kSchemaViolation,
              "schema violation in " + path.string() + ": " + what);
}

template <typename T>
T require(const json& obj, const char* key, const std::filesystem::path& path) {
  if (!obj.contains(key)) schema_error(path, std::string("missing key '") + key + "'");
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    schema_error(path, std::string("wrong type for '") + key + "'");
  }
}

int ceil_div_pow2(int value, int power) {
  const long long d = 1LL << power;
  return static_cast<int>((value + d - 1) / d);
}

std::filesystem::path tile_path(const SlidePyramid& slide,
                                const PyramidLevel& level, int row, int col) {
  return slide.root / level.tile_dir /
         ("tile_" + std::to_string(row) + "_" + std::to_string(col) + ".png");
}

}  // namespace

std::string_view slide_label_name(SlideLabel label) {
  return label == SlideLabel::kPositive ? "positive" : "negative";
}

const PyramidLevel& SlidePyramid::level(int index) const {
  if (index < 0 || index >= static_cast<int>(levels.size()))
    throw Error(ErrorCode::kNoSuchLevel, "slide " + slide_id + " has no level " +
                                             std::to_string(index));
  return levels[static_cast<std::size_t>(index)];
}

SlidePyramid open_slide(const std::filesystem::path& manifest_path) {
  if (!std::filesystem::is_regular_file(manifest_path))
    throw Error(ErrorCode::kMissingFile,
                "missing slide manifest: " + manifest_path.string());
  json doc;
  {
    std::ifstream in(manifest_path);
    try {
      doc = json::parse(in);
    } catch (const json::parse_error& e) {
      schema_error(manifest_path, e.what());
    }
  }
  if (!doc.is_object()) schema_error(manifest_path, "top level is not an object");

  SlidePyramid slide;
  slide.root = manifest_path.parent_path();
  slide.slide_id = require<std::string>(doc, "slide_id", manifest_path);
  slide.patient_id = require<std::string>(doc, "patient_id", manifest_path);
  if (slide.slide_id.empty()) schema_error(manifest_path, "empty slide_id");
  if (slide.patient_id.empty()) schema_error(manifest_path, "empty patient_id");
  const auto label = require<std::string>(doc, "label", manifest_path);
  if (label == "positive") {
    slide.label = SlideLabel::kPositive;
  } else if (label == "negative") {
    slide.label = SlideLabel::kNegative;
  } else {
    schema_error(manifest_path, "label must be 'positive' or 'negative'");
  }
  if (!doc.contains("levels") || !doc["levels"].is_array() || doc["levels"].empty())
    schema_error(manifest_path, "'levels' must be a non-empty array");

  for (const auto& entry : doc["levels"]) {
    if (!entry.is_object()) schema_error(manifest_path, "level entry is not an object");
    PyramidLevel level;
    level.index = require<int>(entry, "index", manifest_path);
    level.um_per_px = require<double>(entry, "um_per_px", manifest_path);
    level.width = require<int>(entry, "width", manifest_path);
    level.height = require<int>(entry, "height", manifest_path);
    level.tile_dir = require<std::string>(entry, "tile_dir", manifest_path);
    level.tile_size = entry.value("tile_size", 512);
    if (!(level.um_per_px > 0.0) || !std::isfinite(level.um_per_px))
      schema_error(manifest_path, "um_per_px must be positive");
    if (level.width < 1 || level.height < 1)
      schema_error(manifest_path, "level dimensions must be >= 1");
    if (level.tile_size < 1) schema_error(manifest_path, "tile_size must be >= 1");
    slide.levels.push_back(std::move(level));
  }

  const PyramidLevel& base = slide.levels.front();
  for (std::size_t i = 0; i < slide.levels.size(); ++i) {
    const PyramidLevel& level = slide.levels[i];
    if (level.index != static_cast<int>(i))
      schema_error(manifest_path, "level indices must be 0..n-1 in order");
    if (i == 0) continue;
    if (!(level.um_per_px > slide.levels[i - 1].um_per_px))
      throw Error(ErrorCode::kLevelInconsistency,
                  "levels not strictly increasing in " + manifest_path.string());
    const double ratio = std::log2(level.um_per_px / base.um_per_px);
    const double power = std::round(ratio);
    if (std::abs(ratio - power) > kResolutionTolerance || power < 1 || power > 30)
      throw Error(ErrorCode::kLevelInconsistency,
                  "level " + std::to_string(i) +
                      " resolution is not a power-of-two multiple of level 0 in " +
                      manifest_path.string());
    const int p = static_cast<int>(power);
    if (level.width != ceil_div_pow2(base.width, p) ||
        level.height != ceil_div_pow2(base.height, p))
      throw Error(ErrorCode::kLevelInconsistency,
                  "level " + std::to_string(i) + " dimensions " +
                      std::to_string(level.width) + "x" +
                      std::to_string(level.height) + " do not match ceil(base / 2^" +
                      std::to_string(p) + ") in " + manifest_path.string());
  }
  return slide;
}

void write_manifest(const SlidePyramid& slide) {
  json doc;
  doc["slide_id"] = slide.slide_id;
  doc["patient_id"] = slide.patient_id;
  doc["label"] = slide_label_name(slide.label);
  doc["levels"] = json::array();
  for (const auto& level : slide.levels) {
    doc["levels"].push_back({{"index", level.index},
                             {"um_per_px", level.um_per_px},
                             {"width", level.width},
                             {"height", level.height},
                             {"tile_dir", level.tile_dir},
                             {"tile_size", level.tile_size}});
  }
  std::filesystem::create_directories(slide.root);
  const auto path = slide.root / kManifestName;
  write_file_atomic(path, doc.dump(2) + "\n");
}

void write_level_tiles(const SlidePyramid& slide, int level_index,
                       const RgbImage& raster) {
  const PyramidLevel& level = slide.level(level_index);
  if (raster.width() != level.width || raster.height() != level.height)
    throw Error(ErrorCode::kDimensionMismatch,
                "raster does not match level " + std::to_string(level_index));
  const int ts = level.tile_size;
  const int rows = (level.height + ts - 1) / ts;
  const int cols = (level.width + ts - 1) / ts;
  for (int row = 0; row < rows; ++row) {
    for (int col = 0; col < cols; ++col) {
      RgbImage tile(ts, ts, 255);
      const int x0 = col * ts;
      const int y0 = row * ts;
      const int w = std::min(ts, level.width - x0);
      const int h = std::min(ts, level.height - y0);
      for (int y = 0; y < h; ++y)
        std::memcpy(tile.pixel(0, y), raster.pixel(x0, y0 + y),
                    static_cast<std::size_t>(w) * 3);
      write_png_rgb(tile_path(slide, level, row, col), tile);
    }
  }
}

RgbImage read_region(const SlidePyramid& slide, int level_index, Point origin,
                     Size size) {
  const PyramidLevel& level = slide.level(level_index);
  RgbImage out(size.width, size.height, 255);
  const int x_begin = std::max(origin.x, 0);
  const int y_begin = std::max(origin.y, 0);
  const int x_end = std::min(origin.x + size.width, level.width);
  const int y_end = std::min(origin.y + size.height, level.height);
  if (x_begin >= x_end || y_begin >= y_end) return out;

  const int ts = level.tile_size;
  for (int row = y_begin / ts; row <= (y_end - 1) / ts; ++row) {
    for (int col = x_begin / ts; col <= (x_end - 1) / ts; ++col) {
      const RgbImage tile = read_png_rgb(tile_path(slide, level, row, col));
      if (tile.width() != ts || tile.height() != ts)
        throw Error(ErrorCode::kLevelInconsistency,
                    "tile size mismatch in " + tile_path(slide, level, row, col).string());
      const int tx0 = std::max(x_begin, col * ts);
      const int tx1 = std::min(x_end, (col + 1) * ts);
      const int ty0 = std::max(y_begin, row * ts);
      const int ty1 = std::min(y_end, (row + 1) * ts);
      for (int y = ty0; y < ty1; ++y) {
        std::memcpy(out.pixel(tx0 - origin.x, y - origin.y),
                    tile.pixel(tx0 - col * ts, y - row * ts),
                    static_cast<std::size_t>(tx1 - tx0) * 3);
      }
    }
  }
  return out;
}

RgbImage read_level(const SlidePyramid& slide, int level) {
  const PyramidLevel& l = slide.level(level);
  return read_region(slide, level, {0, 0}, {l.width, l.height});
}

LevelChoice level_for_resolution(const SlidePyramid& slide, double target_um) {
  if (slide.levels.empty())
    throw Error(ErrorCode::kNoSuchLevel, "slide " + slide.slide_id + " has no levels");
  const double finest = slide.levels.front().um_per_px;
  if (!(target_um >= finest * (1.0 - kResolutionTolerance)))
    throw Error(ErrorCode::kResolutionTooFine,
                "target resolution " + std::to_string(target_um) +
                    " um/px is finer than the finest level of " + slide.slide_id);
  LevelChoice choice;
  for (const auto& level : slide.levels) {
    if (level.um_per_px <= target_um * (1.0 + kResolutionTolerance))
      choice.level = level.index;
  }
  choice.rescale = target_um / slide.levels[static_cast<std::size_t>(choice.level)].um_per_px;
  if (std::abs(choice.rescale - 1.0) <= kResolutionTolerance) choice.rescale = 1.0;
  return choice;
}

BinaryMask detect_tissue(const RgbImage& raster, int level_index,
                         const TissueDetectorConfig& config) {
  BinaryMask mask(raster.width(), raster.height(), level_index, MaskRole::kTissue);
  for (int y = 0; y < raster.height(); ++y) {
    for (int x = 0; x < raster.width(); ++x) {
      const std::uint8_t* p = raster.pixel(x, y);
      const int hi = std::max({p[0], p[1], p[2]});
      const int lo = std::min({p[0], p[1], p[2]});
      const double value = hi / 255.0;
      const double saturation = hi == 0 ? 0.0 : static_cast<double>(hi - lo) / hi;
      mask.set(x, y, saturation >= config.min_saturation ||
                         value <= config.max_brightness);
    }
  }
  return mask;
}

BinaryMask compute_tissue_mask(const SlidePyramid& slide, int level,
                               const TissueDetectorConfig& config) {
  return detect_tissue(read_level(slide, level), level, config);
}

BinaryMask apply_tissue_mask(const BinaryMask& annotation,
                             const BinaryMask& tissue) {
  if (annotation.width() != tissue.width() ||
      annotation.height() != tissue.height() ||
      annotation.level_index() != tissue.level_index())
    throw Error(ErrorCode::kDimensionMismatch,
                "annotation and tissue mask differ in level or dimensions");
  BinaryMask out = annotation;
  out.set_role(MaskRole::kAnnotation);
  auto dst = out.values();
  auto t = tissue.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = dst[i] & t[i];
  return out;
}

std::filesystem::path mask_path(const SlidePyramid& slide, MaskRole role,
                                int level) {
  return slide.root / "masks" /
         (std::string(mask_role_name(role)) + "_level_" + std::to_string(level) +
          ".png");
}

BinaryMask read_mask(const SlidePyramid& slide, MaskRole role, int level) {
  const PyramidLevel& l = slide.level(level);
  BinaryMask mask = read_png_mask(mask_path(slide, role, level), level, role);
  if (mask.width() != l.width || mask.height() != l.height)
    throw Error(ErrorCode::kDimensionMismatch,
                "mask " + mask_path(slide, role, level).string() +
                    " does not match level dimensions");
  return mask;
}

void write_mask(const SlidePyramid& slide, const BinaryMask& mask) {
  write_png_mask(mask_path(slide, mask.role(), mask.level_index()), mask);
}

}  // namespace wsiseg
